#pragma once

#include <nlohmann/json_fwd.hpp>

#include <cmath>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <vector>

#include "tflab/biparam.hpp"
#include "tflab/principle.hpp"

namespace tflab {

/// Unit vector in the plane; the constructor normalizes.
struct Direction {
  double x = 1.0;
  double y = 0.0;

  Direction() = default;
  Direction(double vx, double vy);
  static Direction from_angle(double theta) { return {std::cos(theta), std::sin(theta)}; }

  Direction perp() const { return Direction(-y, x); }
  Direction operator-() const { return Direction(-x, -y); }
  bool lex_positive() const { return x > 0.0 || (x == 0.0 && y > 0.0); }
};

/// Nonempty list of pairwise distinct directions.
class DirectionSet {
 public:
  DirectionSet() : DirectionSet(std::vector<Direction>{Direction()}) {}
  explicit DirectionSet(std::vector<Direction> dirs);
  /// n directions at angles pi i / n.
  static DirectionSet uniform(std::size_t n);

  std::size_t size() const { return dirs_.size(); }
  const Direction& operator[](std::size_t i) const { return dirs_[i]; }
  const std::vector<Direction>& directions() const { return dirs_; }

 private:
  std::vector<Direction> dirs_;
};

// CSV: `vx,vy`.
void write_directions_csv(std::ostream& out, const DirectionSet& s);
DirectionSet read_directions_csv(std::istream& in);

/// Fourier multiplier 1 on {xi.v > 0} plus {xi.v = 0, xi.v_perp > 0}; the zero
/// frequency belongs to S_v iff v is lexicographically positive.
Grid2D halfplane_Hv(const Grid2D& f, const Direction& v);

/// Maximal averages over the rasterized rotated boxes of every direction in a
/// set. For each v and each pair (a, b) in [0, L]^2 the plane is tiled by boxes
/// of side 2^-a along v and 2^-b along v_perp; a box is the set of cells whose
/// centers it contains and averages are taken over those cells.
class DirectionalMaximal {
 public:
  DirectionalMaximal(int resolution, const DirectionSet& dirs);

  int resolution() const { return resolution_; }
  std::size_t families() const { return labels_.size(); }

  Grid2D apply(const Grid2D& f) const;
  std::vector<double> apply(std::span<const double> a) const;

  /// Measured ||M||_{p->p} on this family: the largest ratio ||M x||_p / ||x||_p
  /// seen by a power method on the linearizations, from several starts.
  double operator_norm(double p, std::uint64_t seed, int iterations = 40) const;

  /// Largest ratio of avg_R w * avg_R (1/w) over the family.
  double a2_constant(std::span<const double> w) const;

 private:
  // Per cell, the (family, box) attaining the supremum.
  struct Choice {
    std::vector<std::uint32_t> family;
  };
  std::vector<double> apply_linear(const Choice& c, std::span<const double> a) const;
  std::vector<double> adjoint_linear(const Choice& c, std::span<const double> a) const;
  std::vector<double> apply_choose(std::span<const double> a, Choice* c) const;

  int resolution_;
  std::vector<std::vector<std::uint32_t>> labels_;  // per family, box id per cell
  std::vector<std::vector<double>> counts_;         // per family, cells per box
};

Grid2D directional_maximal(const Grid2D& f, const DirectionSet& dirs);

/// Smooth radial bands: S_0 covers |xi| <= 1 and S_k, 1 <= k <= L, lives on
/// 2^{k-1} < |xi| < 2^{k+1} (lattice units). The bands sum to the identity.
Grid2D annular_Sk(const Grid2D& f, int k);
int annular_band_count(int resolution);

struct RademacherReport {
  double q = 0.0;
  std::size_t family_size = 0;
  int trials = 0;
  /// ||(sum_{j,k} |S_k f_j|^2)^{1/2}||_q and ||(sum_j |f_j|^2)^{1/2}||_q.
  double square_lhs = 0.0;
  double square_rhs = 0.0;
  double square_ratio = 0.0;
  /// (E int |sum r_k r_j S_k f_j|^q)^{1/q} over square_lhs, and the range of
  /// the single-draw values of the same quotient.
  double khintchine_ratio = 0.0;
  double draw_min = 0.0;
  double draw_max = 0.0;
};

RademacherReport rademacher_equivalence_check(const std::vector<Grid2D>& fams, double q, int trials,
                                              std::uint64_t seed = 0);

struct WeightFn {
  Grid2D w;
  double norm_M = 0.0;  // the Lambda used in the series
  int K = 0;
  /// g <= w, ||w||_p <= 2 ||g||_p and M w <= 2 Lambda w + tail, all checked on the grid.
  bool dominates_g = false;
  bool norm_ok = false;
  bool a1_ok = false;
  double w_norm = 0.0, g_norm = 0.0;
  double tail = 0.0;        // max of (2 Lambda)^{-K} M^{K+1} g
  double tail_bound = 0.0;  // (2 Lambda)^{-K} Lambda^{K+1} ||g||_inf
  double a1_ratio = 0.0;    // max of M w / w
};

/// Truncated series sum_{k=0}^K (2 Lambda)^{-k} M^k g. Lambda is the larger of
/// the supplied (or measured) operator norm and the ratios ||M^{k+1} g||_p / ||M^k g||_p
/// along the orbit, so the norm certificate holds exactly.
WeightFn build_weight_a1(const Grid2D& g, const DirectionSet& dirs, double p, int K,
                         std::optional<double> norm_M = std::nullopt, std::uint64_t seed = 0);
WeightFn build_weight_a1(const Grid2D& g, const DirectionalMaximal& M, double p, int K,
                         std::optional<double> norm_M = std::nullopt, std::uint64_t seed = 0);

struct AConstants {
  double A1 = 0.0;
  double A2 = 0.0;
  /// avg_I u * avg_I u^{-1} <= 2 inf_I Mu * sup_I u^{-1} <= 2 A1 on every dyadic I.
  bool chain_ok = true;
};

/// A1 = sup Mu/u with the dyadic maximal function; A2 over dyadic intervals.
AConstants a_constants(const GridSignal& u);

/// Periodic discrete Hilbert transform, multiplier -i sign(k), zero at 0 and Nyquist.
GridSignal hilbert_transform(const GridSignal& f);

struct WeightedHilbertReport {
  double lhs = 0.0;  // int |Hf|^2 u
  double rhs = 0.0;  // A1^2 int |f|^2 u
  double C = 0.0;
  double A1 = 0.0;
};

WeightedHilbertReport weighted_hilbert_check(const GridSignal& f, const GridSignal& u);

struct Thm61Report {
  double q = 0.0, p = 0.0;
  std::size_t family_size = 0;
  double lhs = 0.0, rhs = 0.0, ratio = 0.0;
  double norm_M = 0.0;
  /// Condition P for C_{j,k} = S_k H_{v_j}(f 1_H') 1_G at the upper exponent.
  std::optional<PrincipleReport> principle;
};

struct Thm62Report {
  double q = 0.0, p = 0.0;
  std::size_t family_size = 0;
  double lhs = 0.0, rhs = 0.0, ratio = 0.0;
  double norm_M = 0.0;
  /// ratio / ||M||^{|1-2/q|}
  double normalized = 0.0;
  bool endpoint = false;
  // Weight route at q = 2p': int sum |H f|^2 g <= int sum |H f|^2 w,
  // int sum |f|^2 w <= ||sum |f|^2||_{p'} ||w||_p.
  double chain_g = 0.0, chain_w = 0.0, chain_fw = 0.0, chain_holder = 0.0;
  bool chain_ok = true;
  double A1 = 0.0, A2 = 0.0, C21 = 0.0;
  std::optional<WeightFn> weight;
};

struct DirectionalOptions {
  std::uint64_t seed = 0;
  /// Measured norm of M_Sigma at p; measured when absent.
  std::optional<double> norm_M;
  int weight_terms = 40;
  /// Trials of condition P in verify_thm61 (0 skips it).
  int principle_trials = 0;
};

/// Member j is paired with direction j mod |Sigma|.
Thm61Report verify_thm61(const std::vector<Grid2D>& fams, const DirectionSet& dirs, double q, double p,
                         const DirectionalOptions& opt = {});
Thm62Report verify_thm62(const std::vector<Grid2D>& fams, const DirectionSet& dirs, double q, double p,
                         const DirectionalOptions& opt = {});

void to_json(nlohmann::json& j, const RademacherReport& r);
void to_json(nlohmann::json& j, const WeightFn& w);
void to_json(nlohmann::json& j, const Thm61Report& r);
void to_json(nlohmann::json& j, const Thm62Report& r);

}  // namespace tflab
