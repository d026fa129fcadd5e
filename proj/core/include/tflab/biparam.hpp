#pragma once

#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <vector>

#include "tflab/dyadic_core.hpp"
#include "tflab/rng.hpp"

namespace tflab {

/// Complex samples on the 2^L x 2^L cells of [0,1)^2. Cell (x, y) is stored at
/// x 2^L + y; x indexes the horizontal coordinate.
///
/// Sets over the square are GridSets of resolution 2L under the same flattening,
/// so measure() and the set algebra carry over unchanged.
class Grid2D {
 public:
  Grid2D() = default;
  explicit Grid2D(int resolution);
  Grid2D(int resolution, std::vector<complex> values);

  static Grid2D from_flat(const GridSignal& flat);
  GridSignal flat() const;

  int resolution() const { return resolution_; }
  std::size_t side() const { return std::size_t{1} << resolution_; }
  std::size_t size() const { return values_.size(); }

  complex& operator()(std::size_t x, std::size_t y) { return values_[(x << resolution_) + y]; }
  const complex& operator()(std::size_t x, std::size_t y) const { return values_[(x << resolution_) + y]; }
  std::span<const complex> values() const { return values_; }
  std::span<complex> values() { return values_; }

  std::vector<double> abs() const;

  Grid2D& operator+=(const Grid2D& other);

 private:
  int resolution_ = 0;
  std::vector<complex> values_ = std::vector<complex>(1);
};

/// Side resolution of a set over the square (its resolution must be even).
int square_resolution(const GridSet& set);

double lp_norm(const Grid2D& f, double p);
Grid2D restrict_to(const Grid2D& f, const GridSet& set);
/// Pointwise (sum_i |f_i|^2)^{1/2} measured in L^p of the square.
double vector_lq_norm(const std::vector<Grid2D>& family, double q);

struct DyadicRectangle {
  DyadicInterval I;  // horizontal
  DyadicInterval J;  // vertical

  double area() const { return I.length() * J.length(); }
  bool contains(const DyadicRectangle& other) const { return I.contains(other.I) && J.contains(other.J); }
  bool fits(int resolution) const { return I.scale <= resolution && J.scale <= resolution; }
  /// Cells of the rectangle as a set over the square at resolution L.
  GridSet as_set(int resolution) const;

  auto operator<=>(const DyadicRectangle&) const = default;
};

/// Sup over dyadic rectangles containing each cell of the average of |f|.
Grid2D strong_maximal(const Grid2D& f);
/// {M* 1_S > threshold}.
GridSet strong_level_set(const GridSet& S, double threshold);

/// Tensor Haar packet h_I (x) h_J; needs both scales below L.
Grid2D tensor_packet(const DyadicRectangle& R, int resolution);

/// sum over R = I x J with |J| = 2^-j of <f, phi_R> phi_R.
Grid2D model_Tj(const Grid2D& f, int j);
/// Vertical Walsh band [2^j, 2^{j+1}); j = -1 is the zero frequency alone.
Grid2D littlewood_paley_Sj2(const Grid2D& f, int j);

/// H minus every dyadic rectangle whose G-density exceeds c_eps (|G|/|H|)^{1-eps}.
GridSet build_H_prime_biparam(const GridSet& H, const GridSet& G, double eps, double c_eps);

/// sup over sets S and levels v of v (|{M* 1_S >= v}| / |S|)^{1/p}.
double strong_weak_constant(const std::vector<GridSet>& sets, double p);
/// Test sets used to calibrate c_eps: single cells, single rectangles and
/// random rectangle unions.
std::vector<GridSet> strong_weak_test_sets(int resolution, CounterRng& rng, int random_sets);
/// c_eps = 2^{1/p} W with p = 1/(1-eps), W the measured weak constant.
double calibrate_c_eps(int resolution, double eps, std::uint64_t seed, int random_sets = 32);

/// Rectangles of one vertical scale j, horizontal scales 0..L-1.
class RectCollection {
 public:
  RectCollection() : RectCollection(1, 0) {}
  RectCollection(int resolution, int j);
  static RectCollection all(int resolution, int j);
  /// All rectangles of vertical scale j meeting `set`.
  static RectCollection meeting(const GridSet& set, int j);

  int resolution() const { return resolution_; }
  int j() const { return j_; }
  std::size_t size() const { return count_; }
  bool empty() const { return count_ == 0; }
  bool admissible(const DyadicRectangle& R) const;
  bool contains(const DyadicRectangle& R) const;
  void insert(const DyadicRectangle& R);
  void erase(const DyadicRectangle& R);
  std::vector<DyadicRectangle> rects() const;

  bool is_convex() const;
  RectCollection operator-(const RectCollection& other) const;
  bool operator==(const RectCollection&) const = default;

  std::size_t index(const DyadicRectangle& R) const;
  DyadicRectangle at(std::size_t index) const;
  std::size_t capacity() const { return present_.size(); }
  bool contains_index(std::size_t i) const { return present_[i] != 0; }

 private:
  int resolution_;
  int j_;
  std::vector<std::uint8_t> present_;
  std::size_t count_ = 0;
};

struct RectTree {
  DyadicRectangle top;
  std::vector<DyadicRectangle> members;

  /// Same vertical scale, inside the top, convex.
  bool valid(int resolution) const;
};

/// size: max over trees T in the collection of (|R_T|^{-1} sum |<f 1_H', phi_R>|^2)^{1/2}.
double rect_size(const RectCollection& R, const Grid2D& f, const GridSet& H_prime);
/// mass: max over members of |R cap F cap G| / |R|.
double rect_mass(const RectCollection& R, const GridSet& F, const GridSet& G);

struct RectTreeEstimate {
  double lhs = 0.0;
  double rhs = 0.0;
  double ratio = 0.0;
  double size = 0.0;
  double mass = 0.0;
};

/// Both sides of sum_T |<f 1_H', phi_R>||<psi_R, g 1_G>| <= C |R_T| size(T) mass(T).
RectTreeEstimate rect_tree_estimate(const RectTree& T, const Grid2D& f, const Grid2D& g, const GridSet& H_prime,
                                    const GridSet& G, const GridSet& F);

struct RectBucket {
  int n = 0;
  int m = 0;
  bool by_size = true;
  std::vector<RectTree> trees;
  double top_measure = 0.0;
  /// top_measure / min(2^{2n} |E|, 2^m |F|)
  double counting_ratio = 0.0;
};

struct RectDecomposition {
  std::vector<RectBucket> buckets;
  std::vector<RectTree> residual;
  double max_counting_ratio = 0.0;
  bool convex_throughout = true;
};

/// Alternating size/mass decomposition of a convex collection into trees.
RectDecomposition rect_decompose(const RectCollection& R, const Grid2D& f, const GridSet& H_prime, const GridSet& E,
                                 const GridSet& F, const GridSet& G);

/// Random tree of vertical scale j below a random top of horizontal scale at most max_top_scale.
RectTree random_rect_tree(int resolution, int j, CounterRng& rng, double keep, int max_top_scale);
/// Union of `count` random dyadic rectangles with side scales in [min_scale, L].
GridSet random_rect_union(int resolution, CounterRng& rng, int count, int min_scale);
/// Family of J signals mixing random sub-indicators and their band-limited parts.
std::vector<Grid2D> random_grid_family(int resolution, std::size_t J, CounterRng& rng);

struct Thm51Options {
  int trials = 8;
  std::uint64_t seed = 0;
  /// Lower exponent for the restricted estimate, q < 2 < p.
  double q = 1.5;
  /// Fixed c_eps; calibrated from the strong maximal weak constant when absent.
  std::optional<double> c_eps;
};

struct Thm51Trial {
  double measure_H = 0.0, measure_G = 0.0, measure_Hp = 0.0;
  double c_eps = 0.0;  // after any doubling
  double mass_cap = 0.0;
  double max_mass = 0.0;
  double max_size = 0.0;
  double restricted_lhs = 0.0;  // max over j
  double ratio_p = 0.0;         // against (|G|/|H|)^{(1-eps)/p} |E|^{1/p} |F|^{1/p'}
  double ratio_q = 0.0;         // against |E|^{1/q} |F|^{1/q'}
  double ratio_2 = 0.0;         // at exponent 2 with the interpolated power of |G|/|H|
  double counting_ratio = 0.0;
  double C_p = 0.0;
  bool measure_ok = false;
  bool mass_ok = false;
};

struct Thm51Report {
  double p = 0.0, q = 0.0, eps = 0.0;
  std::size_t family_size = 0;
  double lhs = 0.0, rhs = 0.0, ratio = 0.0;
  /// Reduction f_j := S_j^2 f of the first member: scalar and vector ratios.
  double scalar_ratio = 0.0;
  double reduction_ratio = 0.0;
  double c_eps = 0.0;
  /// theta with 1/2 = theta/p + (1-theta)/q, and the resulting power theta (1-eps)/p.
  double theta = 0.0;
  double exponent = 0.0;
  double K_p = 0.0, K_q = 0.0, K_2 = 0.0;
  bool interpolation_ok = true;
  bool measure_ok = true;
  bool mass_ok = true;
  double max_counting_ratio = 0.0;
  double max_C_p = 0.0;
  std::vector<Thm51Trial> trials;
};

/// Member i of the family is paired with the vertical scale i mod L.
Thm51Report verify_thm51(const std::vector<Grid2D>& fam, double p, double eps, const Thm51Options& opt = {});

// CSV: `row,col,re,im` with row the horizontal index.
void write_grid2d_csv(std::ostream& out, const Grid2D& f);
Grid2D read_grid2d_csv(std::istream& in);

void to_json(nlohmann::json& j, const RectTreeEstimate& r);
void to_json(nlohmann::json& j, const Thm51Report& r);

}  // namespace tflab
