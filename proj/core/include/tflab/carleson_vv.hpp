#pragma once

#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "tflab/dyadic_core.hpp"
#include "tflab/walsh_tiles.hpp"

namespace tflab {

/// S_{A,B} f = T(f 1_B) 1_A with T the Walsh model sum over S.
struct RestrictedOp {
  GridSet A;
  GridSet B;
  ChoiceFunction N;
  TileCollection S;

  int resolution() const { return S.resolution(); }
  void validate() const;
};

GridSignal apply_SAB(const GridSignal& f, const RestrictedOp& op);
GridSignal apply_SAB_adjoint(const GridSignal& g, const RestrictedOp& op);

/// H minus {M 1_G >= c |G|/|H|}.
GridSet build_H_prime_c(const GridSet& H, const GridSet& G, double c);
/// G minus {M 1_H >= c |H|/|G|}.
GridSet build_G_prime_c(const GridSet& G, const GridSet& H, double c);

/// Bi-tiles of S whose spatial interval meets `set`.
TileCollection tiles_meeting(const TileCollection& S, const GridSet& set);

/// Per cell, the frequency cell maximizing |T_N f(x)| over all choices of N(x).
ChoiceFunction greedy_choice(const GridSignal& f, const TileCollection& S);

struct PairingReport {
  double pairing = 0.0;        // |<S f, g>|
  double triangle = 0.0;       // sum_P |<f 1_B, phi_P1>| |I_P|^{1/2} dens_P(F cap A)
  double tree_constant = 0.0;  // max over trees of the tree sum / (|I_T| 2^{-n} 2^{-m})
  double bucket_majorant = 0.0;
  double majorant = 0.0;  // the t-interpolated double sum
  double max_size = 0.0;
  double max_mass = 0.0;
  double max_counting_ratio = 0.0;
  std::size_t buckets = 0;
  /// pairing <= triangle <= bucket_majorant <= majorant
  bool chain_ok = false;
};

/// Both sides of |<S f, g>| <= sum_{n,m} 2^{-n-m} (2^m |F|)^{1/t'} (2^{2n} |E|)^{1/t}
/// with the constants of the decomposition measured along the way.
PairingReport restricted_pairing(const GridSignal& f, const GridSignal& g, const GridSet& E, const GridSet& F,
                                 const RestrictedOp& op, double t);

struct NormOptions {
  int iterations = 60;
  std::uint64_t seed = 0;
  /// Constant choices k 2^L / n_constants + 1/2, k < n_constants.
  int n_constants = 4;
  int n_random = 2;
  /// Rounds of greedy N alternating with power iteration.
  int greedy_rounds = 2;
};

struct NormResult {
  double norm = 0.0;
  std::string worst;  // label of the maximizing choice function
};

/// ||S_{A,B}||_{2->2} for a fixed N, by power iteration on S*S.
double restricted_norm(const RestrictedOp& op, int iterations = 60, std::uint64_t seed = 0);
/// Worst case over constant, random and greedy choice functions.
NormResult adversarial_norm(const GridSet& A, const GridSet& B, const TileCollection& S, const NormOptions& opt = {});

enum class Branch { HPrime, GPrime };

struct LadderPoint {
  double ratio = 0.0;  // |G|/|H| (H' branch) or |H|/|G| (G' branch)
  double norm = 0.0;
  double log_ratio = 0.0;
  double log_norm = 0.0;
  double removed = 0.0;  // measure taken out by the exceptional set
  double cap = 0.0;      // mass cap 4|G|/|H| or the size level 4|H|/|G|
  double max_level = 0.0;  // measured mass (H') or size bound (G') of the retained tiles
  std::string worst;
};

struct Estimate22Report {
  Branch branch = Branch::HPrime;
  double eps = 0.0;
  double c = 4.0;
  std::vector<LadderPoint> points;
  double slope = 0.0;
  double intercept = 0.0;
  bool slope_ok = false;
  bool measure_ok = true;  // |H'| >= |H|/2 (resp. |G'| >= |G|/2) on every rung
  bool cap_ok = true;
};

/// Rungs (G, H) with measure ratio about 2^{-i}, i = 1..rungs; the small set is
/// a random dyadic union, the large one the full square.
std::vector<std::pair<GridSet, GridSet>> ratio_ladder(int resolution, int rungs, std::uint64_t seed,
                                                      Branch branch = Branch::HPrime);

/// Measures ||S_{G,H'}|| (or ||S_{G',H}||) on every rung and fits log-norm
/// against log of the measure ratio.
Estimate22Report estimate_22(const std::vector<std::pair<GridSet, GridSet>>& ladder, double eps, Branch branch,
                             const NormOptions& opt = {});

struct Thm71Report {
  double p = 0.0;
  std::size_t family_size = 0;
  double lhs = 0.0, rhs = 0.0, ratio = 0.0;
  double greedy_lhs = 0.0, greedy_ratio = 0.0;
  double max_ratio = 0.0;
};

/// ||(sum |C_j f_j|^2)^{1/2}||_p against ||(sum |f_j|^2)^{1/2}||_p, member j
/// using N_family[j mod size] and, separately, its own greedy choice.
Thm71Report verify_thm71(const VectorSignal& fams, const std::vector<ChoiceFunction>& N_family, double p);

void to_json(nlohmann::json& j, const PairingReport& r);
void to_json(nlohmann::json& j, const Estimate22Report& r);
void to_json(nlohmann::json& j, const Thm71Report& r);

}  // namespace tflab
