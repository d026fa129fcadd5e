#pragma once

#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <functional>
#include <optional>
#include <utility>
#include <vector>

#include "tflab/dyadic_core.hpp"

namespace tflab {

/// gamma(p) = 6^{max(p, p')}.
double gamma_of(double p);
/// 3 gamma(p)^{-min(1/p, 1/p')}; equals 1/2 for every p.
double decay_factor(double p);

/// One linear operator on signals of a fixed resolution, with optional adjoint.
struct LinearOp {
  int resolution = 0;
  std::function<GridSignal(const GridSignal&)> apply;
  std::function<GridSignal(const GridSignal&)> adjoint;
};

/// Indexed family T_j. A one-member family acts on every entry of a VectorSignal.
struct OperatorFamily {
  std::vector<LinearOp> members;
  /// Declared uniform L^2 bound, checked by measure_condition_P when set.
  std::optional<double> l2_bound;

  const LinearOp& at(std::size_t j) const { return members.size() == 1 ? members.front() : members.at(j); }
};

/// Rule (H, G, p) -> (H', G') with H' inside H and G' inside G.
using SubsetBuilder = std::function<std::pair<GridSet, GridSet>(const GridSet& H, const GridSet& G, double p)>;

/// Checks H' inside H, G' inside G and both halves of the measure condition.
bool satisfies_half_condition(const GridSet& H, const GridSet& G, const GridSet& Hp, const GridSet& Gp);

/// Removes from H the cells where the dyadic maximal function of 1_G is at least c|G|/|H|.
SubsetBuilder fs_h_builder(double c = 4.0);
/// Removes from G the cells where the dyadic maximal function of 1_H is at least c|H|/|G|.
SubsetBuilder fs_g_builder(double c = 4.0);

/// Iterates a half builder on its own residuals until |H \ H'| <= |H|/gamma
/// and |G \ G'| <= |G|/gamma.
SubsetBuilder gamma_refined(SubsetBuilder half, double gamma);

struct PowerIteration {
  double norm_squared = 0.0;
  int iterations = 0;
  bool converged = false;
  /// Rayleigh estimates per iteration (nondecreasing for S*S).
  std::vector<double> history;
};

/// Power iteration on S*S. Stops once the relative change is below tol.
PowerIteration operator_norm_squared(const std::function<GridSignal(const GridSignal&)>& S,
                                     const std::function<GridSignal(const GridSignal&)>& S_adjoint, int resolution,
                                     std::uint64_t seed, int max_iterations = 200, double tol = 1e-9);

struct MemberCondition {
  std::size_t j = 0;
  PowerIteration power;
  double ratio = 0.0;  // ||S_j||^2 / (|G|/|H|)^{1-2/p}
};

struct PrincipleReport {
  double p = 0.0;
  double measure_H = 0.0, measure_G = 0.0, measure_Hp = 0.0, measure_Gp = 0.0;
  bool builder_ok = false;
  double C_p = 0.0;
  double B_p = 0.0;
  double A_p = 0.0;
  bool converged = true;
  int max_iterations_used = 0;
  std::vector<MemberCondition> members;
};

/// Measures sup_j ||f -> T_j(f 1_H') 1_G'||^2 / (|G|/|H|)^{1-2/p}. Every member
/// needs an adjoint. `trials` independent start vectors are tried per member.
PrincipleReport measure_condition_P(const OperatorFamily& fam, const GridSet& H, const GridSet& G,
                                    const SubsetBuilder& sb, double p, int trials = 1, std::uint64_t seed = 0);

struct DecayLevel {
  int k = 0;
  std::size_t pairs = 0;
  double max_product_ratio = 0.0;  // max |G*||H*| / (|G||H|)
  double product_bound = 0.0;      // gamma^{-k}
  double weighted_sum = 0.0;       // sum (|G*|/|G|)^{1/p'} (|H*|/|H|)^{1/p}
  double budget = 0.0;             // 3^k gamma^{-k min(1/p,1/p')}
  bool ok = false;
};

struct DecayReport {
  double p = 0.0;
  double gamma = 0.0;
  std::vector<DecayLevel> levels;
  bool ok = true;
};

/// The recursive splitting of the error terms into residual pairs.
DecayReport iterate_error_decay(const GridSet& H, const GridSet& G, const SubsetBuilder& sb, double p, int k_max);

struct VectorBoundReport {
  double q = 0.0;
  double lhs = 0.0;
  double rhs = 0.0;
  double ratio = 0.0;
};

/// Both sides of the vector-valued bound ||(sum |T_j f_j|^2)^{1/2}||_q against
/// ||(sum |f_j|^2)^{1/2}||_q. Requires p0 < q < p1.
VectorBoundReport conclude_vector_bound(const OperatorFamily& fam, const VectorSignal& fams, double q, double p0,
                                        double p1);

/// Marcinkiewicz-type envelope 2 (q/(q-p0) + q/(p1-q))^{1/q} used to compare the
/// conclusion with the measured restricted constants.
double interpolation_envelope(double q, double p0, double p1);

void to_json(nlohmann::json& j, const PrincipleReport& r);
void to_json(nlohmann::json& j, const DecayReport& r);
void to_json(nlohmann::json& j, const VectorBoundReport& r);

}  // namespace tflab
