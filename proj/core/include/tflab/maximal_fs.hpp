#pragma once

#include <nlohmann/json_fwd.hpp>

#include <vector>

#include "tflab/dyadic_core.hpp"

namespace tflab {

/// Cellwise stopping scale: cell i uses the dyadic interval of length 2^-scale(i).
class ScaleChoice {
 public:
  ScaleChoice() = default;
  ScaleChoice(int resolution, std::vector<int> scales);
  static ScaleChoice constant(int resolution, int scale);

  int resolution() const { return resolution_; }
  std::size_t size() const { return scales_.size(); }
  int scale(std::size_t cell) const { return scales_[cell]; }
  double kappa(std::size_t cell) const;
  const std::vector<int>& scales() const { return scales_; }

 private:
  int resolution_ = 0;
  std::vector<int> scales_ = std::vector<int>(1, 0);
};

/// Mf(x) = max over dyadic I containing x of the average of |f| over I.
GridSignal dyadic_maximal(const GridSignal& f);
std::vector<double> dyadic_maximal(std::span<const double> magnitudes, int resolution);

/// Greedy stopping scale realizing the dyadic maximal function of |f|
/// (coarsest scale among ties).
ScaleChoice greedy_scale_choice(const GridSignal& f);

/// Linearized maximal operator: Tf(x) = average of f over the interval of
/// length kappa(x) containing x.
GridSignal model_T(const GridSignal& f, const ScaleChoice& kappa);
GridSignal model_T_adjoint(const GridSignal& g, const ScaleChoice& kappa);

/// H minus the union of the dyadic intervals whose G-density is at least c|G|/|H|.
GridSet build_H_prime_fs(const GridSet& H, const GridSet& G, double c);
/// Mirror of build_H_prime_fs with the roles of G and H exchanged.
GridSet build_G_prime_fs(const GridSet& G, const GridSet& H, double c);

/// The set {M 1_S >= threshold}, a disjoint union of maximal dyadic intervals.
GridSet maximal_level_set(const GridSet& S, double threshold);

struct SizeMass {
  double size = 0.0;
  double mass = 0.0;
};

/// V_I = {x in I : kappa(x) = |I|}.
GridSet stopping_set(const DyadicInterval& I, const ScaleChoice& kappa);

SizeMass interval_size_mass(const DyadicInterval& I, const GridSet& E, const GridSet& H_prime, const GridSet& F,
                            const GridSet& G, const ScaleChoice& kappa);

struct IntervalBucket {
  int n = 0;  // size class: size in (2^{-n-1}, 2^{-n}]
  int m = 0;  // mass class
  double sum = 0.0;
  std::vector<DyadicInterval> intervals;
  std::vector<DyadicInterval> maximal;
  double maximal_measure = 0.0;
  /// sum over maximal J of |J|, divided by min{2^n|E|, 2^m|F|}.
  double count_bound_ratio = 0.0;
  /// bucket sum divided by 2^{-n-m} min{2^n|E|, 2^m|F|}.
  double bucket_constant = 0.0;
};

struct FsRestrictedReport {
  double s = 0.0;
  double lhs = 0.0;  // the full restricted double sum
  double rhs = 0.0;  // (|G|/|H|)^{1/s} |E|^{1/s} |F|^{1/s'}
  double ratio = 0.0;
  double max_size = 0.0;
  double max_mass = 0.0;
  double max_count_bound_ratio = 0.0;
  double max_bucket_constant = 0.0;
  std::vector<IntervalBucket> buckets;
};

/// The restricted bilinear sum over intervals meeting H', bucketed by
/// (size, mass) dyadic classes.
FsRestrictedReport fs_restricted_sum(const GridSet& E, const GridSet& F, const GridSet& H, const GridSet& H_prime,
                                     const GridSet& G, const ScaleChoice& kappa, double s);

struct FeffermanSteinReport {
  double p = 0.0;
  std::size_t family_size = 0;
  double lhs = 0.0;
  double rhs = 0.0;
  double ratio = 0.0;
};

FeffermanSteinReport verify_fefferman_stein(const VectorSignal& family, double p);

void to_json(nlohmann::json& j, const FsRestrictedReport& r);
void to_json(nlohmann::json& j, const FeffermanSteinReport& r);

}  // namespace tflab
