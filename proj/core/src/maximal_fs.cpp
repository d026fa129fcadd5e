#include "tflab/maximal_fs.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <nlohmann/json.hpp>
#include <unordered_set>

namespace tflab {

namespace {

void require_open_exponent(double p, const char* what) {
  if (!(p > 1.0) || !std::isfinite(p)) throw std::invalid_argument(std::string(what) + ": exponent must lie in (1, inf)");
}

// Heap-indexed sums of a per-cell quantity: leaf of cell i is N + i.
template <typename T>
std::vector<T> heap_sums(std::span<const T> leaves) {
  const std::size_t n = leaves.size();
  std::vector<T> sums(2 * n, T{});
  std::copy(leaves.begin(), leaves.end(), sums.begin() + static_cast<std::ptrdiff_t>(n));
  for (std::size_t id = n - 1; id >= 1; --id) sums[id] = sums[2 * id] + sums[2 * id + 1];
  return sums;
}

int heap_scale(std::size_t id) { return 63 - std::countl_zero(static_cast<std::uint64_t>(id)); }

}  // namespace

ScaleChoice::ScaleChoice(int resolution, std::vector<int> scales) : resolution_(resolution), scales_(std::move(scales)) {
  if (scales_.size() != (std::size_t{1} << resolution)) throw std::invalid_argument("scale choice length must be 2^L");
  for (int k : scales_)
    if (k < 0 || k > resolution) throw std::invalid_argument("scale choice values must be admissible dyadic lengths");
}

ScaleChoice ScaleChoice::constant(int resolution, int scale) {
  return ScaleChoice(resolution, std::vector<int>(std::size_t{1} << resolution, scale));
}

double ScaleChoice::kappa(std::size_t cell) const { return std::ldexp(1.0, -scales_[cell]); }

std::vector<double> dyadic_maximal(std::span<const double> magnitudes, int resolution) {
  const std::size_t n = magnitudes.size();
  if (n != (std::size_t{1} << resolution)) throw std::invalid_argument("dyadic_maximal: length must be 2^L");
  const auto sums = heap_sums(magnitudes);
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    double best = 0.0;
    for (std::size_t id = n + i; id >= 1; id >>= 1) best = std::max(best, std::ldexp(sums[id], heap_scale(id) - resolution));
    out[i] = best;
  }
  return out;
}

GridSignal dyadic_maximal(const GridSignal& f) {
  const auto a = f.abs();
  const auto m = dyadic_maximal(a, f.resolution());
  return GridSignal::from_real(f.resolution(), m);
}

ScaleChoice greedy_scale_choice(const GridSignal& f) {
  const int L = f.resolution();
  const std::size_t n = f.size();
  const auto a = f.abs();
  const auto sums = heap_sums(std::span<const double>(a));
  std::vector<int> scales(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    double best = -1.0;
    for (int k = 0; k <= L; ++k) {
      const std::size_t id = (n + i) >> (L - k);
      const double avg = std::ldexp(sums[id], k - L);
      if (avg > best) {
        best = avg;
        scales[i] = k;
      }
    }
  }
  return ScaleChoice(L, std::move(scales));
}

GridSignal model_T(const GridSignal& f, const ScaleChoice& kappa) {
  require_same_resolution(f.resolution(), kappa.resolution(), "model_T");
  const int L = f.resolution();
  const std::size_t n = f.size();
  const auto sums = heap_sums(f.values());
  GridSignal out(L);
  for (std::size_t i = 0; i < n; ++i) {
    const int k = kappa.scale(i);
    out[i] = sums[(n + i) >> (L - k)] * std::ldexp(1.0, k - L);
  }
  return out;
}

GridSignal model_T_adjoint(const GridSignal& g, const ScaleChoice& kappa) {
  require_same_resolution(g.resolution(), kappa.resolution(), "model_T_adjoint");
  const int L = g.resolution();
  const std::size_t n = g.size();
  std::vector<complex> acc(2 * n, complex{});
  for (std::size_t x = 0; x < n; ++x) {
    const int k = kappa.scale(x);
    acc[(n + x) >> (L - k)] += g[x] * std::ldexp(1.0, k - L);
  }
  // Push interval weights down to the cells they cover.
  for (std::size_t id = 2; id < 2 * n; ++id) acc[id] += acc[id >> 1];
  GridSignal out(L);
  for (std::size_t y = 0; y < n; ++y) out[y] = acc[n + y];
  return out;
}

GridSet maximal_level_set(const GridSet& S, double threshold) {
  const int L = S.resolution();
  const std::size_t n = S.size();
  const auto counts = interval_counts(S);
  GridSet out(L);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t id = n + i; id >= 1; id >>= 1) {
      if (std::ldexp(static_cast<double>(counts[id]), heap_scale(id) - L) >= threshold) {
        out.set(i, true);
        break;
      }
    }
  }
  return out;
}

GridSet build_H_prime_fs(const GridSet& H, const GridSet& G, double c) {
  require_same_resolution(H.resolution(), G.resolution(), "build_H_prime_fs");
  if (H.is_empty()) throw std::invalid_argument("build_H_prime_fs: H must have positive measure");
  if (G.is_empty()) return H;
  return H - maximal_level_set(G, c * measure(G) / measure(H));
}

GridSet build_G_prime_fs(const GridSet& G, const GridSet& H, double c) {
  require_same_resolution(H.resolution(), G.resolution(), "build_G_prime_fs");
  if (G.is_empty()) throw std::invalid_argument("build_G_prime_fs: G must have positive measure");
  if (H.is_empty()) return G;
  return G - maximal_level_set(H, c * measure(H) / measure(G));
}

GridSet stopping_set(const DyadicInterval& I, const ScaleChoice& kappa) {
  const int L = kappa.resolution();
  GridSet V(L);
  const std::size_t first = I.first_cell(L);
  for (std::size_t x = first; x < first + I.cell_count(L); ++x)
    if (kappa.scale(x) == I.scale) V.set(x, true);
  return V;
}

SizeMass interval_size_mass(const DyadicInterval& I, const GridSet& E, const GridSet& H_prime, const GridSet& F,
                            const GridSet& G, const ScaleChoice& kappa) {
  const int L = E.resolution();
  require_same_resolution(L, kappa.resolution(), "interval_size_mass");
  const GridSet EH = E & H_prime;
  const GridSet FGV = F & G & stopping_set(I, kappa);
  const std::size_t first = I.first_cell(L);
  const std::size_t cnt = I.cell_count(L);
  return {std::ldexp(static_cast<double>(EH.count_in(first, cnt)), I.scale - L),
          std::ldexp(static_cast<double>(FGV.count_in(first, cnt)), I.scale - L)};
}

FsRestrictedReport fs_restricted_sum(const GridSet& E, const GridSet& F, const GridSet& H, const GridSet& H_prime,
                                     const GridSet& G, const ScaleChoice& kappa, double s) {
  require_open_exponent(s, "fs_restricted_sum");
  const int L = E.resolution();
  for (const GridSet* S : {&F, &H, &H_prime, &G}) require_same_resolution(L, S->resolution(), "fs_restricted_sum");
  require_same_resolution(L, kappa.resolution(), "fs_restricted_sum");
  if (H.is_empty()) throw std::invalid_argument("fs_restricted_sum: H must have positive measure");

  const std::size_t n = E.size();
  const auto eh = interval_counts(E & H_prime);
  const auto hp = interval_counts(H_prime);
  const GridSet FG = F & G;
  std::vector<std::uint32_t> fgv(2 * n, 0);
  for (std::size_t x = 0; x < n; ++x)
    if (FG[x]) ++fgv[(n + x) >> (L - kappa.scale(x))];

  FsRestrictedReport report;
  report.s = s;
  std::vector<double> terms;
  std::map<std::pair<int, int>, IntervalBucket> buckets;
  for (std::size_t id = 1; id < 2 * n; ++id) {
    if (hp[id] == 0) continue;
    const int k = heap_scale(id);
    const double size = std::ldexp(static_cast<double>(eh[id]), k - L);
    const double mass = std::ldexp(static_cast<double>(fgv[id]), k - L);
    report.max_size = std::max(report.max_size, size);
    report.max_mass = std::max(report.max_mass, mass);
    if (size == 0.0 || mass == 0.0) continue;
    const double term = size * mass * std::ldexp(1.0, -k);
    terms.push_back(term);
    auto& b = buckets[{dyadic_class(size), dyadic_class(mass)}];
    b.sum += term;
    b.intervals.push_back(from_heap_id(id));
  }
  report.lhs = pairwise_sum(std::span<const double>(terms));

  const double mE = measure(E);
  const double mF = measure(F);
  for (auto& [key, b] : buckets) {
    b.n = key.first;
    b.m = key.second;
    std::unordered_set<std::uint64_t> members;
    for (const auto& I : b.intervals) members.insert(heap_id(I));
    for (const auto& I : b.intervals) {
      bool is_maximal = true;
      for (std::uint64_t a = heap_id(I) >> 1; a >= 1 && is_maximal; a >>= 1)
        if (members.count(a)) is_maximal = false;
      if (is_maximal) {
        b.maximal.push_back(I);
        b.maximal_measure += I.length();
      }
    }
    const double bound = std::min(std::ldexp(mE, b.n), std::ldexp(mF, b.m));
    b.count_bound_ratio = b.maximal_measure / bound;
    b.bucket_constant = b.sum / (std::ldexp(1.0, -b.n - b.m) * bound);
    report.max_count_bound_ratio = std::max(report.max_count_bound_ratio, b.count_bound_ratio);
    report.max_bucket_constant = std::max(report.max_bucket_constant, b.bucket_constant);
    report.buckets.push_back(std::move(b));
  }

  const double sp = s / (s - 1.0);
  report.rhs = std::pow(measure(G) / measure(H), 1.0 / s) * std::pow(mE, 1.0 / s) * std::pow(mF, 1.0 / sp);
  report.ratio = report.rhs > 0.0 ? report.lhs / report.rhs : 0.0;
  return report;
}

FeffermanSteinReport verify_fefferman_stein(const VectorSignal& family, double p) {
  require_open_exponent(p, "verify_fefferman_stein");
  std::vector<GridSignal> maxed;
  maxed.reserve(family.size());
  for (const auto& f : family.members()) maxed.push_back(dyadic_maximal(f));
  FeffermanSteinReport r;
  r.p = p;
  r.family_size = family.size();
  r.lhs = vector_lq_norm(VectorSignal(std::move(maxed)), p);
  r.rhs = vector_lq_norm(family, p);
  r.ratio = r.rhs > 0.0 ? r.lhs / r.rhs : 0.0;
  return r;
}

void to_json(nlohmann::json& j, const FsRestrictedReport& r) {
  j = nlohmann::json{{"lhs", r.lhs},
                     {"rhs", r.rhs},
                     {"ratio", r.ratio},
                     {"s", r.s},
                     {"max_count_bound_ratio", r.max_count_bound_ratio},
                     {"max_bucket_constant", r.max_bucket_constant}};
  auto& buckets = j["buckets"] = nlohmann::json::array();
  for (const auto& b : r.buckets)
    buckets.push_back({{"n", b.n}, {"m", b.m}, {"sum", b.sum}, {"count_bound_ratio", b.count_bound_ratio}});
}

void to_json(nlohmann::json& j, const FeffermanSteinReport& r) {
  j = nlohmann::json{{"lhs", r.lhs}, {"rhs", r.rhs}, {"ratio", r.ratio}, {"p", r.p}, {"family_size", r.family_size}};
}

}  // namespace tflab
