#include "tflab/directional.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <numbers>
#include <nlohmann/json.hpp>
#include <numeric>
#include <ostream>
#include <unordered_map>

#include "fft.hpp"
#include "tflab/maximal_fs.hpp"

namespace tflab {

namespace {

using detail::centered;

double dual(double p) { return p / (p - 1.0); }

// Applies a real multiplier given as a function of centered (kx, ky).
template <typename Mult>
Grid2D apply_multiplier(const Grid2D& f, Mult&& m) {
  const int L = f.resolution();
  const std::size_t N = f.side();
  std::vector<complex> z(f.values().begin(), f.values().end());
  detail::fft2(z, L, false);
  for (std::size_t a = 0; a < N; ++a)
    for (std::size_t b = 0; b < N; ++b) z[a * N + b] *= m(centered(a, N), centered(b, N));
  detail::fft2(z, L, true);
  return Grid2D(L, std::move(z));
}

double pnorm(std::span<const double> a, int L2, double p) { return lp_norm(a, L2, p); }

Grid2D real_grid(int L, std::span<const double> a) { return Grid2D(L, std::vector<complex>(a.begin(), a.end())); }

std::vector<double> squares_sum(const std::vector<Grid2D>& fam) {
  std::vector<double> s(fam.front().size(), 0.0);
  for (const auto& f : fam)
    for (std::size_t i = 0; i < s.size(); ++i) s[i] += std::norm(f.values()[i]);
  return s;
}

double integral(std::span<const double> a, int L2) {
  return std::ldexp(pairwise_sum(a), -L2);
}

// Smooth step: 0 for t <= 0, 1 for t >= 1, built from exp(-1/t).
double smooth_step(double t) {
  if (t <= 0.0) return 0.0;
  if (t >= 1.0) return 1.0;
  const double a = std::exp(-1.0 / t);
  const double b = std::exp(-1.0 / (1.0 - t));
  return a / (a + b);
}

// 1 for r <= 2^k, 0 for r >= 2^{k+1}.
double radial_cutoff(double r, int k) {
  if (r <= 0.0) return 1.0;
  return 1.0 - smooth_step(std::log2(r) - k);
}

void require_q_range(double q, double p, bool closed, const char* what) {
  if (!(p > 1.0) || !std::isfinite(p)) throw std::invalid_argument(std::string(what) + ": p must lie in (1, inf)");
  if (!(q > 1.0) || !std::isfinite(q)) throw std::invalid_argument(std::string(what) + ": q must lie in (1, inf)");
  const double gap = std::abs(1.0 - 2.0 / q) - 1.0 / p;
  if (closed ? gap > 1e-12 : gap >= 0.0) throw std::invalid_argument(std::string(what) + ": q outside the admissible range");
}

}  // namespace

Direction::Direction(double vx, double vy) {
  const double n = std::hypot(vx, vy);
  if (!(n > 0.0) || !std::isfinite(n)) throw std::invalid_argument("Direction: need a nonzero finite vector");
  x = vx / n;
  y = vy / n;
}

DirectionSet::DirectionSet(std::vector<Direction> dirs) : dirs_(std::move(dirs)) {
  if (dirs_.empty()) throw std::invalid_argument("DirectionSet: need at least one direction");
  for (std::size_t i = 0; i < dirs_.size(); ++i)
    for (std::size_t j = i + 1; j < dirs_.size(); ++j)
      if (std::hypot(dirs_[i].x - dirs_[j].x, dirs_[i].y - dirs_[j].y) < 1e-12)
        throw std::invalid_argument("DirectionSet: directions must be distinct");
}

DirectionSet DirectionSet::uniform(std::size_t n) {
  std::vector<Direction> d;
  for (std::size_t i = 0; i < n; ++i) {
    if (i == 0)
      d.emplace_back(1.0, 0.0);
    else if (2 * i == n)
      d.emplace_back(0.0, 1.0);
    else
      d.push_back(Direction::from_angle(std::numbers::pi * double(i) / double(n)));
  }
  return DirectionSet(std::move(d));
}

void write_directions_csv(std::ostream& out, const DirectionSet& s) {
  out << "vx,vy\n";
  out.precision(17);
  for (const auto& v : s.directions()) out << v.x << ',' << v.y << '\n';
}

DirectionSet read_directions_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw CsvError(1, "missing header");
  if (csv_fields(line) != std::vector<std::string>{"vx", "vy"}) throw CsvError(1, "expected header 'vx,vy'");
  std::vector<Direction> dirs;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    const auto fields = csv_fields(line);
    if (fields.size() != 2) throw CsvError(row, "expected 2 fields");
    try {
      dirs.emplace_back(csv_double(fields[0], row), csv_double(fields[1], row));
    } catch (const CsvError&) {
      throw;
    } catch (const std::invalid_argument& e) {
      throw CsvError(row, e.what());
    }
  }
  try {
    return DirectionSet(std::move(dirs));
  } catch (const std::invalid_argument& e) {
    throw CsvError(row, e.what());
  }
}

Grid2D halfplane_Hv(const Grid2D& f, const Direction& v) {
  const Direction w = v.perp();
  const double zero = v.lex_positive() ? 1.0 : 0.0;
  return apply_multiplier(f, [&](long kx, long ky) {
    if (kx == 0 && ky == 0) return zero;
    const double s = double(kx) * v.x + double(ky) * v.y;
    const double tol = 1e-12 * std::hypot(double(kx), double(ky));
    if (s > tol) return 1.0;
    if (s < -tol) return 0.0;
    return double(kx) * w.x + double(ky) * w.y > 0.0 ? 1.0 : 0.0;
  });
}

DirectionalMaximal::DirectionalMaximal(int resolution, const DirectionSet& dirs) : resolution_(resolution) {
  if (resolution < 0 || 2 * resolution > kMaxResolution)
    throw std::invalid_argument("DirectionalMaximal: resolution out of range");
  const std::size_t N = std::size_t{1} << resolution;
  for (const auto& v : dirs.directions()) {
    const Direction w = v.perp();
    for (int a = 0; a <= resolution; ++a)
      for (int b = 0; b <= resolution; ++b) {
        std::vector<std::uint32_t> lab(N * N);
        std::unordered_map<std::int64_t, std::uint32_t> ids;
        std::vector<double> cnt;
        for (std::size_t x = 0; x < N; ++x)
          for (std::size_t y = 0; y < N; ++y) {
            const double cx = (double(x) + 0.5) / double(N), cy = (double(y) + 0.5) / double(N);
            const auto m = std::int64_t(std::floor(std::ldexp(cx * v.x + cy * v.y, a)));
            const auto n = std::int64_t(std::floor(std::ldexp(cx * w.x + cy * w.y, b)));
            const std::int64_t key = (m + (std::int64_t{1} << 30)) * (std::int64_t{1} << 32) + n + (std::int64_t{1} << 30);
            auto [it, fresh] = ids.try_emplace(key, std::uint32_t(cnt.size()));
            if (fresh) cnt.push_back(0.0);
            cnt[it->second] += 1.0;
            lab[(x << resolution) + y] = it->second;
          }
        labels_.push_back(std::move(lab));
        counts_.push_back(std::move(cnt));
      }
  }
}

std::vector<double> DirectionalMaximal::apply_choose(std::span<const double> a, Choice* c) const {
  const std::size_t n = a.size();
  if (n != (std::size_t{1} << (2 * resolution_))) throw ResolutionMismatch("DirectionalMaximal: wrong grid size");
  std::vector<double> best(n, 0.0);
  if (c) c->family.assign(n, 0);
  std::vector<double> sums;
  for (std::size_t f = 0; f < labels_.size(); ++f) {
    const auto& lab = labels_[f];
    sums.assign(counts_[f].size(), 0.0);
    for (std::size_t i = 0; i < n; ++i) sums[lab[i]] += a[i];
    for (std::size_t i = 0; i < n; ++i) {
      const double avg = sums[lab[i]] / counts_[f][lab[i]];
      if (avg > best[i]) {
        best[i] = avg;
        if (c) c->family[i] = std::uint32_t(f);
      }
    }
  }
  return best;
}

std::vector<double> DirectionalMaximal::apply(std::span<const double> a) const { return apply_choose(a, nullptr); }

Grid2D DirectionalMaximal::apply(const Grid2D& f) const {
  require_same_resolution(f.resolution(), resolution_, "DirectionalMaximal");
  const auto a = f.abs();
  return real_grid(resolution_, apply(a));
}

std::vector<double> DirectionalMaximal::apply_linear(const Choice& c, std::span<const double> a) const {
  const std::size_t n = a.size();
  std::vector<double> out(n, 0.0);
  std::vector<double> sums;
  for (std::size_t f = 0; f < labels_.size(); ++f) {
    const auto& lab = labels_[f];
    sums.assign(counts_[f].size(), 0.0);
    for (std::size_t i = 0; i < n; ++i) sums[lab[i]] += a[i];
    for (std::size_t i = 0; i < n; ++i)
      if (c.family[i] == f) out[i] = sums[lab[i]] / counts_[f][lab[i]];
  }
  return out;
}

std::vector<double> DirectionalMaximal::adjoint_linear(const Choice& c, std::span<const double> a) const {
  const std::size_t n = a.size();
  std::vector<double> out(n, 0.0);
  std::vector<double> acc;
  for (std::size_t f = 0; f < labels_.size(); ++f) {
    const auto& lab = labels_[f];
    acc.assign(counts_[f].size(), 0.0);
    bool any = false;
    for (std::size_t i = 0; i < n; ++i)
      if (c.family[i] == f) acc[lab[i]] += a[i] / counts_[f][lab[i]], any = true;
    if (!any) continue;
    for (std::size_t i = 0; i < n; ++i) out[i] += acc[lab[i]];
  }
  return out;
}

double DirectionalMaximal::operator_norm(double p, std::uint64_t seed, int iterations) const {
  if (!(p > 1.0) || !std::isfinite(p)) throw std::invalid_argument("operator_norm: p must lie in (1, inf)");
  const int L2 = 2 * resolution_;
  const std::size_t n = std::size_t{1} << L2;
  const std::size_t N = std::size_t{1} << resolution_;
  CounterRng rng(seed);
  std::vector<std::vector<double>> starts;
  std::vector<double> x(n);
  for (auto& v : x) v = 1.0 + rng.uniform();
  starts.push_back(x);
  std::fill(x.begin(), x.end(), 0.0);
  x[(N / 2 << resolution_) + N / 2] = 1.0;
  starts.push_back(x);
  for (auto& v : x) v = rng.bernoulli(0.05) ? 1.0 : 0.0;
  x[0] = 1.0;
  starts.push_back(x);

  double best = 1.0;  // constants are fixed points
  const double pp = dual(p);
  for (auto x0 : starts) {
    for (int it = 0; it < iterations; ++it) {
      const double nx = pnorm(x0, L2, p);
      if (!(nx > 0.0)) break;
      Choice c;
      const auto y = apply_choose(x0, &c);
      best = std::max(best, pnorm(y, L2, p) / nx);
      std::vector<double> yp(n);
      for (std::size_t i = 0; i < n; ++i) yp[i] = std::pow(y[i], p - 1.0);
      auto z = adjoint_linear(c, yp);
      for (auto& v : z) v = std::pow(std::max(v, 0.0), pp - 1.0);
      const double nz = pnorm(z, L2, p);
      if (!(nz > 0.0)) break;
      for (auto& v : z) v /= nz;
      x0 = std::move(z);
    }
  }
  return best;
}

double DirectionalMaximal::a2_constant(std::span<const double> w) const {
  double best = 0.0;
  const std::size_t n = w.size();
  std::vector<double> s1, s2;
  for (std::size_t f = 0; f < labels_.size(); ++f) {
    const auto& lab = labels_[f];
    s1.assign(counts_[f].size(), 0.0);
    s2.assign(counts_[f].size(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      s1[lab[i]] += w[i];
      s2[lab[i]] += 1.0 / w[i];
    }
    for (std::size_t b = 0; b < s1.size(); ++b) best = std::max(best, s1[b] * s2[b] / (counts_[f][b] * counts_[f][b]));
  }
  return best;
}

Grid2D directional_maximal(const Grid2D& f, const DirectionSet& dirs) {
  return DirectionalMaximal(f.resolution(), dirs).apply(f);
}

int annular_band_count(int resolution) { return resolution + 1; }

Grid2D annular_Sk(const Grid2D& f, int k) {
  const int L = f.resolution();
  if (k < 0 || k > L) throw std::invalid_argument("annular_Sk: band must lie in [0, L]");
  return apply_multiplier(f, [&](long kx, long ky) {
    const double r = std::hypot(double(kx), double(ky));
    const double upper = k == L ? 1.0 : radial_cutoff(r, k);
    const double lower = k == 0 ? 0.0 : radial_cutoff(r, k - 1);
    return upper - lower;
  });
}

RademacherReport rademacher_equivalence_check(const std::vector<Grid2D>& fams, double q, int trials,
                                              std::uint64_t seed) {
  if (!(q > 2.0) || !std::isfinite(q)) throw std::invalid_argument("rademacher_equivalence_check: q must exceed 2");
  if (fams.empty()) throw std::invalid_argument("rademacher_equivalence_check: empty family");
  if (trials < 1) throw std::invalid_argument("rademacher_equivalence_check: need at least one trial");
  const int L = fams.front().resolution();
  for (const auto& f : fams) require_same_resolution(L, f.resolution(), "rademacher_equivalence_check");
  const int K = annular_band_count(L);
  std::vector<std::vector<Grid2D>> pieces;  // [j][k]
  std::vector<Grid2D> all;
  for (const auto& f : fams) {
    pieces.emplace_back();
    for (int k = 0; k < K; ++k) {
      pieces.back().push_back(annular_Sk(f, k));
      all.push_back(pieces.back().back());
    }
  }
  RademacherReport r;
  r.q = q;
  r.family_size = fams.size();
  r.trials = trials;
  r.square_lhs = vector_lq_norm(all, q);
  r.square_rhs = vector_lq_norm(fams, q);
  r.square_ratio = r.square_rhs > 0.0 ? r.square_lhs / r.square_rhs : 0.0;
  CounterRng rng(seed);
  double mean = 0.0;
  r.draw_min = std::numeric_limits<double>::infinity();
  for (int t = 0; t < trials; ++t) {
    std::vector<double> rk(K), rj(fams.size());
    for (auto& s : rk) s = rng.bernoulli(0.5) ? 1.0 : -1.0;
    for (auto& s : rj) s = rng.bernoulli(0.5) ? 1.0 : -1.0;
    Grid2D sum(L);
    for (std::size_t j = 0; j < fams.size(); ++j)
      for (int k = 0; k < K; ++k)
        for (std::size_t i = 0; i < sum.size(); ++i) sum.values()[i] += rk[k] * rj[j] * pieces[j][k].values()[i];
    const double nq = lp_norm(sum, q);
    mean += std::pow(nq, q) / trials;
    const double ratio = r.square_lhs > 0.0 ? nq / r.square_lhs : 0.0;
    r.draw_min = std::min(r.draw_min, ratio);
    r.draw_max = std::max(r.draw_max, ratio);
  }
  r.khintchine_ratio = r.square_lhs > 0.0 ? std::pow(mean, 1.0 / q) / r.square_lhs : 0.0;
  return r;
}

WeightFn build_weight_a1(const Grid2D& g, const DirectionSet& dirs, double p, int K, std::optional<double> norm_M,
                         std::uint64_t seed) {
  return build_weight_a1(g, DirectionalMaximal(g.resolution(), dirs), p, K, norm_M, seed);
}

WeightFn build_weight_a1(const Grid2D& g, const DirectionalMaximal& M, double p, int K, std::optional<double> norm_M,
                         std::uint64_t seed) {
  if (K < 1) throw std::invalid_argument("build_weight_a1: K must be at least 1");
  if (!(p > 1.0) || !std::isfinite(p)) throw std::invalid_argument("build_weight_a1: p must lie in (1, inf)");
  const int L = g.resolution();
  require_same_resolution(L, M.resolution(), "build_weight_a1");
  const int L2 = 2 * L;
  std::vector<double> g0(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    const complex v = g.values()[i];
    if (v.imag() != 0.0 || v.real() < 0.0) throw std::invalid_argument("build_weight_a1: g must be nonnegative");
    g0[i] = v.real();
  }
  if (*std::max_element(g0.begin(), g0.end()) <= 0.0) throw std::invalid_argument("build_weight_a1: g vanishes");

  // Orbit M^k g for k = 0..K+1.
  std::vector<std::vector<double>> orbit{g0};
  for (int k = 1; k <= K + 1; ++k) orbit.push_back(M.apply(orbit.back()));
  WeightFn out;
  double lambda = norm_M ? *norm_M : M.operator_norm(p, seed);
  for (int k = 0; k <= K; ++k) {
    const double a = pnorm(orbit[k], L2, p), b = pnorm(orbit[k + 1], L2, p);
    if (a > 0.0) lambda = std::max(lambda, b / a);
  }
  out.norm_M = lambda;
  out.K = K;
  std::vector<double> w(g0.size(), 0.0);
  for (int k = K; k >= 0; --k) {
    const double c = std::pow(2.0 * lambda, -k);
    for (std::size_t i = 0; i < w.size(); ++i) w[i] += c * orbit[k][i];
  }
  const double ginf = *std::max_element(g0.begin(), g0.end());
  const double tail_c = std::pow(2.0 * lambda, -K);
  for (double v : orbit[K + 1]) out.tail = std::max(out.tail, tail_c * v);
  out.tail_bound = tail_c * std::pow(lambda, K + 1) * ginf;

  out.dominates_g = true;
  for (std::size_t i = 0; i < w.size(); ++i) out.dominates_g = out.dominates_g && g0[i] <= w[i];
  out.w_norm = pnorm(w, L2, p);
  out.g_norm = pnorm(g0, L2, p);
  out.norm_ok = out.w_norm <= 2.0 * out.g_norm;
  const auto Mw = M.apply(w);
  out.a1_ok = true;
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double bound = 2.0 * lambda * w[i] + tail_c * orbit[K + 1][i];
    out.a1_ok = out.a1_ok && Mw[i] <= bound * (1.0 + 1e-12);
    if (w[i] > 0.0) out.a1_ratio = std::max(out.a1_ratio, Mw[i] / w[i]);
  }
  out.w = real_grid(L, w);
  return out;
}

AConstants a_constants(const GridSignal& u) {
  const int L = u.resolution();
  const std::size_t n = u.size();
  std::vector<double> a(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!(u[i].real() > 0.0) || u[i].imag() != 0.0) throw std::invalid_argument("a_constants: weight must be positive");
    a[i] = u[i].real();
  }
  const auto Mu = dyadic_maximal(a, L);
  AConstants r;
  for (std::size_t i = 0; i < n; ++i) r.A1 = std::max(r.A1, Mu[i] / a[i]);
  for (int k = 0; k <= L; ++k) {
    const std::size_t len = n >> k;
    for (std::size_t off = 0; off < (std::size_t{1} << k); ++off) {
      double s = 0.0, si = 0.0, inf_M = std::numeric_limits<double>::infinity(), sup_inv = 0.0;
      for (std::size_t i = off * len; i < (off + 1) * len; ++i) {
        s += a[i];
        si += 1.0 / a[i];
        inf_M = std::min(inf_M, Mu[i]);
        sup_inv = std::max(sup_inv, 1.0 / a[i]);
      }
      const double prod = (s / double(len)) * (si / double(len));
      r.A2 = std::max(r.A2, prod);
      const double mid = 2.0 * inf_M * sup_inv;
      r.chain_ok = r.chain_ok && prod <= mid * (1.0 + 1e-12) && mid <= 2.0 * r.A1 * (1.0 + 1e-12);
    }
  }
  return r;
}

GridSignal hilbert_transform(const GridSignal& f) {
  const int L = f.resolution();
  const std::size_t n = f.size();
  std::vector<complex> z(f.values().begin(), f.values().end());
  detail::fft1(z, L, false);
  for (std::size_t k = 0; k < n; ++k) {
    const long c = centered(k, n);
    if (c == 0 || (n > 1 && k == n / 2))
      z[k] = 0.0;
    else
      z[k] *= complex(0.0, c > 0 ? -1.0 : 1.0);
  }
  detail::fft1(z, L, true);
  return GridSignal(L, std::move(z));
}

WeightedHilbertReport weighted_hilbert_check(const GridSignal& f, const GridSignal& u) {
  require_same_resolution(f.resolution(), u.resolution(), "weighted_hilbert_check");
  const AConstants a = a_constants(u);
  const GridSignal h = hilbert_transform(f);
  std::vector<double> t1(f.size()), t2(f.size());
  for (std::size_t i = 0; i < f.size(); ++i) {
    t1[i] = std::norm(h[i]) * u[i].real();
    t2[i] = std::norm(f[i]) * u[i].real();
  }
  WeightedHilbertReport r;
  r.A1 = a.A1;
  r.lhs = integral(t1, f.resolution());
  r.rhs = a.A1 * a.A1 * integral(t2, f.resolution());
  r.C = r.rhs > 0.0 ? r.lhs / r.rhs : 0.0;
  return r;
}

Thm61Report verify_thm61(const std::vector<Grid2D>& fams, const DirectionSet& dirs, double q, double p,
                         const DirectionalOptions& opt) {
  require_q_range(q, p, false, "verify_thm61");
  if (fams.empty()) throw std::invalid_argument("verify_thm61: empty family");
  const int L = fams.front().resolution();
  for (const auto& f : fams) require_same_resolution(L, f.resolution(), "verify_thm61");
  Thm61Report r;
  r.q = q;
  r.p = p;
  r.family_size = fams.size();
  std::vector<Grid2D> out;
  for (std::size_t j = 0; j < fams.size(); ++j) out.push_back(halfplane_Hv(fams[j], dirs[j % dirs.size()]));
  r.lhs = vector_lq_norm(out, q);
  r.rhs = vector_lq_norm(fams, q);
  r.ratio = r.rhs > 0.0 ? r.lhs / r.rhs : 0.0;

  const DirectionalMaximal M(L, dirs);
  r.norm_M = opt.norm_M ? *opt.norm_M : M.operator_norm(2.0, opt.seed);
  if (opt.principle_trials > 0) {
    OperatorFamily ops;
    for (std::size_t j = 0; j < dirs.size(); ++j)
      for (int k = 0; k < annular_band_count(L); ++k) {
        const Direction v = dirs[j];
        const auto T = [v, k](const GridSignal& g) { return annular_Sk(halfplane_Hv(Grid2D::from_flat(g), v), k).flat(); };
        ops.members.push_back({2 * L, T, T});
      }
    const double lam = r.norm_M;
    const SubsetBuilder sb = [&M, lam](const GridSet& H, const GridSet& G, double) {
      if (G.is_empty()) return std::make_pair(H, G);
      std::vector<double> ind(G.mask().begin(), G.mask().end());
      const auto mg = M.apply(ind);
      for (double c = 2.0;; c *= 2.0) {
        const double thr = c * std::sqrt(measure(G) / measure(H)) * lam;
        GridSet Hp = H;
        for (std::size_t i = 0; i < Hp.size(); ++i)
          if (mg[i] >= thr) Hp.set(i, false);
        if (2 * Hp.count() >= H.count()) return std::make_pair(Hp, G);
      }
    };
    const double p1 = 4.0 - 0.25;
    CounterRng rng(opt.seed);
    PrincipleReport worst;
    for (int t = 0; t < opt.principle_trials; ++t) {
      CounterRng tr = rng.split(std::uint64_t(t));
      const GridSet H = random_rect_union(L, tr, 6, 1);
      const GridSet G = random_rect_union(L, tr, 1 + int(tr.below(2)), std::max(1, L / 2));
      auto rep = measure_condition_P(ops, H, G, sb, p1, 1, tr.key());
      if (t == 0 || rep.C_p > worst.C_p) worst = std::move(rep);
    }
    r.principle = std::move(worst);
  }
  return r;
}

Thm62Report verify_thm62(const std::vector<Grid2D>& fams, const DirectionSet& dirs, double q, double p,
                         const DirectionalOptions& opt) {
  require_q_range(q, p, true, "verify_thm62");
  if (fams.empty()) throw std::invalid_argument("verify_thm62: empty family");
  const int L = fams.front().resolution();
  const int L2 = 2 * L;
  for (const auto& f : fams) require_same_resolution(L, f.resolution(), "verify_thm62");
  Thm62Report r;
  r.q = q;
  r.p = p;
  r.family_size = fams.size();
  std::vector<Grid2D> out;
  for (std::size_t j = 0; j < fams.size(); ++j) out.push_back(halfplane_Hv(fams[j], dirs[j % dirs.size()]));
  r.lhs = vector_lq_norm(out, q);
  r.rhs = vector_lq_norm(fams, q);
  r.ratio = r.rhs > 0.0 ? r.lhs / r.rhs : 0.0;

  const DirectionalMaximal M(L, dirs);
  r.norm_M = opt.norm_M ? *opt.norm_M : M.operator_norm(p, opt.seed);
  r.normalized = r.ratio / std::pow(r.norm_M, std::abs(1.0 - 2.0 / q));

  const double pp = dual(p);
  r.endpoint = std::abs(q - 2.0 * pp) <= 1e-12 * q;
  if (!r.endpoint || r.lhs == 0.0) return r;

  // Dual extremizer of sum |H f|^2 in L^{p'}: g = s^{p'-1} / ||s||_{p'}^{p'-1}.
  const auto s = squares_sum(out);
  const auto sf = squares_sum(fams);
  const double ns = pnorm(s, L2, pp);
  std::vector<double> g(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) g[i] = std::pow(s[i], pp - 1.0) / std::pow(ns, pp - 1.0);
  WeightFn wf = build_weight_a1(real_grid(L, g), M, p, opt.weight_terms, r.norm_M, opt.seed);
  std::vector<double> w(g.size());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = wf.w.values()[i].real();

  std::vector<double> t(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) t[i] = s[i] * g[i];
  r.chain_g = integral(t, L2);
  for (std::size_t i = 0; i < s.size(); ++i) t[i] = s[i] * w[i];
  r.chain_w = integral(t, L2);
  for (std::size_t i = 0; i < s.size(); ++i) t[i] = sf[i] * w[i];
  r.chain_fw = integral(t, L2);
  r.chain_holder = pnorm(sf, L2, pp) * wf.w_norm;
  const double slack = 1.0 + 1e-12;
  r.chain_ok = r.chain_g <= r.chain_w * slack && r.chain_fw <= r.chain_holder * slack && wf.norm_ok &&
               wf.dominates_g && wf.a1_ok;

  r.A1 = wf.a1_ratio;
  r.A2 = M.a2_constant(w);
  for (std::size_t j = 0; j < fams.size(); ++j) {
    std::vector<double> a(w.size()), b(w.size());
    for (std::size_t i = 0; i < w.size(); ++i) {
      a[i] = std::norm(out[j].values()[i]) * w[i];
      b[i] = std::norm(fams[j].values()[i]) * w[i];
    }
    const double den = integral(b, L2);
    if (den > 0.0) r.C21 = std::max(r.C21, integral(a, L2) / den / std::pow(2.0 * wf.norm_M, 2.0));
  }
  r.weight = std::move(wf);
  return r;
}

void to_json(nlohmann::json& j, const RademacherReport& r) {
  j = nlohmann::json{{"q", r.q},
                     {"family_size", r.family_size},
                     {"trials", r.trials},
                     {"square_lhs", r.square_lhs},
                     {"square_rhs", r.square_rhs},
                     {"square_ratio", r.square_ratio},
                     {"khintchine_ratio", r.khintchine_ratio},
                     {"draw_min", r.draw_min},
                     {"draw_max", r.draw_max}};
}

void to_json(nlohmann::json& j, const WeightFn& w) {
  j = nlohmann::json{{"norm_MSigma", w.norm_M}, {"K", w.K},          {"dominates_g", w.dominates_g},
                     {"norm_ok", w.norm_ok},    {"a1_ok", w.a1_ok},  {"w_norm", w.w_norm},
                     {"g_norm", w.g_norm},      {"tail", w.tail},    {"tail_bound", w.tail_bound},
                     {"a1_ratio", w.a1_ratio}};
}

void to_json(nlohmann::json& j, const Thm61Report& r) {
  j = nlohmann::json{{"q", r.q},     {"p", r.p},         {"family_size", r.family_size},
                     {"lhs", r.lhs}, {"rhs", r.rhs},     {"ratio", r.ratio},
                     {"norm_MSigma", r.norm_M}};
  if (r.principle) j["principle"] = *r.principle;
}

void to_json(nlohmann::json& j, const Thm62Report& r) {
  j = nlohmann::json{{"q", r.q},
                     {"p", r.p},
                     {"family_size", r.family_size},
                     {"lhs", r.lhs},
                     {"rhs", r.rhs},
                     {"ratio", r.ratio},
                     {"norm_MSigma", r.norm_M},
                     {"normalized", r.normalized},
                     {"endpoint", r.endpoint},
                     {"chain", {r.chain_g, r.chain_w, r.chain_fw, r.chain_holder}},
                     {"chain_ok", r.chain_ok},
                     {"A1", r.A1},
                     {"A2", r.A2},
                     {"C21", r.C21}};
  if (r.weight) j["weight"] = *r.weight;
}

}  // namespace tflab
