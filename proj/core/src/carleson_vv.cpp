#include "tflab/carleson_vv.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <nlohmann/json.hpp>
#include <stdexcept>
#include <tuple>

#include "tflab/maximal_fs.hpp"
#include "tflab/random_data.hpp"
#include "tflab/rng.hpp"

namespace tflab {

namespace {

double norm2(const GridSignal& f) { return lp_norm(f, 2.0); }

GridSignal random_start(const GridSet& B, CounterRng& rng) {
  GridSignal x(B.resolution());
  for (std::size_t i = 0; i < x.size(); ++i)
    if (B[i]) x[i] = {rng.normal(), rng.normal()};
  return x;
}

// Power iteration on S*S; returns the best ||S x|| seen and its unit x.
std::pair<double, GridSignal> power_iterate(const RestrictedOp& op, GridSignal x, int iterations) {
  double best = 0.0;
  GridSignal best_x = x;
  for (int it = 0; it < iterations; ++it) {
    const double nx = norm2(x);
    if (!(nx > 0.0)) break;
    x *= complex(1.0 / nx);
    const GridSignal y = apply_SAB(x, op);
    const double ny = norm2(y);
    if (ny > best) {
      best = ny;
      best_x = x;
    }
    x = apply_SAB_adjoint(y, op);
  }
  return {best, best_x};
}

std::pair<double, double> fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = double(x.size());
  double sx = 0.0, sy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) sx += x[i], sy += y[i];
  const double mx = sx / n, my = sy / n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  const double slope = sxx > 0.0 ? sxy / sxx : 0.0;
  return {slope, my - slope * mx};
}

}  // namespace

void RestrictedOp::validate() const {
  const int L = S.resolution();
  require_same_resolution(L, A.resolution(), "RestrictedOp");
  require_same_resolution(L, B.resolution(), "RestrictedOp");
  require_same_resolution(L, N.resolution(), "RestrictedOp");
}

GridSignal apply_SAB(const GridSignal& f, const RestrictedOp& op) {
  op.validate();
  require_same_resolution(f.resolution(), op.resolution(), "apply_SAB");
  return restrict_to(model_carleson(restrict_to(f, op.B), op.N, op.S), op.A);
}

GridSignal apply_SAB_adjoint(const GridSignal& g, const RestrictedOp& op) {
  op.validate();
  require_same_resolution(g.resolution(), op.resolution(), "apply_SAB_adjoint");
  return restrict_to(model_carleson_adjoint(restrict_to(g, op.A), op.N, op.S), op.B);
}

GridSet build_H_prime_c(const GridSet& H, const GridSet& G, double c) {
  require_same_resolution(H.resolution(), G.resolution(), "build_H_prime_c");
  if (H.is_empty()) throw std::invalid_argument("build_H_prime_c: H must have positive measure");
  if (G.is_empty()) return H;
  return H - maximal_level_set(G, c * measure(G) / measure(H));
}

GridSet build_G_prime_c(const GridSet& G, const GridSet& H, double c) {
  require_same_resolution(H.resolution(), G.resolution(), "build_G_prime_c");
  if (G.is_empty()) throw std::invalid_argument("build_G_prime_c: G must have positive measure");
  if (H.is_empty()) return G;
  return G - maximal_level_set(H, c * measure(H) / measure(G));
}

TileCollection tiles_meeting(const TileCollection& S, const GridSet& set) {
  const int L = S.resolution();
  require_same_resolution(L, set.resolution(), "tiles_meeting");
  const auto counts = interval_counts(set);
  TileCollection out(L);
  for (const auto& p : S.tiles())
    if (counts[heap_id(p.spatial())] > 0) out.insert(p);
  return out;
}

ChoiceFunction greedy_choice(const GridSignal& f, const TileCollection& S) {
  const int L = f.resolution();
  require_same_resolution(L, S.resolution(), "greedy_choice");
  const TileCoefficients coef(f);
  std::vector<double> values(f.size(), 0.5);
  for (std::size_t x = 0; x < f.size(); ++x) {
    double best = -1.0;
    std::uint64_t arg = 0;
    // Depth-first over the binary digits of the frequency, most significant
    // first; at depth d the prefix u fixes the tile of scale L - d.
    std::function<void(std::uint64_t, int, complex)> dfs = [&](std::uint64_t u, int d, complex acc) {
      if (d == L) {
        if (std::abs(acc) > best) {
          best = std::abs(acc);
          arg = u;
        }
        return;
      }
      for (std::uint64_t b = 0; b < 2; ++b) {
        const std::uint64_t v = 2 * u + b;
        complex next = acc;
        if (b == 1) {
          const int k = L - d - 1;
          const BiTile p{k, x >> (L - k), v >> 1};
          if (S.contains(p)) next += coef.lower(p) * packet_value(p.upper(), x, L);
        }
        dfs(v, d + 1, next);
      }
    };
    dfs(0, 0, complex{});
    values[x] = double(arg) + 0.5;
  }
  return ChoiceFunction(L, std::move(values));
}

PairingReport restricted_pairing(const GridSignal& f, const GridSignal& g, const GridSet& E, const GridSet& F,
                                 const RestrictedOp& op, double t) {
  op.validate();
  const int L = op.resolution();
  require_same_resolution(L, f.resolution(), "restricted_pairing");
  require_same_resolution(L, g.resolution(), "restricted_pairing");
  require_same_resolution(L, E.resolution(), "restricted_pairing");
  require_same_resolution(L, F.resolution(), "restricted_pairing");
  if (!(t > 2.0) || !std::isfinite(t)) throw std::invalid_argument("restricted_pairing: t must exceed 2");
  for (std::size_t i = 0; i < f.size(); ++i) {
    if (std::abs(f[i]) > (E[i] ? 1.0 : 0.0) + 1e-12) throw std::invalid_argument("restricted_pairing: need |f| <= 1_E");
    if (std::abs(g[i]) > (F[i] ? 1.0 : 0.0) + 1e-12) throw std::invalid_argument("restricted_pairing: need |g| <= 1_F");
  }
  PairingReport r;
  r.pairing = std::abs(inner_product(apply_SAB(f, op), g));

  const GridSignal fb = restrict_to(f, op.B);
  const GridSet target = F & op.A;
  const TileCoefficients coef(fb);
  const auto dens = tile_densities(target, op.N);
  std::vector<double> term(bitile_count(L), 0.0);
  std::vector<double> terms;
  for (const auto& p : op.S.tiles()) {
    const std::size_t i = bitile_index(p, L);
    term[i] = std::abs(coef.lower(p)) * std::sqrt(p.spatial().length()) * dens[i];
    terms.push_back(term[i]);
  }
  r.triangle = pairwise_sum(std::span<const double>(terms));

  const Decomposition d = full_decompose(op.S, fb, target, op.N);
  r.max_counting_ratio = d.max_counting_ratio;
  r.buckets = d.buckets.size();
  double bucket_sum = 0.0, interp_sum = 0.0;
  const double tp = t / (t - 1.0);
  for (const auto& b : d.buckets) {
    const double level = std::ldexp(1.0, -b.n - b.m);
    r.max_size = std::max(r.max_size, b.size);
    r.max_mass = std::max(r.max_mass, b.mass);
    for (const auto& T : b.forest) {
      double s = 0.0;
      for (const auto& p : T.members) s += term[bitile_index(p, L)];
      r.tree_constant = std::max(r.tree_constant, s / (T.top.length() * level));
    }
    bucket_sum += b.top_measure * level;
    interp_sum += level * std::pow(std::ldexp(measure(F), b.m), 1.0 / tp) *
                  std::pow(std::ldexp(measure(E), 2 * b.n), 1.0 / t);
  }
  r.bucket_majorant = r.tree_constant * bucket_sum;
  r.majorant = r.tree_constant * r.max_counting_ratio * interp_sum;
  const double slack = 1.0 + 1e-12;
  r.chain_ok = r.pairing <= r.triangle * slack && r.triangle <= r.bucket_majorant * slack &&
               r.bucket_majorant <= r.majorant * slack;
  return r;
}

double restricted_norm(const RestrictedOp& op, int iterations, std::uint64_t seed) {
  op.validate();
  CounterRng rng(seed);
  return power_iterate(op, random_start(op.B, rng), iterations).first;
}

NormResult adversarial_norm(const GridSet& A, const GridSet& B, const TileCollection& S, const NormOptions& opt) {
  const int L = S.resolution();
  CounterRng rng(opt.seed);
  NormResult out;
  GridSignal best_x;
  auto consider = [&](const ChoiceFunction& N, const std::string& label, const GridSignal& start) {
    const RestrictedOp op{A, B, N, S};
    auto [n, x] = power_iterate(op, start, opt.iterations);
    if (n > out.norm || out.worst.empty()) {
      out.norm = n;
      out.worst = label;
      best_x = std::move(x);
    }
  };
  const double top = std::ldexp(1.0, L);
  for (int k = 0; k < opt.n_constants; ++k)
    consider(ChoiceFunction::constant(L, top * k / opt.n_constants + 0.5), "constant " + std::to_string(k),
             random_start(B, rng));
  for (int k = 0; k < opt.n_random; ++k)
    consider(random_choice_function(L, rng), "random " + std::to_string(k), random_start(B, rng));
  for (int k = 0; k < opt.greedy_rounds; ++k) {
    const GridSignal x = restrict_to(best_x, B);
    if (!(norm2(x) > 0.0)) break;
    consider(greedy_choice(x, S), "greedy " + std::to_string(k), x);
  }
  return out;
}

std::vector<std::pair<GridSet, GridSet>> ratio_ladder(int resolution, int rungs, std::uint64_t seed, Branch branch) {
  if (rungs < 1 || rungs + 1 > resolution) throw std::invalid_argument("ratio_ladder: need 1 <= rungs < L");
  CounterRng rng(seed);
  std::vector<std::pair<GridSet, GridSet>> out;
  for (int i = 1; i <= rungs; ++i) {
    CounterRng r = rng.split(std::uint64_t(i));
    const GridSet small = random_dyadic_union(resolution, r, std::ldexp(1.0, -i), std::min(resolution, i + 2));
    const GridSet full = GridSet::full(resolution);
    if (branch == Branch::HPrime)
      out.emplace_back(small, full);
    else
      out.emplace_back(full, small);
  }
  return out;
}

Estimate22Report estimate_22(const std::vector<std::pair<GridSet, GridSet>>& ladder, double eps, Branch branch,
                             const NormOptions& opt) {
  if (!(eps > 0.0 && eps < 0.5)) throw std::invalid_argument("estimate_22: eps must lie in (0, 1/2)");
  if (ladder.size() < 2) throw std::invalid_argument("estimate_22: need at least two rungs");
  Estimate22Report r;
  r.branch = branch;
  r.eps = eps;
  std::vector<double> xs, ys;
  for (std::size_t i = 0; i < ladder.size(); ++i) {
    const auto& [G, H] = ladder[i];
    require_same_resolution(G.resolution(), H.resolution(), "estimate_22");
    const int L = G.resolution();
    const TileCollection all = TileCollection::all(L);
    LadderPoint pt;
    NormOptions o = opt;
    o.seed = CounterRng(opt.seed).split(i).key();
    if (branch == Branch::HPrime) {
      const GridSet Hp = build_H_prime_c(H, G, r.c);
      const TileCollection S = tiles_meeting(all, Hp);
      pt.ratio = measure(G) / measure(H);
      pt.removed = measure(H) - measure(Hp);
      pt.cap = r.c * pt.ratio;
      pt.max_level = mass_bound(S, G);
      r.measure_ok = r.measure_ok && 2.0 * measure(Hp) >= measure(H);
      const auto n = adversarial_norm(G, Hp, S, o);
      pt.norm = n.norm;
      pt.worst = n.worst;
    } else {
      const GridSet Gp = build_G_prime_c(G, H, r.c);
      const TileCollection S = tiles_meeting(all, Gp);
      pt.ratio = measure(H) / measure(G);
      pt.removed = measure(G) - measure(Gp);
      pt.cap = r.c * pt.ratio;
      pt.max_level = size_bound(S, H.indicator());
      r.measure_ok = r.measure_ok && 2.0 * measure(Gp) >= measure(G);
      const auto n = adversarial_norm(Gp, H, S, o);
      pt.norm = n.norm;
      pt.worst = n.worst;
    }
    r.cap_ok = r.cap_ok && pt.max_level < pt.cap;
    pt.log_ratio = std::log2(pt.ratio);
    pt.log_norm = pt.norm > 0.0 ? std::log2(pt.norm) : -std::numeric_limits<double>::infinity();
    if (pt.norm > 0.0) {
      xs.push_back(pt.log_ratio);
      ys.push_back(pt.log_norm);
    }
    r.points.push_back(std::move(pt));
  }
  if (xs.size() >= 2) std::tie(r.slope, r.intercept) = fit_line(xs, ys);
  r.slope_ok = xs.size() >= 2 && r.slope >= 0.5 - eps;
  return r;
}

Thm71Report verify_thm71(const VectorSignal& fams, const std::vector<ChoiceFunction>& N_family, double p) {
  if (!(p > 1.0) || !std::isfinite(p)) throw std::invalid_argument("verify_thm71: p must lie in (1, inf)");
  if (N_family.empty()) throw std::invalid_argument("verify_thm71: need at least one choice function");
  const int L = fams.resolution();
  for (const auto& N : N_family) require_same_resolution(L, N.resolution(), "verify_thm71");
  const TileCollection all = TileCollection::all(L);
  std::vector<GridSignal> out, greedy;
  for (std::size_t j = 0; j < fams.size(); ++j) {
    out.push_back(model_carleson(fams[j], N_family[j % N_family.size()], all));
    greedy.push_back(model_carleson(fams[j], greedy_choice(fams[j], all), all));
  }
  Thm71Report r;
  r.p = p;
  r.family_size = fams.size();
  r.lhs = vector_lq_norm(VectorSignal(out), p);
  r.greedy_lhs = vector_lq_norm(VectorSignal(greedy), p);
  r.rhs = vector_lq_norm(fams, p);
  r.ratio = r.rhs > 0.0 ? r.lhs / r.rhs : 0.0;
  r.greedy_ratio = r.rhs > 0.0 ? r.greedy_lhs / r.rhs : 0.0;
  r.max_ratio = std::max(r.ratio, r.greedy_ratio);
  return r;
}

void to_json(nlohmann::json& j, const PairingReport& r) {
  j = nlohmann::json{{"pairing", r.pairing},
                     {"triangle", r.triangle},
                     {"tree_constant", r.tree_constant},
                     {"bucket_majorant", r.bucket_majorant},
                     {"majorant", r.majorant},
                     {"max_size", r.max_size},
                     {"max_mass", r.max_mass},
                     {"max_counting_ratio", r.max_counting_ratio},
                     {"buckets", r.buckets},
                     {"chain_ok", r.chain_ok}};
}

void to_json(nlohmann::json& j, const Estimate22Report& r) {
  nlohmann::json pts = nlohmann::json::array();
  for (const auto& p : r.points)
    pts.push_back({{"log_ratio", p.log_ratio},
                   {"log_norm", p.log_norm},
                   {"ratio", p.ratio},
                   {"norm", p.norm},
                   {"removed", p.removed},
                   {"cap", p.cap},
                   {"max_level", p.max_level},
                   {"worst_N", p.worst}});
  j = nlohmann::json{{"branch", r.branch == Branch::HPrime ? "H'" : "G'"},
                     {"eps", r.eps},
                     {"c", r.c},
                     {"ratio_ladder", pts},
                     {"slope", r.slope},
                     {"intercept", r.intercept},
                     {"slope_ok", r.slope_ok},
                     {"measure_ok", r.measure_ok},
                     {"cap_ok", r.cap_ok}};
}

void to_json(nlohmann::json& j, const Thm71Report& r) {
  j = nlohmann::json{{"p", r.p},
                     {"family_size", r.family_size},
                     {"lhs", r.lhs},
                     {"rhs", r.rhs},
                     {"ratio", r.ratio},
                     {"greedy_lhs", r.greedy_lhs},
                     {"greedy_ratio", r.greedy_ratio},
                     {"max_ratio", r.max_ratio}};
}

}  // namespace tflab
