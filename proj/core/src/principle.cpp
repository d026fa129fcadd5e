#include "tflab/principle.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>

#include "tflab/maximal_fs.hpp"
#include "tflab/rng.hpp"

namespace tflab {

namespace {

void require_exponent(double p, const char* what) {
  if (!(p > 1.0) || !std::isfinite(p)) throw std::invalid_argument(std::string(what) + ": p must lie in (1, inf)");
}

double dual(double p) { return p / (p - 1.0); }

double norm2(const GridSignal& f) {
  const double n = lp_norm(f, 2.0);
  return n * n;
}

}  // namespace

double gamma_of(double p) {
  require_exponent(p, "gamma");
  return std::pow(6.0, std::max(p, dual(p)));
}

double decay_factor(double p) {
  return 3.0 * std::pow(gamma_of(p), -std::min(1.0 / p, 1.0 / dual(p)));
}

bool satisfies_half_condition(const GridSet& H, const GridSet& G, const GridSet& Hp, const GridSet& Gp) {
  return Hp.subset_of(H) && Gp.subset_of(G) && 2 * Hp.count() >= H.count() && 2 * Gp.count() >= G.count();
}

SubsetBuilder fs_h_builder(double c) {
  return [c](const GridSet& H, const GridSet& G, double) { return std::make_pair(build_H_prime_fs(H, G, c), G); };
}

SubsetBuilder fs_g_builder(double c) {
  return [c](const GridSet& H, const GridSet& G, double) { return std::make_pair(H, build_G_prime_fs(G, H, c)); };
}

SubsetBuilder gamma_refined(SubsetBuilder half, double gamma) {
  return [half = std::move(half), gamma](const GridSet& H, const GridSet& G, double p) {
    GridSet Hp(H.resolution());
    GridSet rest = H;
    while (!rest.is_empty() && double(rest.count()) * gamma > double(H.count())) {
      const GridSet piece = half(rest, G, p).first & rest;
      if (piece.is_empty()) break;
      Hp = Hp | piece;
      rest = rest - piece;
    }
    GridSet Gp(G.resolution());
    rest = G;
    while (!rest.is_empty() && double(rest.count()) * gamma > double(G.count())) {
      const GridSet piece = half(H, rest, p).second & rest;
      if (piece.is_empty()) break;
      Gp = Gp | piece;
      rest = rest - piece;
    }
    return std::make_pair(Hp, Gp);
  };
}

PowerIteration operator_norm_squared(const std::function<GridSignal(const GridSignal&)>& S,
                                     const std::function<GridSignal(const GridSignal&)>& S_adjoint, int resolution,
                                     std::uint64_t seed, int max_iterations, double tol) {
  PowerIteration out;
  CounterRng rng(seed);
  GridSignal x(resolution);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = {rng.normal(), rng.normal()};
  x *= 1.0 / lp_norm(x, 2.0);
  double prev = -1.0;
  for (int it = 1; it <= max_iterations; ++it) {
    const GridSignal y = S(x);
    const double rayleigh = norm2(y);
    out.history.push_back(rayleigh);
    out.norm_squared = std::max(out.norm_squared, rayleigh);
    out.iterations = it;
    if (rayleigh == 0.0 || (prev >= 0.0 && std::abs(rayleigh - prev) <= tol * rayleigh)) {
      out.converged = true;
      break;
    }
    prev = rayleigh;
    GridSignal z = S_adjoint(y);
    const double nz = lp_norm(z, 2.0);
    if (nz == 0.0) {
      out.converged = true;
      break;
    }
    z *= 1.0 / nz;
    x = std::move(z);
  }
  return out;
}

PrincipleReport measure_condition_P(const OperatorFamily& fam, const GridSet& H, const GridSet& G,
                                    const SubsetBuilder& sb, double p, int trials, std::uint64_t seed) {
  require_exponent(p, "measure_condition_P");
  require_same_resolution(H.resolution(), G.resolution(), "measure_condition_P");
  if (H.is_empty() || G.is_empty()) throw std::invalid_argument("measure_condition_P: H and G need positive measure");
  if (fam.members.empty()) throw std::invalid_argument("measure_condition_P: empty operator family");
  PrincipleReport r;
  r.p = p;
  const auto [Hp, Gp] = sb(H, G, p);
  r.measure_H = measure(H);
  r.measure_G = measure(G);
  r.measure_Hp = measure(Hp);
  r.measure_Gp = measure(Gp);
  r.builder_ok = satisfies_half_condition(H, G, Hp, Gp);
  const double scale = std::pow(r.measure_G / r.measure_H, 1.0 - 2.0 / p);
  const CounterRng base(seed);
  for (std::size_t j = 0; j < fam.members.size(); ++j) {
    const LinearOp& op = fam.members[j];
    if (!op.adjoint) throw std::invalid_argument("measure_condition_P: every member needs an adjoint");
    require_same_resolution(op.resolution, H.resolution(), "measure_condition_P");
    const auto S = [&](const GridSignal& f) { return restrict_to(op.apply(restrict_to(f, Hp)), Gp); };
    const auto St = [&](const GridSignal& g) { return restrict_to(op.adjoint(restrict_to(g, Gp)), Hp); };
    MemberCondition mc;
    mc.j = j;
    for (int t = 0; t < std::max(trials, 1); ++t) {
      auto pw = operator_norm_squared(S, St, op.resolution, base.split(j).split(std::uint64_t(t)).key());
      if (pw.norm_squared >= mc.power.norm_squared) mc.power = std::move(pw);
    }
    mc.ratio = mc.power.norm_squared / scale;
    r.converged = r.converged && mc.power.converged;
    r.max_iterations_used = std::max(r.max_iterations_used, mc.power.iterations);
    r.C_p = std::max(r.C_p, mc.ratio);
    r.members.push_back(std::move(mc));
  }
  r.B_p = std::sqrt(r.C_p);
  r.A_p = 2.0 * r.B_p;
  return r;
}

DecayReport iterate_error_decay(const GridSet& H, const GridSet& G, const SubsetBuilder& sb, double p, int k_max) {
  require_exponent(p, "iterate_error_decay");
  if (k_max < 1) throw std::invalid_argument("iterate_error_decay: k_max must be at least 1");
  require_same_resolution(H.resolution(), G.resolution(), "iterate_error_decay");
  DecayReport rep;
  rep.p = p;
  rep.gamma = gamma_of(p);
  const double h0 = double(H.count());
  const double g0 = double(G.count());
  const double e = std::min(1.0 / p, 1.0 / dual(p));
  std::vector<std::pair<GridSet, GridSet>> pairs;  // (G*, H*)
  if (!H.is_empty() && !G.is_empty()) pairs.emplace_back(G, H);
  for (int k = 1; k <= k_max; ++k) {
    std::vector<std::pair<GridSet, GridSet>> next;
    for (const auto& [g, h] : pairs) {
      const auto [hp, gp] = sb(h, g, p);
      const GridSet gr = g - gp;
      const GridSet hr = h - hp;
      for (auto cand : {std::make_pair(gr, hp), std::make_pair(gp, hr), std::make_pair(gr, hr)})
        if (!cand.first.is_empty() && !cand.second.is_empty()) next.push_back(std::move(cand));
    }
    pairs = std::move(next);
    DecayLevel lvl;
    lvl.k = k;
    lvl.pairs = pairs.size();
    lvl.product_bound = std::pow(rep.gamma, -k);
    lvl.budget = std::pow(3.0, k) * std::pow(rep.gamma, -k * e);
    std::vector<double> terms;
    for (const auto& [g, h] : pairs) {
      const double gr = double(g.count()) / g0;
      const double hr = double(h.count()) / h0;
      lvl.max_product_ratio = std::max(lvl.max_product_ratio, gr * hr);
      terms.push_back(std::pow(gr, 1.0 / dual(p)) * std::pow(hr, 1.0 / p));
    }
    lvl.weighted_sum = pairwise_sum(std::span<const double>(terms));
    const double slack = 1.0 + 1e-12;
    lvl.ok = lvl.max_product_ratio <= lvl.product_bound * slack && lvl.weighted_sum <= lvl.budget * slack &&
             std::abs(lvl.budget - std::ldexp(1.0, -k)) <= 1e-12;
    rep.ok = rep.ok && lvl.ok;
    rep.levels.push_back(lvl);
  }
  return rep;
}

VectorBoundReport conclude_vector_bound(const OperatorFamily& fam, const VectorSignal& fams, double q, double p0,
                                        double p1) {
  if (!(p0 > 1.0 && p0 < q && q < p1)) throw std::invalid_argument("conclude_vector_bound: need 1 < p0 < q < p1");
  if (fam.members.size() != 1 && fam.members.size() != fams.size())
    throw std::invalid_argument("conclude_vector_bound: family size must be 1 or match the signal family");
  std::vector<GridSignal> outs;
  outs.reserve(fams.size());
  for (std::size_t j = 0; j < fams.size(); ++j) outs.push_back(fam.at(j).apply(fams[j]));
  VectorBoundReport r;
  r.q = q;
  r.lhs = vector_lq_norm(VectorSignal(std::move(outs)), q);
  r.rhs = vector_lq_norm(fams, q);
  r.ratio = r.rhs > 0.0 ? r.lhs / r.rhs : 0.0;
  return r;
}

double interpolation_envelope(double q, double p0, double p1) {
  return 2.0 * std::pow(q / (q - p0) + q / (p1 - q), 1.0 / q);
}

void to_json(nlohmann::json& j, const PrincipleReport& r) {
  j = nlohmann::json{{"p", r.p},         {"C_p", r.C_p},     {"B_p", r.B_p},
                     {"A_p", r.A_p},     {"measure_H", r.measure_H}, {"measure_G", r.measure_G},
                     {"measure_H_prime", r.measure_Hp}, {"measure_G_prime", r.measure_Gp},
                     {"builder_ok", r.builder_ok}, {"converged", r.converged},
                     {"iterations", r.max_iterations_used}};
}

void to_json(nlohmann::json& j, const DecayReport& r) {
  auto levels = nlohmann::json::array();
  for (const auto& l : r.levels)
    levels.push_back({{"k", l.k},
                      {"pairs", l.pairs},
                      {"max_product_measure", l.max_product_ratio},
                      {"product_bound", l.product_bound},
                      {"weighted_sum", l.weighted_sum},
                      {"budget", l.budget},
                      {"ok", l.ok}});
  j = nlohmann::json{{"p", r.p}, {"gamma", r.gamma}, {"levels", levels}, {"ok", r.ok}};
}

void to_json(nlohmann::json& j, const VectorBoundReport& r) {
  j = nlohmann::json{{"q", r.q}, {"lhs3", r.lhs}, {"rhs3", r.rhs}, {"ratio", r.ratio}};
}

}  // namespace tflab
