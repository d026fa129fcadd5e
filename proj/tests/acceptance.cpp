// Acceptance gate: one PASS/FAIL line per criterion. Pass criterion numbers as
// arguments to run a subset.

#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "tflab/biparam.hpp"
#include "tflab/carleson_vv.hpp"
#include "tflab/directional.hpp"
#include "tflab/harness.hpp"
#include "tflab/maximal_fs.hpp"
#include "tflab/principle.hpp"
#include "tflab/random_data.hpp"
#include "tflab/walsh_tiles.hpp"

using namespace tflab;

namespace {

// Tolerances and limits, pinned.
constexpr double kSizeRelTol = 1e-12;        // greedy vs exhaustive size^2
constexpr double kCountingSpread = 4.0;      // counting constants across L
constexpr double kTreeDrift = 2.0;           // tree constants across L
constexpr double kDecayTol = 1e-12;          // 3 gamma^{-min} against 1/2
constexpr double kUniformity = 2.0;          // sup over J against J = 1
constexpr double kProjectionTol = 1e-10;     // half-plane identities
constexpr double kTailLimit = 1e-6;          // weight series tail at K = 40
constexpr double kNormalizedSpread = 2.0;    // weighted ratio stability
constexpr double kSlopeEps = 0.1;            // decay exponent 1/2 - eps

struct Outcome {
  bool pass = true;
  std::string detail;
};

std::string fmt(double v) {
  std::ostringstream o;
  o.precision(4);
  o << v;
  return o.str();
}

double spread(const std::vector<double>& v) {
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  return *lo > 0.0 ? *hi / *lo : INFINITY;
}

Outcome maximal_oracle() {
  CounterRng rng(1001);
  std::size_t mismatches = 0, weak_failures = 0;
  for (int t = 0; t < 1000; ++t) {
    const int L = 1 + t % 10;
    const GridSignal f = random_dyadic_rational_signal(L, rng);
    const auto a = f.abs();
    const GridSignal m = dyadic_maximal(f);
    const auto expect = oracle::maximal(a, L);
    for (std::size_t i = 0; i < a.size(); ++i)
      if (m[i] != complex(expect[i])) ++mismatches;
    // Values are k/1024, so every quantity below is exact in double.
    double l1 = 0.0;
    for (double v : a) l1 += v;
    std::set<double> levels(expect.begin(), expect.end());
    for (double lambda : levels) {
      if (lambda <= 0.0) continue;
      const auto count = std::count_if(expect.begin(), expect.end(), [&](double v) { return v >= lambda; });
      if (lambda * double(count) > l1) ++weak_failures;
    }
  }
  return {mismatches == 0 && weak_failures == 0,
          "1000 signals, " + std::to_string(mismatches) + " cell mismatches, " + std::to_string(weak_failures) +
              " weak (1,1) violations"};
}

Outcome size_oracle() {
  CounterRng rng(1002);
  int checked = 0, mismatches = 0;
  std::size_t tiles = 0;
  double worst = 0.0;
  while (checked < 500) {
    const int L = 4 + checked % 2;
    const auto S = random_convex_collection(L, rng, 1 + int(rng.below(3)), 3 + int(rng.below(6)));
    if (S.size() < 2 || S.size() > 12) continue;
    const auto f = random_walsh_signal(L, rng);
    const double fast = size_squared(S, TileCoefficients(f));
    const double slow = oracle::size_squared(S.tiles(), f);
    const double rel = std::abs(fast - slow) / std::max(1.0, slow);
    worst = std::max(worst, rel);
    if (rel > kSizeRelTol) ++mismatches;
    tiles += S.size();
    ++checked;
  }
  return {mismatches == 0, "500 collections of " + fmt(double(tiles) / 500.0) + " bi-tiles on average, " +
                               std::to_string(mismatches) + " mismatches, worst relative gap " +
                               fmt(worst)};
}

Outcome lemma_postconditions() {
  CounterRng rng(1003);
  std::size_t halving_failures = 0, partition_failures = 0;
  std::vector<double> size_c, mass_c;
  for (int L = 5; L <= 8; ++L) {
    double sc = 0.0, mc = 0.0;
    for (int t = 0; t < 200; ++t) {
      const auto S = random_convex_collection(L, rng, 6, 10);
      const auto f = random_sub_indicator(random_dyadic_union(L, rng, 0.2 + 0.6 * rng.uniform()), rng);
      const auto E = random_dyadic_union(L, rng, 0.1 + 0.6 * rng.uniform());
      const auto N = random_choice_function(L, rng);
      const auto rs = size_lemma_decompose(S, f);
      const auto rm = mass_lemma_decompose(S, E, N);
      if (rs.small_value * rs.small_value > rs.reference * rs.reference / 4.0) ++halving_failures;
      if (rm.small_value > rm.reference / 2.0) ++halving_failures;
      for (const auto* r : {&rs, &rm}) {
        std::size_t total = r->small.size();
        for (const auto& tr : r->forest) total += tr.members.size();
        if (total != S.size()) ++partition_failures;
      }
      sc = std::max(sc, rs.counting_constant);
      mc = std::max(mc, rm.counting_constant);
    }
    size_c.push_back(sc);
    mass_c.push_back(mc);
  }
  const double s1 = spread(size_c), s2 = spread(mass_c);
  std::string detail = std::to_string(halving_failures) + " halving failures, " + std::to_string(partition_failures) +
                       " partition failures; size counting constants";
  for (double v : size_c) detail += " " + fmt(v);
  detail += " (spread " + fmt(s1) + "), mass counting constants";
  for (double v : mass_c) detail += " " + fmt(v);
  detail += " (spread " + fmt(s2) + ")";
  return {halving_failures == 0 && partition_failures == 0 && s1 < kCountingSpread && s2 < kCountingSpread, detail};
}

// Union of a few dyadic rectangles inside R, at most two scales finer per side,
// so the sampling looks the same at every resolution.
GridSet local_union(const DyadicRectangle& R, int L, CounterRng& rng) {
  GridSet out(2 * L);
  const int count = 1 + int(rng.below(4));
  for (int i = 0; i < count; ++i) {
    const int da = std::min(int(rng.below(3)), L - R.I.scale), db = std::min(int(rng.below(3)), L - R.J.scale);
    const DyadicInterval I(R.I.scale + da, (R.I.offset << da) + rng.below(std::uint64_t{1} << da));
    const DyadicInterval J(R.J.scale + db, (R.J.offset << db) + rng.below(std::uint64_t{1} << db));
    out = out | DyadicRectangle{I, J}.as_set(L);
  }
  return out;
}

// Sub-indicator of E: with probability 1/2 the sign pattern of a random
// combination of the tree packets, otherwise random unimodular values.
Grid2D tree_aligned(const RectTree& T, const GridSet& E, int L, CounterRng& rng) {
  Grid2D s(L);
  if (rng.bernoulli(0.5))
    for (const auto& R : T.members) {
      const double c = rng.bernoulli(0.5) ? 1.0 : -1.0;
      const Grid2D phi = tensor_packet(R, L);
      for (std::size_t i = 0; i < s.size(); ++i) s.values()[i] += c * phi.values()[i];
    }
  Grid2D f(L);
  for (std::size_t i = 0; i < f.size(); ++i) {
    if (!E[i]) continue;
    const double re = s.values()[i].real();
    f.values()[i] = re > 0.0 ? 1.0 : re < 0.0 ? -1.0 : std::polar(1.0, 2.0 * M_PI * rng.uniform());
  }
  return f;
}

Outcome tree_estimates() {
  CounterRng rng(1004);
  std::vector<double> tree_c, rect_c;
  for (int L : {6, 8}) {
    double worst = 0.0;
    for (int t = 0; t < 500; ++t) {
      Tree tr = random_tree(L, rng, 0.6, 3);
      while (tr.members.empty()) tr = random_tree(L, rng, 0.6, 3);
      const GridSignal f = random_sub_indicator(random_dyadic_union(L, rng, 0.2 + 0.7 * rng.uniform()), rng);
      const GridSet E = random_dyadic_union(L, rng, 0.2 + 0.7 * rng.uniform());
      // Half the cells choose the tree frequency so the mass is not negligible.
      std::vector<double> nv(std::size_t{1} << L);
      for (auto& v : nv) v = rng.bernoulli(0.5) ? double(tr.xi) + 0.5 : double(rng.below(nv.size())) + rng.uniform();
      const auto r = tree_estimate(tr, f, E, ChoiceFunction(L, nv));
      worst = std::max(worst, r.ratio);
    }
    tree_c.push_back(worst);

    worst = 0.0;
    for (int t = 0; t < 500; ++t) {
      const int j = int(rng.below(L));
      const RectTree T = random_rect_tree(L, j, rng, 0.4, 2);
      const GridSet E = local_union(T.top, L, rng), F = local_union(T.top, L, rng);
      const GridSet Hp = local_union(T.top, L, rng), G = local_union(T.top, L, rng);
      const Grid2D f = tree_aligned(T, E, L, rng), g = tree_aligned(T, F, L, rng);
      worst = std::max(worst, rect_tree_estimate(T, f, g, Hp, G, F).ratio);
    }
    rect_c.push_back(worst);
  }
  const double d1 = spread(tree_c), d2 = spread(rect_c);
  return {d1 < kTreeDrift && d2 < kTreeDrift,
          "tree constants L=6 " + fmt(tree_c[0]) + ", L=8 " + fmt(tree_c[1]) + " (drift " + fmt(d1) +
              "); rectangle tree constants L=6 " + fmt(rect_c[0]) + ", L=8 " + fmt(rect_c[1]) + " (drift " + fmt(d2) +
              ")"};
}

Outcome principle_internals() {
  double worst = 0.0;
  for (double p : {1.1, 1.5, 2.0, 3.0, 10.0}) worst = std::max(worst, std::abs(decay_factor(p) - 0.5));
  CounterRng rng(1005);
  int failures = 0;
  for (int t = 0; t < 100; ++t) {
    const int L = 6 + t % 5;
    const auto H = random_dyadic_union(L, rng, 0.3 + 0.6 * rng.uniform());
    const auto G = random_dyadic_union(L, rng, 0.05 + 0.5 * rng.uniform());
    const double p = t % 2 ? 3.0 : 1.5;
    const auto rep = iterate_error_decay(H, G, gamma_refined(fs_h_builder(), gamma_of(p)), p, 10);
    bool ok = rep.ok && rep.levels.size() == 10;
    for (const auto& l : rep.levels) ok = ok && std::abs(l.budget - std::ldexp(1.0, -l.k)) <= kDecayTol;
    if (!ok) ++failures;
  }
  return {worst <= kDecayTol && failures == 0,
          "max |3 gamma^{-min} - 1/2| = " + fmt(worst) + ", " + std::to_string(failures) + " of 100 pairs failed"};
}

double harness_value(ExperimentConfig c, const char* key, bool& ok) {
  const auto r = run(c);
  ok = ok && r.ok;
  return r.report["summary"][key].get<double>();
}

Outcome fs_uniformity() {
  bool ok = true;
  std::string detail;
  for (double p : {1.5, 3.0})
    for (int L : {6, 8, 10}) {
      std::vector<double> by_J;
      for (std::size_t J : {1, 4, 16, 64}) {
        ExperimentConfig c;
        c.experiment = Experiment::Fs;
        c.resolution = L;
        c.p = p;
        c.family_size = J;
        c.trials = 50;
        c.seed = 1006;
        by_J.push_back(harness_value(c, "max_ratio", ok));
      }
      const double sup = *std::max_element(by_J.begin(), by_J.end());
      ok = ok && sup <= kUniformity * by_J.front();
      detail += " p=" + fmt(p) + ",L=" + std::to_string(L) + ": " + fmt(sup / by_J.front());
    }
  return {ok, "sup_J / (J=1):" + detail};
}

Outcome biparam_uniformity() {
  bool ok = true;
  std::vector<double> by_J;
  for (std::size_t J : {1, 4, 8}) {
    ExperimentConfig c;
    c.experiment = Experiment::Biparam;
    c.resolution = 5;
    c.family_size = J;
    c.trials = 20;
    c.seed = 1007;
    // run() fails the mass cap postcondition if any trial exceeds it.
    by_J.push_back(harness_value(c, "max_ratio", ok));
  }
  const double sup = *std::max_element(by_J.begin(), by_J.end());
  ok = ok && sup <= kUniformity * by_J.front();
  return {ok, "mass cap and measure condition on all trials: " + std::string(ok ? "yes" : "no") +
                  "; ratio J=1 " + fmt(by_J[0]) + ", J=4 " + fmt(by_J[1]) + ", J=8 " + fmt(by_J[2])};
}

Outcome cordoba() {
  const int L = 5;
  CounterRng rng(1008);
  double proj = 0.0;
  for (int t = 0; t < 100; ++t) {
    Grid2D f(L);
    for (auto& v : f.values()) v = complex(rng.normal(), rng.normal());
    const Direction v = t < 4 ? std::vector<Direction>{{1, 0}, {0, 1}, {1, 1}, {-1, 2}}[t]
                              : Direction::from_angle(2.0 * M_PI * rng.uniform());
    const Grid2D h = halfplane_Hv(f, v), hh = halfplane_Hv(h, v), hm = halfplane_Hv(f, -v);
    for (std::size_t i = 0; i < f.size(); ++i) {
      proj = std::max(proj, std::abs(hh.values()[i] - h.values()[i]));
      proj = std::max(proj, std::abs(h.values()[i] + hm.values()[i] - f.values()[i]));
    }
  }

  int weight_failures = 0;
  double tail = 0.0;
  const DirectionalMaximal M(L, DirectionSet::uniform(4));
  for (int t = 0; t < 10; ++t) {
    Grid2D g(L);
    for (auto& v : g.values()) v = rng.bernoulli(0.3) ? rng.uniform() : 0.0;
    const auto w = build_weight_a1(g, M, 2.0, 40, std::nullopt, 1008 + t);
    tail = std::max(tail, w.tail);
    if (!(w.dominates_g && w.norm_ok && w.a1_ok && w.tail < kTailLimit)) ++weight_failures;
  }

  int a2_failures = 0;
  for (int t = 0; t < 100; ++t) {
    const int L1 = 4 + t % 7;
    GridSignal g(L1);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = rng.bernoulli(0.2) ? 1.0 + 9.0 * rng.uniform() : 0.0;
    g[rng.below(g.size())] = 1.0;
    // (Mg)^{1/2} is an A1 weight.
    const auto m = dyadic_maximal(g);
    GridSignal u(L1);
    for (std::size_t i = 0; i < u.size(); ++i) u[i] = std::sqrt(std::abs(m[i]));
    const auto a = a_constants(u);
    if (!(a.chain_ok && a.A2 <= 2.0 * a.A1)) ++a2_failures;
  }

  bool runs_ok = true;
  std::vector<double> normalized;
  for (double p : {2.0, 3.0})
    for (std::size_t J : {2, 4, 8}) {
      ExperimentConfig c;
      c.experiment = Experiment::CordobaWeighted;
      c.resolution = L;
      c.p = p;
      c.family_size = J;
      c.trials = 6;
      c.seed = 1008;
      const auto r = run(c);
      runs_ok = runs_ok && r.ok;
      for (const auto& row : r.trials) normalized.push_back(row["normalized"].get<double>());
    }
  const double s = spread(normalized);
  const bool ok = proj <= kProjectionTol && weight_failures == 0 && a2_failures == 0 && runs_ok &&
                  s <= kNormalizedSpread;
  return {ok, "projection error " + fmt(proj) + ", " + std::to_string(weight_failures) +
                  " weight certificate failures (max tail " + fmt(tail) + "), " + std::to_string(a2_failures) +
                  " A2 > 2 A1, normalized ratio spread " + fmt(s) + " over " + std::to_string(normalized.size()) +
                  " trials"};
}

Outcome carleson_decay() {
  bool ok = true;
  std::string detail;
  for (auto br : {Branch::HPrime, Branch::GPrime}) {
    NormOptions o;
    o.seed = 1009;
    const auto r = estimate_22(ratio_ladder(9, 8, 1009, br), kSlopeEps, br, o);
    ok = ok && r.slope >= 0.5 - kSlopeEps && r.measure_ok && r.cap_ok;
    detail += std::string(br == Branch::HPrime ? "H' slope " : ", G' slope ") + fmt(r.slope) +
              (r.measure_ok && r.cap_ok ? "" : " (set conditions failed)");
  }
  return {ok, detail};
}

Outcome principle_end_to_end() {
  bool ok = true;
  std::size_t rows = 0, bounded = 0;
  double worst = 0.0;
  for (double q : {2.0, 2.5, 3.5}) {
    ExperimentConfig c;
    c.experiment = Experiment::Principle;
    c.q = q;
    c.trials = 20;
    c.seed = 1010;
    const auto r = run(c);
    ok = ok && r.ok;
    for (const auto& row : r.trials) {
      ++rows;
      bounded += row["bounded"].get<bool>();
      worst = std::max(worst, row["ratio"].get<double>() / row["bound"].get<double>());
    }
  }
  return {ok && bounded == rows, std::to_string(bounded) + " of " + std::to_string(rows) +
                                     " trials bounded, worst ratio / bound " + fmt(worst)};
}

struct Criterion {
  int id;
  double limit_seconds;
  std::function<Outcome()> check;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all = {
      {1, 30, maximal_oracle},          {2, 60, size_oracle},        {3, 300, lemma_postconditions},
      {4, 300, tree_estimates},         {5, 10, principle_internals}, {6, 600, fs_uniformity},
      {7, 600, biparam_uniformity},     {8, 600, cordoba},           {9, 900, carleson_decay},
      {10, 300, principle_end_to_end},
  };
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::stoi(argv[i]));

  int failed = 0;
  for (const auto& c : all) {
    if (!wanted.empty() && !wanted.count(c.id)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool pass = o.pass && secs < c.limit_seconds;
    failed += !pass;
    std::printf("%s criterion %d: %s [%.1f s, limit %.0f s]\n", pass ? "PASS" : "FAIL", c.id, o.detail.c_str(), secs,
                c.limit_seconds);
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
