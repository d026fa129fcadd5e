#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "tflab/maximal_fs.hpp"
#include "tflab/rng.hpp"

using namespace tflab;

namespace {

// Oracle: average over every dyadic interval by direct summation.
std::vector<double> brute_maximal(const std::vector<double>& a, int L) {
  const std::size_t n = a.size();
  std::vector<double> out(n, 0.0);
  for (int k = 0; k <= L; ++k)
    for (std::size_t off = 0; off < (std::size_t{1} << k); ++off) {
      const std::size_t len = n >> k;
      double s = 0.0;
      for (std::size_t i = off * len; i < (off + 1) * len; ++i) s += a[i];
      const double avg = s / double(len);
      for (std::size_t i = off * len; i < (off + 1) * len; ++i) out[i] = std::max(out[i], avg);
    }
  return out;
}

GridSet random_set(int L, CounterRng& rng, double density) {
  GridSet s(L);
  for (std::size_t i = 0; i < s.size(); ++i) s.set(i, rng.bernoulli(density));
  return s;
}

}  // namespace

TEST_CASE("dyadic maximal examples") {
  const auto one = dyadic_maximal(GridSignal::constant(4, 1.0));
  for (std::size_t i = 0; i < one.size(); ++i) CHECK(one[i] == complex(1.0));
  const auto m = dyadic_maximal(GridSet::from_interval(2, {2, 0}).indicator());
  CHECK(m[0].real() == 1.0);
  CHECK(m[1].real() == 0.5);
  CHECK(m[2].real() == 0.25);
  CHECK(m[3].real() == 0.25);
  const auto z = dyadic_maximal(GridSignal(5));
  for (std::size_t i = 0; i < z.size(); ++i) CHECK(z[i] == complex(0.0));
}

TEST_CASE("dyadic maximal agrees with brute force and is weak (1,1) with constant 1") {
  CounterRng rng(42);
  for (int t = 0; t < 50; ++t) {
    const int L = 1 + int(rng.below(8));
    std::vector<double> a(std::size_t{1} << L);
    for (auto& v : a) v = double(rng.below(1024)) / 1024.0;
    const auto m = dyadic_maximal(a, L);
    CHECK(m == brute_maximal(a, L));
    const double l1 = lp_norm(a, L, 1.0);
    for (double lambda : {0.1, 0.25, 0.5, 0.9}) {
      const double level = std::ldexp(double(std::count_if(m.begin(), m.end(), [&](double v) { return v > lambda; })), -L);
      CHECK(level <= l1 / lambda);
    }
  }
}

TEST_CASE("maximal function is sublinear and monotone") {
  CounterRng rng(9);
  const int L = 6;
  std::vector<double> f(64), g(64), h(64);
  for (std::size_t i = 0; i < 64; ++i) {
    f[i] = double(rng.below(64)) / 64.0;
    g[i] = double(rng.below(64)) / 64.0;
    h[i] = f[i] + g[i];
  }
  const auto mf = dyadic_maximal(f, L), mg = dyadic_maximal(g, L), mh = dyadic_maximal(h, L);
  const auto mfg = dyadic_maximal(h, L);
  for (std::size_t i = 0; i < 64; ++i) {
    CHECK(mh[i] <= mf[i] + mg[i]);
    CHECK(mf[i] <= mfg[i]);
  }
}

TEST_CASE("model T examples and linearization") {
  const auto f = GridSet::from_interval(2, {2, 0}).indicator();
  const auto avg = model_T(f, ScaleChoice::constant(2, 0));
  for (std::size_t i = 0; i < 4; ++i) CHECK(avg[i] == complex(0.25));
  const auto t = model_T(f, ScaleChoice(2, {2, 0, 0, 0}));
  CHECK(t[0] == complex(1.0));
  CHECK(t[1] == complex(0.25));
  CHECK(t[3] == complex(0.25));

  CounterRng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const int L = 7;
    std::vector<double> a(128);
    for (auto& v : a) v = double(rng.below(256)) / 256.0;
    const auto fs = GridSignal::from_real(L, a);
    const auto greedy = model_T(fs, greedy_scale_choice(fs));
    const auto mf = dyadic_maximal(fs);
    std::vector<int> sc(128);
    for (auto& s : sc) s = int(rng.below(L + 1));
    const auto any = model_T(fs, ScaleChoice(L, sc));
    for (std::size_t i = 0; i < 128; ++i) {
      CHECK(greedy[i].real() == mf[i].real());
      CHECK(any[i].real() <= mf[i].real());
    }
  }
}

TEST_CASE("model T adjoint") {
  CounterRng rng(8);
  const int L = 6;
  GridSignal f(L), g(L);
  std::vector<int> sc(64);
  for (std::size_t i = 0; i < 64; ++i) {
    f[i] = {rng.normal(), rng.normal()};
    g[i] = {rng.normal(), rng.normal()};
    sc[i] = int(rng.below(L + 1));
  }
  const ScaleChoice k(L, sc);
  const complex lhs = inner_product(model_T(f, k), g);
  const complex rhs = inner_product(f, model_T_adjoint(g, k));
  CHECK(std::abs(lhs - rhs) < 1e-12);
}

TEST_CASE("stopping sets partition the cells") {
  CounterRng rng(3);
  const int L = 5;
  std::vector<int> sc(32);
  for (auto& s : sc) s = int(rng.below(L + 1));
  const ScaleChoice k(L, sc);
  std::vector<int> hits(32, 0);
  for (int s = 0; s <= L; ++s)
    for (std::uint64_t n = 0; n < (1u << s); ++n) {
      const auto V = stopping_set({s, n}, k);
      for (std::size_t i = 0; i < 32; ++i) hits[i] += V[i];
    }
  for (int h : hits) CHECK(h == 1);
}

TEST_CASE("H prime construction") {
  const auto H = GridSet::full(3);
  CHECK(build_H_prime_fs(H, GridSet::empty(3), 4.0) == H);
  const auto G = GridSet::from_interval(3, {3, 0});
  const auto Hp = build_H_prime_fs(H, G, 4.0);
  CHECK(Hp == GridSet::full(3) - GridSet::from_interval(3, {2, 0}));
  CHECK(measure(Hp) == 0.75);
  CHECK(build_G_prime_fs(G, GridSet::empty(3), 4.0) == G);
  CHECK(build_G_prime_fs(H, G, 4.0) == Hp);
  CHECK_THROWS(build_H_prime_fs(GridSet::empty(3), G, 4.0));

  CounterRng rng(77);
  for (int t = 0; t < 200; ++t) {
    const int L = 4 + int(rng.below(6));
    const auto h = random_set(L, rng, rng.uniform());
    const auto g = random_set(L, rng, 0.5 * rng.uniform());
    if (h.is_empty()) continue;
    CHECK(2.0 * measure(build_H_prime_fs(h, g, 4.0)) >= measure(h));
  }
}

TEST_CASE("interval size and mass") {
  const int L = 4;
  const auto E = GridSet::from_interval(L, {2, 0});
  const auto full = GridSet::full(L);
  const auto k = ScaleChoice::constant(L, 0);
  CHECK(interval_size_mass({1, 0}, E, full, full, full, k).size == 0.5);
  CHECK(interval_size_mass({2, 0}, E, full, full, full, k).size == 1.0);
  CHECK(interval_size_mass({1, 0}, E, full, full, full, k).mass == 0.0);
  CHECK(interval_size_mass({0, 0}, E, full, full, full, k).mass == 1.0);
}

TEST_CASE("restricted sum examples") {
  const int L = 5;
  const auto full = GridSet::full(L);
  const auto k0 = ScaleChoice::constant(L, 0);
  CHECK(fs_restricted_sum(GridSet::empty(L), full, full, full, full, k0, 2.0).lhs == 0.0);

  // Only [0,1) is active: one term size*mass.
  const auto E = GridSet::from_interval(L, {2, 1});
  const auto F = GridSet::from_interval(L, {1, 1});
  const auto r = fs_restricted_sum(E, F, full, full, full, k0, 2.0);
  CHECK(r.lhs == 0.25 * 0.5);
  REQUIRE(r.buckets.size() == 1);
  CHECK(r.buckets[0].n == 2);
  CHECK(r.buckets[0].m == 1);
}

TEST_CASE("restricted sum bucket counting bound") {
  CounterRng rng(2024);
  for (int t = 0; t < 30; ++t) {
    const int L = 8;
    const auto E = random_set(L, rng, rng.uniform());
    const auto F = random_set(L, rng, rng.uniform());
    const auto H = random_set(L, rng, 0.3 + 0.7 * rng.uniform());
    const auto G = random_set(L, rng, 0.3 * rng.uniform());
    if (H.is_empty()) continue;
    const auto Hp = build_H_prime_fs(H, G, 4.0);
    std::vector<int> sc(256);
    for (auto& s : sc) s = int(rng.below(L + 1));
    const auto r = fs_restricted_sum(E, F, H, Hp, G, ScaleChoice(L, sc), 1.5);
    CHECK(r.max_count_bound_ratio <= 4.0);
    for (const auto& b : r.buckets) CHECK(b.sum <= 4.0 * std::ldexp(1.0, -b.n - b.m) * std::min(std::ldexp(measure(E), b.n), std::ldexp(measure(F), b.m)));
  }
}

TEST_CASE("Fefferman-Stein family invariance") {
  CounterRng rng(1);
  const int L = 6;
  GridSignal f(L);
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = rng.normal();
  const auto one = verify_fefferman_stein(VectorSignal({f}), 3.0);
  const auto four = verify_fefferman_stein(VectorSignal({f, f, f, f}), 3.0);
  CHECK(one.ratio >= 1.0);
  CHECK(four.ratio == doctest::Approx(one.ratio).epsilon(1e-13));
  CHECK_THROWS(verify_fefferman_stein(VectorSignal({f}), 1.0));
}
