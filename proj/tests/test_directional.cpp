#include <doctest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "tflab/biparam.hpp"
#include "tflab/directional.hpp"
#include "tflab/maximal_fs.hpp"

using namespace tflab;

namespace {

Grid2D random_grid(int L, CounterRng& rng) {
  Grid2D f(L);
  for (auto& v : f.values()) v = {rng.normal(), rng.normal()};
  return f;
}

Grid2D nonneg_grid(int L, CounterRng& rng) {
  Grid2D f(L);
  for (auto& v : f.values()) v = rng.uniform();
  return f;
}

Grid2D wave(int L, long a, long b) {
  Grid2D f(L);
  const double N = double(f.side());
  for (std::size_t x = 0; x < f.side(); ++x)
    for (std::size_t y = 0; y < f.side(); ++y)
      f(x, y) = std::polar(1.0, 2.0 * std::numbers::pi * (double(a) * double(x) + double(b) * double(y)) / N);
  return f;
}

double max_diff(const Grid2D& a, const Grid2D& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a.values()[i] - b.values()[i]));
  return d;
}

Grid2D sum(const Grid2D& a, const Grid2D& b) {
  Grid2D s = a;
  s += b;
  return s;
}

double l2sq(const Grid2D& f) { return std::pow(lp_norm(f, 2.0), 2.0); }

const std::vector<Direction> kDirs{{1.0, 0.0}, {0.0, 1.0}, {1.0, 1.0}, {-1.0, 2.0}, {std::sqrt(2.0), -1.0}};

}  // namespace

TEST_CASE("half-plane projections") {
  CounterRng rng(3);
  const Grid2D f = random_grid(4, rng);
  for (const auto& v : kDirs) {
    const Grid2D h = halfplane_Hv(f, v);
    CHECK(max_diff(halfplane_Hv(h, v), h) < 1e-10);
    CHECK(max_diff(sum(h, halfplane_Hv(f, -v)), f) < 1e-10);
    CHECK(l2sq(h) + l2sq(halfplane_Hv(f, -v)) == doctest::Approx(l2sq(f)).epsilon(1e-12));
  }

  SUBCASE("pure waves") {
    const Direction v(1.0, 2.0);
    for (long a = -3; a <= 3; ++a)
      for (long b = -3; b <= 3; ++b) {
        const Grid2D w = wave(3, a, b);
        const double s = double(a) * v.x + double(b) * v.y;
        const double t = double(a) * v.perp().x + double(b) * v.perp().y;
        const bool keep = (a == 0 && b == 0) ? v.lex_positive() : (s > 1e-12 || (std::abs(s) <= 1e-12 && t > 0.0));
        const Grid2D h = halfplane_Hv(w, v);
        CHECK(lp_norm(h, 2.0) == doctest::Approx(keep ? 1.0 : 0.0).epsilon(1e-12).scale(1.0));
      }
  }

  SUBCASE("boundary line splits by the perpendicular") {
    const Direction v(1.0, 0.0);
    CHECK(lp_norm(halfplane_Hv(wave(3, 0, 2), v), 2.0) == doctest::Approx(1.0));
    CHECK(lp_norm(halfplane_Hv(wave(3, 0, -2), v), 2.0) < 1e-12);
    CHECK(lp_norm(halfplane_Hv(wave(3, 0, 0), v), 2.0) == doctest::Approx(1.0));
    CHECK(lp_norm(halfplane_Hv(wave(3, 0, 0), -v), 2.0) < 1e-12);
  }
}

TEST_CASE("directional maximal function") {
  CounterRng rng(5);
  SUBCASE("constants are fixed") {
    Grid2D one(3);
    for (auto& v : one.values()) v = 1.0;
    const Grid2D m = directional_maximal(one, DirectionSet::uniform(5));
    for (auto v : m.values()) CHECK(v.real() == doctest::Approx(1.0).epsilon(1e-14));
  }

  SUBCASE("horizontal direction gives the strong maximal function") {
    for (int L = 1; L <= 4; ++L) {
      const Grid2D f = nonneg_grid(L, rng);
      CHECK(max_diff(directional_maximal(f, DirectionSet()), strong_maximal(f)) < 1e-13);
    }
  }

  SUBCASE("larger direction sets dominate") {
    const Grid2D f = nonneg_grid(4, rng);
    const DirectionSet small({Direction(1.0, 0.0), Direction(1.0, 1.0)});
    const DirectionSet big({Direction(1.0, 0.0), Direction(1.0, 1.0), Direction(1.0, -3.0)});
    const auto a = directional_maximal(f, small), b = directional_maximal(f, big);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a.values()[i].real() <= b.values()[i].real() + 1e-14);
    const auto c = directional_maximal(f, DirectionSet());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(c.values()[i].real() <= a.values()[i].real() + 1e-14);
  }

  SUBCASE("dominates |f|") {
    const Grid2D f = random_grid(4, rng);
    const auto m = directional_maximal(f, DirectionSet::uniform(4));
    const auto a = f.abs();
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(m.values()[i].real() >= a[i] - 1e-13);
  }

  SUBCASE("measured norm") {
    const int L = 4;
    const DirectionalMaximal M(L, DirectionSet::uniform(4));
    const double n2 = M.operator_norm(2.0, 1);
    CHECK(n2 >= 1.0);
    std::vector<double> delta(std::size_t{1} << (2 * L), 0.0);
    delta[(8 << L) + 8] = 1.0;
    CHECK(n2 >= lp_norm(M.apply(delta), 2 * L, 2.0) / lp_norm(delta, 2 * L, 2.0) - 1e-12);
    CHECK(M.operator_norm(4.0, 1) <= n2 + 1e-9);
  }

  SUBCASE("A2 of constants") {
    const DirectionalMaximal M(3, DirectionSet::uniform(3));
    std::vector<double> w(64, 2.5);
    CHECK(M.a2_constant(w) == doctest::Approx(1.0));
  }
}

TEST_CASE("annular bands") {
  CounterRng rng(7);
  const int L = 4;
  const Grid2D f = random_grid(L, rng);
  Grid2D s(L);
  for (int k = 0; k < annular_band_count(L); ++k) s += annular_Sk(f, k);
  CHECK(max_diff(s, f) < 1e-10);

  SUBCASE("a wave at radius 2^k lies in band k alone") {
    for (int k = 0; k < L; ++k) {
      const Grid2D w = wave(L, 0, 1L << k);
      for (int m = 0; m < annular_band_count(L); ++m)
        CHECK(lp_norm(annular_Sk(w, m), 2.0) == doctest::Approx(m == k ? 1.0 : 0.0).scale(1.0));
    }
  }

  SUBCASE("the zero frequency lies in band 0") {
    const Grid2D w = wave(L, 0, 0);
    CHECK(lp_norm(annular_Sk(w, 0), 2.0) == doctest::Approx(1.0));
  }

  CHECK_THROWS_AS(annular_Sk(f, L + 1), std::invalid_argument);
}

TEST_CASE("square function and Rademacher sums") {
  CounterRng rng(9);
  const int L = 4;
  for (double q : {2.5, 3.0}) {
    const std::vector<Grid2D> one{random_grid(L, rng)};
    const auto r1 = rademacher_equivalence_check(one, q, 32, 1);
    CHECK(r1.square_ratio > 0.3);
    CHECK(r1.square_ratio < 3.0);
    CHECK(r1.khintchine_ratio > 0.5);
    CHECK(r1.khintchine_ratio < 2.0);
    CHECK(r1.draw_min <= r1.khintchine_ratio);
    CHECK(r1.draw_max >= r1.khintchine_ratio);

    std::vector<Grid2D> fam;
    for (int j = 0; j < 4; ++j) fam.push_back(random_grid(L, rng));
    const auto r4 = rademacher_equivalence_check(fam, q, 32, 2);
    CHECK(r4.square_ratio < 3.0);
    CHECK(r4.khintchine_ratio > 0.5);
    CHECK(r4.khintchine_ratio < 2.0);
  }
  CHECK_THROWS_AS(rademacher_equivalence_check({Grid2D(2)}, 2.0, 4), std::invalid_argument);
}

TEST_CASE("A1 weights from the maximal series") {
  const int L = 4;
  const DirectionalMaximal M(L, DirectionSet::uniform(4));
  SUBCASE("constant g") {
    Grid2D g(L);
    for (auto& v : g.values()) v = 1.0;
    const auto w = build_weight_a1(g, M, 2.0, 20, 1.0);
    CHECK(w.norm_M == doctest::Approx(1.0));
    for (auto v : w.w.values()) CHECK(v.real() <= 2.0);
    CHECK(w.dominates_g);
    CHECK(w.norm_ok);
    CHECK(w.a1_ok);
  }

  SUBCASE("random g") {
    CounterRng rng(11);
    for (int t = 0; t < 4; ++t) {
      Grid2D g = nonneg_grid(L, rng);
      for (auto& v : g.values())
        if (rng.bernoulli(0.7)) v = 0.0;
      g(3, 5) = 1.0;
      const auto w = build_weight_a1(g, M, 3.0, 30, std::nullopt, t);
      CHECK(w.dominates_g);
      CHECK(w.norm_ok);
      CHECK(w.a1_ok);
      CHECK(w.tail <= w.tail_bound * (1.0 + 1e-12));
    }
  }

  Grid2D neg(L);
  neg(0, 0) = -1.0;
  CHECK_THROWS_AS(build_weight_a1(neg, M, 2.0, 5, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(build_weight_a1(Grid2D(L), M, 2.0, 5, 1.0), std::invalid_argument);
}

TEST_CASE("one-dimensional weight constants") {
  SUBCASE("constant weight") {
    const auto a = a_constants(GridSignal::constant(4, 3.0));
    CHECK(a.A1 == doctest::Approx(1.0));
    CHECK(a.A2 == doctest::Approx(1.0));
    CHECK(a.chain_ok);
  }

  SUBCASE("two cells") {
    const auto a = a_constants(GridSignal(1, {1.0, 2.0}));
    CHECK(a.A1 == doctest::Approx(1.5));
    CHECK(a.A2 == doctest::Approx(9.0 / 8.0));
    CHECK(a.chain_ok);
  }

  SUBCASE("A2 <= 2 A1 on random weights") {
    CounterRng rng(13);
    for (int t = 0; t < 20; ++t) {
      GridSignal u(6);
      for (auto& v : u.values()) v = std::exp(3.0 * rng.normal());
      const auto a = a_constants(u);
      CHECK(a.chain_ok);
      CHECK(a.A2 <= 2.0 * a.A1 * (1.0 + 1e-12));
    }
  }

  CHECK_THROWS_AS(a_constants(GridSignal(2)), std::invalid_argument);
}

TEST_CASE("Hilbert transform") {
  const int L = 5;
  const std::size_t n = std::size_t{1} << L;
  GridSignal c(L), s(L);
  for (std::size_t i = 0; i < n; ++i) {
    c[i] = std::cos(2.0 * std::numbers::pi * 3.0 * double(i) / double(n));
    s[i] = std::sin(2.0 * std::numbers::pi * 3.0 * double(i) / double(n));
  }
  const GridSignal h = hilbert_transform(c);
  for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(h[i] - s[i]) < 1e-12);

  SUBCASE("unweighted bound") {
    CounterRng rng(17);
    GridSignal f(L);
    for (auto& v : f.values()) v = {rng.normal(), rng.normal()};
    const auto r = weighted_hilbert_check(f, GridSignal::constant(L, 1.0));
    CHECK(r.A1 == doctest::Approx(1.0));
    CHECK(r.C <= 1.0 + 1e-12);
    CHECK(weighted_hilbert_check(GridSignal(L), GridSignal::constant(L, 1.0)).C == 0.0);
  }

  SUBCASE("weighted bound within sup u / inf u") {
    CounterRng rng(19);
    for (int t = 0; t < 10; ++t) {
      GridSignal f(L), u(L);
      for (auto& v : f.values()) v = rng.normal();
      for (auto& v : u.values()) v = 0.2 + rng.uniform();
      CHECK(weighted_hilbert_check(f, u).C <= 6.0);
    }
  }
}

TEST_CASE("vector-valued half-plane estimates") {
  CounterRng rng(23);
  const int L = 4;
  const DirectionSet dirs = DirectionSet::uniform(4);
  std::vector<Grid2D> fam;
  for (int j = 0; j < 6; ++j) fam.push_back(random_grid(L, rng));

  SUBCASE("exponent two") {
    const auto r = verify_thm61(fam, dirs, 2.0, 3.0);
    CHECK(r.ratio <= 1.0 + 1e-12);
    CHECK(r.norm_M >= 1.0);
    CHECK_FALSE(r.principle);
  }

  SUBCASE("admissible range") {
    CHECK_THROWS_AS(verify_thm61(fam, dirs, 4.0, 2.0), std::invalid_argument);
    CHECK_NOTHROW(verify_thm62(fam, dirs, 4.0, 2.0, {.norm_M = 2.0}));
    CHECK_THROWS_AS(verify_thm62(fam, dirs, 5.0, 2.0), std::invalid_argument);
  }

  SUBCASE("condition P") {
    const auto r = verify_thm61(fam, dirs, 2.5, 3.0, {.seed = 1, .principle_trials = 2});
    REQUIRE(r.principle);
    CHECK(r.principle->C_p > 0.0);
    CHECK(std::isfinite(r.principle->C_p));
  }

  SUBCASE("weight route at the endpoint") {
    const int L5 = 5;
    const DirectionSet d8 = DirectionSet::uniform(8);
    std::vector<Grid2D> f8;
    for (int j = 0; j < 8; ++j) f8.push_back(random_grid(L5, rng));
    const double p = 3.0, q = 2.0 * p / (p - 1.0);
    const auto r = verify_thm62(f8, d8, q, p, {.seed = 2});
    CHECK(r.endpoint);
    CHECK(r.chain_ok);
    CHECK(r.chain_g <= r.chain_w * (1.0 + 1e-12));
    CHECK(r.chain_fw <= r.chain_holder * (1.0 + 1e-12));
    REQUIRE(r.weight);
    CHECK(r.weight->norm_ok);
    CHECK(r.A1 <= 2.0 * r.norm_M * (1.0 + 1e-9));
    CHECK(r.A2 >= 1.0);
    CHECK(r.C21 <= 1.0);
    CHECK(r.normalized > 0.0);
    CHECK(r.normalized <= r.ratio);
  }
}

TEST_CASE("direction CSV") {
  const DirectionSet d = DirectionSet::uniform(6);
  std::stringstream ss;
  write_directions_csv(ss, d);
  const DirectionSet back = read_directions_csv(ss);
  REQUIRE(back.size() == d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    CHECK(back[i].x == d[i].x);
    CHECK(back[i].y == d[i].y);
  }
  std::stringstream bad("vx,vy\n1,0\n0,0\n");
  CHECK_THROWS_AS(read_directions_csv(bad), CsvError);
  std::stringstream dup("vx,vy\n1,0\n2,0\n");
  CHECK_THROWS_AS(read_directions_csv(dup), CsvError);
  std::stringstream hdr("x,y\n1,0\n");
  CHECK_THROWS_AS(read_directions_csv(hdr), CsvError);
}
