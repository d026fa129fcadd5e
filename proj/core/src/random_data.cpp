#include "tflab/random_data.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace tflab {

GridSet random_dyadic_union(int resolution, CounterRng& rng, double density, int min_scale) {
  GridSet s(resolution);
  if (density <= 0.0) return s;
  min_scale = std::clamp(min_scale, 0, resolution);
  const std::size_t target = static_cast<std::size_t>(std::ceil(std::min(density, 1.0) * double(s.size())));
  std::size_t have = 0;
  while (have < target) {
    const int k = min_scale + static_cast<int>(rng.below(static_cast<std::uint64_t>(resolution - min_scale + 1)));
    const DyadicInterval I(k, rng.below(std::uint64_t{1} << k));
    const std::size_t first = I.first_cell(resolution);
    const std::size_t len = I.cell_count(resolution);
    // Shrink the interval when it would overshoot by more than a factor two.
    const std::size_t step = std::min(len, std::max<std::size_t>(1, 2 * (target - have)));
    for (std::size_t x = first; x < first + step; ++x)
      if (!s[x]) {
        s.set(x, true);
        ++have;
      }
  }
  return s;
}

GridSignal random_walsh_signal(int resolution, CounterRng& rng) {
  std::vector<complex> c(std::size_t{1} << resolution);
  for (auto& v : c) v = rng.normal();
  return inverse_walsh_transform(resolution, c);
}

GridSignal random_dyadic_rational_signal(int resolution, CounterRng& rng) {
  GridSignal f(resolution);
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = double(rng.below(1024)) / 1024.0;
  return f;
}

GridSignal random_sub_indicator(const GridSet& E, CounterRng& rng) {
  GridSignal f(E.resolution());
  for (std::size_t i = 0; i < f.size(); ++i)
    if (E[i]) f[i] = std::polar(1.0, 2.0 * std::numbers::pi * rng.uniform());
  return f;
}

ChoiceFunction random_choice_function(int resolution, CounterRng& rng) {
  std::vector<double> v(std::size_t{1} << resolution);
  const double top = std::ldexp(1.0, resolution);
  for (auto& x : v) x = std::floor(rng.uniform() * top);
  return ChoiceFunction(resolution, std::move(v));
}

TileCollection random_convex_collection(int resolution, CounterRng& rng, int clusters, int tiles_per_cluster) {
  TileCollection seeds(resolution);
  if (resolution < 1) return seeds;
  for (int c = 0; c < clusters; ++c) {
    const int k0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(resolution)));
    const std::uint64_t n0 = rng.below(std::uint64_t{1} << k0);
    const std::uint64_t xi = rng.below(std::uint64_t{1} << resolution);
    for (int t = 0; t < tiles_per_cluster; ++t) {
      const int k = k0 + static_cast<int>(rng.below(static_cast<std::uint64_t>(resolution - k0)));
      const std::uint64_t n = (n0 << (k - k0)) + rng.below(std::uint64_t{1} << (k - k0));
      seeds.insert({k, n, xi >> (k + 1)});
    }
  }
  return seeds.convex_hull();
}

Tree random_tree(int resolution, CounterRng& rng, double keep, int max_top_scale) {
  const int k0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(std::min(max_top_scale, resolution - 1) + 1)));
  Tree t{{k0, rng.below(std::uint64_t{1} << k0)}, rng.below(std::uint64_t{1} << resolution), {}};
  TileCollection picked(resolution);
  for (int k = k0; k < resolution; ++k)
    for (std::uint64_t n = t.top.offset << (k - k0); n < (t.top.offset + 1) << (k - k0); ++n)
      if (rng.bernoulli(keep)) picked.insert({k, n, t.xi >> (k + 1)});
  t.members = picked.convex_hull().tiles();
  return t;
}

}  // namespace tflab
