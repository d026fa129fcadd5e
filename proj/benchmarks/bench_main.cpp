#include <benchmark/benchmark.h>

#include "tflab/biparam.hpp"
#include "tflab/directional.hpp"
#include "tflab/maximal_fs.hpp"
#include "tflab/random_data.hpp"
#include "tflab/walsh_tiles.hpp"

using namespace tflab;

namespace {

Grid2D random_grid(int L, CounterRng& rng) {
  Grid2D f(L);
  for (auto& v : f.values()) v = complex(rng.normal(), rng.normal());
  return f;
}

void BM_DyadicMaximal(benchmark::State& state) {
  const int L = int(state.range(0));
  CounterRng rng(1);
  const GridSignal f = random_walsh_signal(L, rng);
  for (auto _ : state) benchmark::DoNotOptimize(dyadic_maximal(f));
  state.SetItemsProcessed(state.iterations() * std::int64_t(f.size()));
}
BENCHMARK(BM_DyadicMaximal)->DenseRange(8, 12, 2);

void BM_ModelCarleson(benchmark::State& state) {
  const int L = int(state.range(0));
  CounterRng rng(2);
  const GridSignal f = random_walsh_signal(L, rng);
  const ChoiceFunction N = random_choice_function(L, rng);
  const TileCollection S = TileCollection::all(L);
  for (auto _ : state) benchmark::DoNotOptimize(model_carleson(f, N, S));
}
BENCHMARK(BM_ModelCarleson)->DenseRange(6, 10, 2);

void BM_Size(benchmark::State& state) {
  const int L = int(state.range(0));
  CounterRng rng(3);
  const GridSignal f = random_walsh_signal(L, rng);
  const TileCollection S = random_convex_collection(L, rng, 8, 16);
  const TileCoefficients coef(f);
  for (auto _ : state) benchmark::DoNotOptimize(size_squared(S, coef));
}
BENCHMARK(BM_Size)->DenseRange(6, 10, 2);

void BM_HalfplaneHv(benchmark::State& state) {
  const int L = int(state.range(0));
  CounterRng rng(4);
  const Grid2D f = random_grid(L, rng);
  const Direction v = Direction::from_angle(0.3);
  for (auto _ : state) benchmark::DoNotOptimize(halfplane_Hv(f, v));
}
BENCHMARK(BM_HalfplaneHv)->DenseRange(4, 6, 1);

void BM_DirectionalMaximal(benchmark::State& state) {
  const int L = int(state.range(0));
  CounterRng rng(5);
  const Grid2D f = random_grid(L, rng);
  const DirectionalMaximal M(L, DirectionSet::uniform(std::size_t(state.range(1))));
  for (auto _ : state) benchmark::DoNotOptimize(M.apply(f));
}
BENCHMARK(BM_DirectionalMaximal)->ArgsProduct({{4, 5, 6}, {1, 8}});

void BM_StrongMaximal(benchmark::State& state) {
  const int L = int(state.range(0));
  CounterRng rng(6);
  const Grid2D f = random_grid(L, rng);
  for (auto _ : state) benchmark::DoNotOptimize(strong_maximal(f));
}
BENCHMARK(BM_StrongMaximal)->DenseRange(4, 6, 1);

}  // namespace
BENCHMARK_MAIN();
