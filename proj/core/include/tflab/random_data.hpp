#pragma once

#include "tflab/dyadic_core.hpp"
#include "tflab/rng.hpp"
#include "tflab/walsh_tiles.hpp"

namespace tflab {

/// Union of random dyadic intervals (scales in [min_scale, L]) grown until
/// its measure reaches `density`.
GridSet random_dyadic_union(int resolution, CounterRng& rng, double density, int min_scale = 1);

/// Real signal with independent standard Gaussian Walsh coefficients.
GridSignal random_walsh_signal(int resolution, CounterRng& rng);
/// Real signal whose values are integers over 1024 in [0, 1).
GridSignal random_dyadic_rational_signal(int resolution, CounterRng& rng);
/// Signal with |f| <= 1_E: random unimodular values on E.
GridSignal random_sub_indicator(const GridSet& E, CounterRng& rng);

ChoiceFunction random_choice_function(int resolution, CounterRng& rng);

/// Convex hull of random bi-tiles drawn from `clusters` random 1-trees.
TileCollection random_convex_collection(int resolution, CounterRng& rng, int clusters, int tiles_per_cluster);

/// Convex random subtree of a random 1-tree whose top has scale at most max_top_scale.
Tree random_tree(int resolution, CounterRng& rng, double keep, int max_top_scale);

}  // namespace tflab
