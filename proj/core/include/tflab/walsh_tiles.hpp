#pragma once

#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <vector>

#include "tflab/dyadic_core.hpp"

namespace tflab {

/// Phase-plane tile: spatial I = [n 2^-k, (n+1) 2^-k), frequency
/// omega = [l 2^k, (l+1) 2^k) inside [0, 2^L).
struct Tile {
  int k = 0;
  std::uint64_t n = 0;
  std::uint64_t l = 0;

  DyadicInterval spatial() const { return {k, n}; }
  std::uint64_t freq_lo() const { return l << k; }
  std::uint64_t freq_hi() const { return (l + 1) << k; }
  bool fits(int resolution) const;

  auto operator<=>(const Tile&) const = default;
};

/// Bi-tile: spatial scale k, frequency omega_P = [l 2^{k+1}, (l+1) 2^{k+1}).
/// The lower half P1 has frequency index 2l, the upper half P2 has 2l+1.
struct BiTile {
  int k = 0;
  std::uint64_t n = 0;
  std::uint64_t l = 0;

  DyadicInterval spatial() const { return {k, n}; }
  std::uint64_t freq_lo() const { return l << (k + 1); }
  std::uint64_t freq_hi() const { return (l + 1) << (k + 1); }
  Tile lower() const { return {k, n, 2 * l}; }
  Tile upper() const { return {k, n, 2 * l + 1}; }
  bool fits(int resolution) const;

  auto operator<=>(const BiTile&) const = default;
};

/// P <= P' iff I_P is inside I_P' and omega_P' is inside omega_P.
bool fefferman_le(const BiTile& p, const BiTile& q);

/// Number of bi-tiles at resolution L, and their dense numbering (scale-major,
/// then spatial offset, then frequency offset).
std::size_t bitile_count(int resolution);
std::size_t bitile_index(const BiTile& p, int resolution);
BiTile bitile_at(std::size_t index, int resolution);

/// L^2-normalized Walsh packet of a tile.
GridSignal walsh_packet(const Tile& t, int resolution);
/// Value of the packet of `t` on one cell.
double packet_value(const Tile& t, std::size_t cell, int resolution);

/// Cellwise frequency choice N(x) in [0, 2^L).
class ChoiceFunction {
 public:
  ChoiceFunction() = default;
  ChoiceFunction(int resolution, std::vector<double> values);
  static ChoiceFunction constant(int resolution, double value);

  int resolution() const { return resolution_; }
  std::size_t size() const { return values_.size(); }
  double operator[](std::size_t x) const { return values_[x]; }
  /// The integer frequency cell containing N(x).
  std::uint64_t cell(std::size_t x) const { return static_cast<std::uint64_t>(values_[x]); }
  const std::vector<double>& values() const { return values_; }

 private:
  int resolution_ = 0;
  std::vector<double> values_ = std::vector<double>(1, 0.0);
};

/// Finite set of bi-tiles at a fixed resolution.
class TileCollection {
 public:
  TileCollection() : TileCollection(0) {}
  explicit TileCollection(int resolution);
  TileCollection(int resolution, const std::vector<BiTile>& tiles);
  static TileCollection all(int resolution);

  int resolution() const { return resolution_; }
  std::size_t size() const { return count_; }
  bool empty() const { return count_ == 0; }
  bool contains(const BiTile& p) const;
  bool contains_index(std::size_t index) const { return present_[index] != 0; }
  void insert(const BiTile& p);
  void erase(const BiTile& p);
  /// Members in dense-index order.
  std::vector<BiTile> tiles() const;

  bool is_convex() const;
  /// Smallest convex collection containing this one.
  TileCollection convex_hull() const;

  TileCollection operator|(const TileCollection& other) const;
  TileCollection operator-(const TileCollection& other) const;
  bool operator==(const TileCollection&) const = default;

 private:
  int resolution_;
  std::vector<std::uint8_t> present_;
  std::size_t count_ = 0;
};

/// Tree with top data (xi_T, I_T); xi is an integer frequency cell.
struct Tree {
  DyadicInterval top;
  std::uint64_t xi = 0;
  std::vector<BiTile> members;

  /// Membership test for the 1-tree with this top.
  bool admits(const BiTile& p) const;
};
using Forest = std::vector<Tree>;

double forest_top_measure(const Forest& forest);

/// <f, phi_t> for every tile t at resolution L, indexed by
/// k 2^L + n 2^{L-k} + l (k = 0..L).
class TileCoefficients {
 public:
  explicit TileCoefficients(const GridSignal& f);
  int resolution() const { return resolution_; }
  complex operator()(const Tile& t) const;
  complex lower(const BiTile& p) const { return (*this)(p.lower()); }

 private:
  int resolution_;
  std::vector<complex> coef_;
};

/// <g, phi_{P2} 1_{N in omega_{P2}}> for every bi-tile, densely indexed.
std::vector<complex> upper_pairings(const GridSignal& g, const ChoiceFunction& N);

/// Walsh model sum: sum over P in S of <f, phi_{P1}> phi_{P2} 1_{N in omega_{P2}}.
GridSignal model_carleson(const GridSignal& f, const ChoiceFunction& N, const TileCollection& S);
GridSignal model_carleson_adjoint(const GridSignal& g, const ChoiceFunction& N, const TileCollection& S);

/// size(S, f)^2, the maximum over 2-overlapping convex trees in S of
/// |I_T|^{-1} sum |<f, phi_{P1}>|^2.
double size_squared(const TileCollection& S, const TileCoefficients& coef);
double size(const TileCollection& S, const GridSignal& f);

/// |E cap I_P cap {N in omega_P}| / |I_P| for every bi-tile, densely indexed.
std::vector<double> tile_densities(const GridSet& E, const ChoiceFunction& N);
double mass(const TileCollection& S, const GridSet& E, const ChoiceFunction& N);

struct LemmaResult {
  TileCollection small;
  Forest forest;
  double reference = 0.0;       // the size (or mass) level being halved
  double small_value = 0.0;     // size (or mass) of the remainder
  double top_measure = 0.0;     // sum of |I_T| over the forest
  double counting_constant = 0.0;
};

/// Removes maximal 1-trees whose 2-overlapping part has size above reference/2.
/// Without a reference the size of S is used. The counting constant is
/// sum |I_T| * reference^2 / ||f||_2^2.
LemmaResult size_lemma_decompose(const TileCollection& S, const GridSignal& f,
                                 std::optional<double> reference = std::nullopt);
/// Removes the trees below bi-tiles of density above reference/2. The counting
/// constant is sum |I_T| * reference / |E|.
LemmaResult mass_lemma_decompose(const TileCollection& S, const GridSet& E, const ChoiceFunction& N,
                                 std::optional<double> reference = std::nullopt);

struct ForestBucket {
  int n = 0;
  int m = 0;
  bool by_size = true;  // which lemma produced the bucket
  Forest forest;
  double top_measure = 0.0;
  double size = 0.0;
  double mass = 0.0;
  /// top_measure / min(2^{2n} ||f||^2, 2^m |E|)
  double counting_ratio = 0.0;
};

struct Decomposition {
  std::vector<ForestBucket> buckets;
  /// Tiles on which either size or mass vanishes, grouped into maximal 1-trees.
  Forest residual;
  double max_counting_ratio = 0.0;
};

Decomposition full_decompose(const TileCollection& S, const GridSignal& f, const GridSet& E, const ChoiceFunction& N);

struct TreeEstimate {
  double lhs = 0.0;
  double rhs = 0.0;
  double ratio = 0.0;
  double size = 0.0;
  double mass = 0.0;
};

TreeEstimate tree_estimate(const Tree& tree, const GridSignal& f, const GridSet& E, const ChoiceFunction& N);

/// sup over P in S of inf over I_P of M f (resp. M 1_E).
double size_bound(const TileCollection& S, const GridSignal& f);
double mass_bound(const TileCollection& S, const GridSet& E);

/// The maximal 1-trees covering a collection, tops taken coarsest first.
Forest cover_by_trees(const TileCollection& S);

// CSV: `k,n,freq_offset`.
void write_collection_csv(std::ostream& out, const TileCollection& S);
TileCollection read_collection_csv(std::istream& in, int resolution);

void to_json(nlohmann::json& j, const Tree& t);
void to_json(nlohmann::json& j, const Decomposition& d);
void to_json(nlohmann::json& j, const TreeEstimate& r);

}  // namespace tflab
