#include "tflab/walsh_tiles.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <nlohmann/json.hpp>
#include <ostream>
#include <tuple>

#include "tflab/maximal_fs.hpp"

namespace tflab {

namespace {

double half_power(int k) { return std::sqrt(std::ldexp(1.0, k)); }

// Per-resolution helpers for the size functional. For a fixed frequency
// cell xi, the bi-tiles whose upper half contains xi are those of scale k
// with bit k of xi set and frequency offset xi >> (k+1). Among them a convex
// 2-overlapping tree with top I that contains I's own bi-tile is best taken
// as the whole chain-connected component below I; tops without their own
// bi-tile are dominated by a child. So size^2 = max over xi and member tops of
// |I| * (sum of weights of that component).
class SizeEngine {
 public:
  SizeEngine(const TileCollection& S, const TileCoefficients& coef)
      : L_(S.resolution()), coef_(coef), att_(std::size_t{1} << L_, 0.0) {
    lists_.resize(L_);
    for (int k = 0; k < L_; ++k) lists_[k].resize(std::size_t{1} << (L_ - k - 1));
    for (const auto& p : S.tiles()) lists_[p.k][p.l].push_back(p.n);
  }

  // Runs the chain DP for one frequency cell over the members of `present`
  // lying below top (k0, n0). `visit(tile, value)` sees |I| * component weight.
  template <typename Visit>
  void run(std::uint64_t xi, const TileCollection& present, int k0, std::uint64_t n0, Visit&& visit) {
    touched_.clear();
    for (int k = L_ - 1; k >= k0; --k) {
      if (!((xi >> k) & 1u)) continue;
      const std::uint64_t l = xi >> (k + 1);
      const auto& ns = lists_[k][l];
      const std::uint64_t lo = n0 << (k - k0);
      const std::uint64_t hi = (n0 + 1) << (k - k0);
      for (auto it = std::lower_bound(ns.begin(), ns.end(), lo); it != ns.end() && *it < hi; ++it) {
        const BiTile p{k, *it, l};
        if (!present.contains(p)) continue;
        double a = std::norm(coef_.lower(p));
        if (k + 1 < L_) {
          const std::size_t c = (std::size_t{1} << (k + 1)) + 2 * p.n;
          a += att_[c] + att_[c + 1];
        }
        const std::size_t id = (std::size_t{1} << k) + p.n;
        att_[id] = a;
        touched_.push_back(id);
        visit(p, std::ldexp(a, k));
      }
    }
    for (std::size_t id : touched_) att_[id] = 0.0;
  }

  int resolution() const { return L_; }

 private:
  int L_;
  const TileCoefficients& coef_;
  std::vector<std::vector<std::vector<std::uint64_t>>> lists_;
  std::vector<double> att_;
  std::vector<std::size_t> touched_;
};

double size_squared_impl(const TileCollection& S, const TileCoefficients& coef) {
  if (S.empty()) return 0.0;
  SizeEngine engine(S, coef);
  double best = 0.0;
  const std::uint64_t nfreq = std::uint64_t{1} << S.resolution();
  for (std::uint64_t xi = 0; xi < nfreq; ++xi)
    engine.run(xi, S, 0, 0, [&](const BiTile&, double v) { best = std::max(best, v); });
  return best;
}

// Members of `S` in the 1-tree with top (I, xi).
std::vector<BiTile> one_tree(const TileCollection& S, const DyadicInterval& I, std::uint64_t xi) {
  std::vector<BiTile> out;
  const int L = S.resolution();
  for (int k = I.scale; k < L; ++k) {
    const std::uint64_t l = xi >> (k + 1);
    const std::uint64_t lo = I.offset << (k - I.scale);
    const std::uint64_t hi = (I.offset + 1) << (k - I.scale);
    for (std::uint64_t n = lo; n < hi; ++n)
      if (S.contains({k, n, l})) out.push_back({k, n, l});
  }
  return out;
}

Tree remove_tree(TileCollection& S, const DyadicInterval& I, std::uint64_t xi) {
  Tree t{I, xi, one_tree(S, I, xi)};
  for (const auto& p : t.members) S.erase(p);
  return t;
}

double mass_impl(const TileCollection& S, const std::vector<double>& dens) {
  double best = 0.0;
  for (std::size_t i = 0; i < dens.size(); ++i)
    if (S.contains_index(i)) best = std::max(best, dens[i]);
  return best;
}

LemmaResult size_lemma_impl(const TileCollection& S, const TileCoefficients& coef, double f_norm2,
                            std::optional<double> reference) {
  LemmaResult r;
  r.small = S;
  const double sigma = reference ? *reference : std::sqrt(size_squared_impl(S, coef));
  r.reference = sigma;
  if (S.empty() || sigma == 0.0) {
    r.small_value = std::sqrt(size_squared_impl(S, coef));
    return r;
  }
  const double threshold = sigma * sigma / 4.0;
  const int L = S.resolution();
  SizeEngine engine(S, coef);
  std::vector<std::tuple<int, std::uint64_t, std::uint64_t>> candidates;
  for (std::uint64_t xi = 0; xi < (std::uint64_t{1} << L); ++xi)
    engine.run(xi, S, 0, 0, [&](const BiTile& p, double v) {
      if (v > threshold) candidates.emplace_back(p.k, p.n, xi);
    });
  // Largest |I_T| first, then leftmost, then lowest xi. Candidate values only
  // shrink as trees are removed, so one ordered pass suffices.
  std::sort(candidates.begin(), candidates.end());
  for (const auto& [k, n, xi] : candidates) {
    const BiTile top_tile{k, n, xi >> (k + 1)};
    if (!r.small.contains(top_tile)) continue;
    double value = 0.0;
    engine.run(xi, r.small, k, n, [&](const BiTile& p, double v) {
      if (p == top_tile) value = v;
    });
    if (value > threshold) r.forest.push_back(remove_tree(r.small, {k, n}, xi));
  }
  r.small_value = std::sqrt(size_squared_impl(r.small, coef));
  r.top_measure = forest_top_measure(r.forest);
  r.counting_constant = f_norm2 > 0.0 ? r.top_measure * sigma * sigma / f_norm2 : 0.0;
  return r;
}

LemmaResult mass_lemma_impl(const TileCollection& S, const std::vector<double>& dens, double e_measure,
                            std::optional<double> reference) {
  LemmaResult r;
  r.small = S;
  const double mu = reference ? *reference : mass_impl(S, dens);
  r.reference = mu;
  if (S.empty() || mu == 0.0) {
    r.small_value = mass_impl(S, dens);
    return r;
  }
  const int L = S.resolution();
  // Dense order is (k, n, l): largest |I| first, then leftmost, then lowest frequency.
  for (std::size_t i = 0; i < dens.size(); ++i) {
    if (!r.small.contains_index(i) || !(dens[i] > mu / 2.0)) continue;
    const BiTile p = bitile_at(i, L);
    r.forest.push_back(remove_tree(r.small, p.spatial(), p.freq_lo()));
  }
  r.small_value = mass_impl(r.small, dens);
  r.top_measure = forest_top_measure(r.forest);
  r.counting_constant = e_measure > 0.0 ? r.top_measure * mu / e_measure : 0.0;
  return r;
}

TileCollection union_of(int L, const Forest& forest) {
  TileCollection c(L);
  for (const auto& t : forest)
    for (const auto& p : t.members) c.insert(p);
  return c;
}

}  // namespace

bool Tile::fits(int resolution) const {
  return k >= 0 && k <= resolution && n < (std::uint64_t{1} << k) && l < (std::uint64_t{1} << (resolution - k));
}

bool BiTile::fits(int resolution) const {
  return k >= 0 && k < resolution && n < (std::uint64_t{1} << k) && l < (std::uint64_t{1} << (resolution - k - 1));
}

bool fefferman_le(const BiTile& p, const BiTile& q) {
  return q.spatial().contains(p.spatial()) && p.freq_lo() <= q.freq_lo() && q.freq_hi() <= p.freq_hi();
}

std::size_t bitile_count(int resolution) {
  return resolution <= 0 ? 0 : static_cast<std::size_t>(resolution) << (resolution - 1);
}

std::size_t bitile_index(const BiTile& p, int resolution) {
  return (static_cast<std::size_t>(p.k) << (resolution - 1)) + (p.n << (resolution - p.k - 1)) + p.l;
}

BiTile bitile_at(std::size_t index, int resolution) {
  BiTile p;
  p.k = static_cast<int>(index >> (resolution - 1));
  const std::size_t rem = index & ((std::size_t{1} << (resolution - 1)) - 1);
  p.n = rem >> (resolution - p.k - 1);
  p.l = rem & ((std::size_t{1} << (resolution - p.k - 1)) - 1);
  return p;
}

double packet_value(const Tile& t, std::size_t cell, int resolution) {
  const int m = resolution - t.k;
  if ((cell >> m) != t.n) return 0.0;
  return walsh_sign(t.l, cell & ((std::size_t{1} << m) - 1), m) * half_power(t.k);
}

GridSignal walsh_packet(const Tile& t, int resolution) {
  if (!t.fits(resolution)) throw std::invalid_argument("walsh_packet: tile does not fit the grid resolution");
  GridSignal out(resolution);
  const std::size_t first = t.spatial().first_cell(resolution);
  for (std::size_t x = first; x < first + t.spatial().cell_count(resolution); ++x)
    out[x] = packet_value(t, x, resolution);
  return out;
}

// ---------------------------------------------------------------------------

ChoiceFunction::ChoiceFunction(int resolution, std::vector<double> values)
    : resolution_(resolution), values_(std::move(values)) {
  if (values_.size() != (std::size_t{1} << resolution)) throw std::invalid_argument("choice function length must be 2^L");
  const double top = std::ldexp(1.0, resolution);
  for (double v : values_)
    if (!(v >= 0.0 && v < top)) throw std::invalid_argument("choice function values must lie in [0, 2^L)");
}

ChoiceFunction ChoiceFunction::constant(int resolution, double value) {
  return ChoiceFunction(resolution, std::vector<double>(std::size_t{1} << resolution, value));
}

// ---------------------------------------------------------------------------

TileCollection::TileCollection(int resolution) : resolution_(resolution), present_(bitile_count(resolution), 0) {
  if (resolution < 0 || resolution > kMaxResolution) throw std::invalid_argument("resolution out of range");
}

TileCollection::TileCollection(int resolution, const std::vector<BiTile>& tiles) : TileCollection(resolution) {
  for (const auto& p : tiles) insert(p);
}

TileCollection TileCollection::all(int resolution) {
  TileCollection c(resolution);
  std::fill(c.present_.begin(), c.present_.end(), 1);
  c.count_ = c.present_.size();
  return c;
}

bool TileCollection::contains(const BiTile& p) const {
  return p.fits(resolution_) && present_[bitile_index(p, resolution_)] != 0;
}

void TileCollection::insert(const BiTile& p) {
  if (!p.fits(resolution_)) throw std::invalid_argument("bi-tile does not fit the collection resolution");
  auto& slot = present_[bitile_index(p, resolution_)];
  count_ += slot == 0;
  slot = 1;
}

void TileCollection::erase(const BiTile& p) {
  if (!p.fits(resolution_)) return;
  auto& slot = present_[bitile_index(p, resolution_)];
  count_ -= slot != 0;
  slot = 0;
}

std::vector<BiTile> TileCollection::tiles() const {
  std::vector<BiTile> out;
  out.reserve(count_);
  for (std::size_t i = 0; i < present_.size(); ++i)
    if (present_[i]) out.push_back(bitile_at(i, resolution_));
  return out;
}

// below[P]: some member lies below P; above[P]: some member lies above P.
// Lower covers of (k,n,l) are (k+1, 2n+c, l/2); upper covers are (k-1, n/2, 2l+c).
namespace {

std::vector<std::uint8_t> reach_below(const TileCollection& S) {
  const int L = S.resolution();
  std::vector<std::uint8_t> below(bitile_count(L), 0);
  for (int k = L - 1; k >= 0; --k)
    for (std::uint64_t n = 0; n < (std::uint64_t{1} << k); ++n)
      for (std::uint64_t l = 0; l < (std::uint64_t{1} << (L - k - 1)); ++l) {
        const std::size_t i = bitile_index({k, n, l}, L);
        bool b = S.contains_index(i);
        if (!b && k + 1 < L)
          b = below[bitile_index({k + 1, 2 * n, l >> 1}, L)] || below[bitile_index({k + 1, 2 * n + 1, l >> 1}, L)];
        below[i] = b;
      }
  return below;
}

std::vector<std::uint8_t> reach_above(const TileCollection& S) {
  const int L = S.resolution();
  std::vector<std::uint8_t> above(bitile_count(L), 0);
  for (int k = 0; k < L; ++k)
    for (std::uint64_t n = 0; n < (std::uint64_t{1} << k); ++n)
      for (std::uint64_t l = 0; l < (std::uint64_t{1} << (L - k - 1)); ++l) {
        const std::size_t i = bitile_index({k, n, l}, L);
        bool a = S.contains_index(i);
        if (!a && k > 0)
          a = above[bitile_index({k - 1, n >> 1, 2 * l}, L)] || above[bitile_index({k - 1, n >> 1, 2 * l + 1}, L)];
        above[i] = a;
      }
  return above;
}

}  // namespace

bool TileCollection::is_convex() const {
  const int L = resolution_;
  if (count_ == 0) return true;
  const auto below = reach_below(*this);
  for (std::size_t i = 0; i < present_.size(); ++i) {
    if (!present_[i]) continue;
    const BiTile q = bitile_at(i, L);
    if (q.k + 1 >= L) continue;
    for (std::uint64_t c = 0; c < 2; ++c) {
      const std::size_t r = bitile_index({q.k + 1, 2 * q.n + c, q.l >> 1}, L);
      if (!present_[r] && below[r]) return false;
    }
  }
  return true;
}

TileCollection TileCollection::convex_hull() const {
  const auto below = reach_below(*this);
  const auto above = reach_above(*this);
  TileCollection out(resolution_);
  for (std::size_t i = 0; i < present_.size(); ++i)
    if (below[i] && above[i]) {
      out.present_[i] = 1;
      ++out.count_;
    }
  return out;
}

TileCollection TileCollection::operator|(const TileCollection& other) const {
  require_same_resolution(resolution_, other.resolution_, "TileCollection union");
  TileCollection out(resolution_);
  for (std::size_t i = 0; i < present_.size(); ++i) {
    out.present_[i] = present_[i] | other.present_[i];
    out.count_ += out.present_[i];
  }
  return out;
}

TileCollection TileCollection::operator-(const TileCollection& other) const {
  require_same_resolution(resolution_, other.resolution_, "TileCollection difference");
  TileCollection out(resolution_);
  for (std::size_t i = 0; i < present_.size(); ++i) {
    out.present_[i] = present_[i] && !other.present_[i];
    out.count_ += out.present_[i];
  }
  return out;
}

bool Tree::admits(const BiTile& p) const {
  return top.contains(p.spatial()) && p.freq_lo() <= xi && xi < p.freq_hi();
}

double forest_top_measure(const Forest& forest) {
  std::vector<double> lengths;
  lengths.reserve(forest.size());
  for (const auto& t : forest) lengths.push_back(t.top.length());
  return pairwise_sum(std::span<const double>(lengths));
}

// ---------------------------------------------------------------------------

TileCoefficients::TileCoefficients(const GridSignal& f)
    : resolution_(f.resolution()), coef_(static_cast<std::size_t>(f.resolution() + 1) << f.resolution()) {
  const int L = resolution_;
  const std::size_t N = f.size();
  std::vector<complex> block;
  for (int k = 0; k <= L; ++k) {
    const int m = L - k;
    const std::size_t len = std::size_t{1} << m;
    const double scale = std::ldexp(half_power(k), -L);
    for (std::size_t n = 0; n < (std::size_t{1} << k); ++n) {
      block.assign(f.values().begin() + static_cast<std::ptrdiff_t>(n * len),
                   f.values().begin() + static_cast<std::ptrdiff_t>((n + 1) * len));
      hadamard_in_place(block);
      complex* out = coef_.data() + k * N + n * len;
      for (std::size_t l = 0; l < len; ++l) out[l] = block[reverse_bits(l, m)] * scale;
    }
  }
}

complex TileCoefficients::operator()(const Tile& t) const {
  const std::size_t N = std::size_t{1} << resolution_;
  return coef_[t.k * N + (t.n << (resolution_ - t.k)) + t.l];
}

std::vector<complex> upper_pairings(const GridSignal& g, const ChoiceFunction& N) {
  require_same_resolution(g.resolution(), N.resolution(), "upper_pairings");
  const int L = g.resolution();
  std::vector<complex> out(bitile_count(L));
  const double h = g.cell_measure();
  for (std::size_t x = 0; x < g.size(); ++x) {
    if (g[x] == complex{}) continue;
    const std::uint64_t nu = N.cell(x);
    for (int k = 0; k < L; ++k) {
      const std::uint64_t l2 = nu >> k;
      if (!(l2 & 1u)) continue;
      const Tile up{k, x >> (L - k), l2};
      out[bitile_index({k, up.n, l2 >> 1}, L)] += g[x] * (packet_value(up, x, L) * h);
    }
  }
  return out;
}

GridSignal model_carleson(const GridSignal& f, const ChoiceFunction& N, const TileCollection& S) {
  require_same_resolution(f.resolution(), N.resolution(), "model_carleson");
  require_same_resolution(f.resolution(), S.resolution(), "model_carleson");
  const int L = f.resolution();
  GridSignal out(L);
  if (S.empty()) return out;
  const TileCoefficients coef(f);
  for (std::size_t x = 0; x < f.size(); ++x) {
    const std::uint64_t nu = N.cell(x);
    complex acc{};
    for (int k = 0; k < L; ++k) {
      const std::uint64_t l2 = nu >> k;
      if (!(l2 & 1u)) continue;
      const BiTile p{k, x >> (L - k), l2 >> 1};
      if (!S.contains(p)) continue;
      acc += coef.lower(p) * packet_value(p.upper(), x, L);
    }
    out[x] = acc;
  }
  return out;
}

GridSignal model_carleson_adjoint(const GridSignal& g, const ChoiceFunction& N, const TileCollection& S) {
  require_same_resolution(g.resolution(), N.resolution(), "model_carleson_adjoint");
  require_same_resolution(g.resolution(), S.resolution(), "model_carleson_adjoint");
  const int L = g.resolution();
  GridSignal out(L);
  if (S.empty()) return out;
  const auto a = upper_pairings(g, N);
  std::vector<complex> block;
  for (int k = 0; k < L; ++k) {
    const int m = L - k;
    const std::size_t len = std::size_t{1} << m;
    for (std::uint64_t n = 0; n < (std::uint64_t{1} << k); ++n) {
      block.assign(len, complex{});
      bool any = false;
      for (std::uint64_t l = 0; l < len / 2; ++l) {
        const BiTile p{k, n, l};
        const std::size_t i = bitile_index(p, L);
        if (!S.contains_index(i) || a[i] == complex{}) continue;
        block[reverse_bits(2 * l, m)] += a[i] * half_power(k);
        any = true;
      }
      if (!any) continue;
      hadamard_in_place(block);
      for (std::size_t c = 0; c < len; ++c) out[n * len + c] += block[c];
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

double size_squared(const TileCollection& S, const TileCoefficients& coef) {
  require_same_resolution(S.resolution(), coef.resolution(), "size");
  return size_squared_impl(S, coef);
}

double size(const TileCollection& S, const GridSignal& f) {
  require_same_resolution(S.resolution(), f.resolution(), "size");
  return std::sqrt(size_squared_impl(S, TileCoefficients(f)));
}

std::vector<double> tile_densities(const GridSet& E, const ChoiceFunction& N) {
  require_same_resolution(E.resolution(), N.resolution(), "tile_densities");
  const int L = E.resolution();
  std::vector<std::uint32_t> counts(bitile_count(L), 0);
  for (std::size_t x = 0; x < E.size(); ++x) {
    if (!E[x]) continue;
    const std::uint64_t nu = N.cell(x);
    for (int k = 0; k < L; ++k) ++counts[bitile_index({k, x >> (L - k), nu >> (k + 1)}, L)];
  }
  std::vector<double> dens(counts.size());
  for (std::size_t i = 0; i < counts.size(); ++i) dens[i] = std::ldexp(double(counts[i]), bitile_at(i, L).k - L);
  return dens;
}

double mass(const TileCollection& S, const GridSet& E, const ChoiceFunction& N) {
  require_same_resolution(S.resolution(), E.resolution(), "mass");
  return mass_impl(S, tile_densities(E, N));
}

LemmaResult size_lemma_decompose(const TileCollection& S, const GridSignal& f, std::optional<double> reference) {
  require_same_resolution(S.resolution(), f.resolution(), "size_lemma_decompose");
  const double n2 = lp_norm(f, 2.0);
  return size_lemma_impl(S, TileCoefficients(f), n2 * n2, reference);
}

LemmaResult mass_lemma_decompose(const TileCollection& S, const GridSet& E, const ChoiceFunction& N,
                                 std::optional<double> reference) {
  require_same_resolution(S.resolution(), E.resolution(), "mass_lemma_decompose");
  return mass_lemma_impl(S, tile_densities(E, N), measure(E), reference);
}

Forest cover_by_trees(const TileCollection& S) {
  Forest out;
  TileCollection rem = S;
  const int L = S.resolution();
  for (std::size_t i = 0; i < bitile_count(L); ++i) {
    if (!rem.contains_index(i)) continue;
    const BiTile p = bitile_at(i, L);
    out.push_back(remove_tree(rem, p.spatial(), p.freq_lo()));
  }
  return out;
}

Decomposition full_decompose(const TileCollection& S, const GridSignal& f, const GridSet& E, const ChoiceFunction& N) {
  const int L = S.resolution();
  require_same_resolution(L, f.resolution(), "full_decompose");
  require_same_resolution(L, E.resolution(), "full_decompose");
  require_same_resolution(L, N.resolution(), "full_decompose");
  Decomposition d;
  if (S.empty()) return d;
  const TileCoefficients coef(f);
  const auto dens = tile_densities(E, N);
  const double fn = lp_norm(f, 2.0);
  const double f2 = fn * fn;
  const double e = measure(E);

  TileCollection rem = S;
  const double s0 = size_squared_impl(rem, coef);
  const double m0 = mass_impl(rem, dens);
  if (s0 == 0.0 || m0 == 0.0) {
    d.residual = cover_by_trees(rem);
    return d;
  }
  int n = dyadic_class(std::sqrt(s0));
  int m = dyadic_class(m0);
  while (!rem.empty()) {
    if (size_squared_impl(rem, coef) == 0.0 || mass_impl(rem, dens) == 0.0) {
      d.residual = cover_by_trees(rem);
      break;
    }
    const bool by_size = std::ldexp(f2, 2 * n) <= std::ldexp(e, m);
    LemmaResult r = by_size ? size_lemma_impl(rem, coef, f2, std::ldexp(1.0, -n))
                            : mass_lemma_impl(rem, dens, e, std::ldexp(1.0, -m));
    if (!r.forest.empty()) {
      ForestBucket b;
      b.n = n;
      b.m = m;
      b.by_size = by_size;
      const TileCollection members = union_of(L, r.forest);
      b.size = std::sqrt(size_squared_impl(members, coef));
      b.mass = mass_impl(members, dens);
      b.top_measure = r.top_measure;
      b.counting_ratio = b.top_measure / std::min(std::ldexp(f2, 2 * n), std::ldexp(e, m));
      b.forest = std::move(r.forest);
      d.max_counting_ratio = std::max(d.max_counting_ratio, b.counting_ratio);
      d.buckets.push_back(std::move(b));
    }
    rem = std::move(r.small);
    if (by_size)
      ++n;
    else
      ++m;
  }
  return d;
}

TreeEstimate tree_estimate(const Tree& tree, const GridSignal& f, const GridSet& E, const ChoiceFunction& N) {
  const int L = f.resolution();
  require_same_resolution(L, E.resolution(), "tree_estimate");
  require_same_resolution(L, N.resolution(), "tree_estimate");
  for (const auto& p : tree.members)
    if (!tree.admits(p)) throw std::invalid_argument("tree_estimate: member outside the tree's top data");
  const TileCoefficients coef(f);
  const auto up = upper_pairings(E.indicator(), N);
  std::vector<double> terms;
  terms.reserve(tree.members.size());
  for (const auto& p : tree.members) terms.push_back(std::abs(coef.lower(p)) * std::abs(up[bitile_index(p, L)]));
  TreeEstimate r;
  r.lhs = pairwise_sum(std::span<const double>(terms));
  const TileCollection members(L, tree.members);
  r.size = std::sqrt(size_squared_impl(members, coef));
  r.mass = mass_impl(members, tile_densities(E, N));
  r.rhs = tree.top.length() * r.size * r.mass;
  r.ratio = r.lhs == 0.0 ? 0.0 : r.lhs / r.rhs;
  return r;
}

namespace {

double sup_inf_over_tiles(const TileCollection& S, const std::vector<double>& profile) {
  const std::size_t n = profile.size();
  std::vector<double> mins(2 * n);
  std::copy(profile.begin(), profile.end(), mins.begin() + static_cast<std::ptrdiff_t>(n));
  for (std::size_t id = n - 1; id >= 1; --id) mins[id] = std::min(mins[2 * id], mins[2 * id + 1]);
  double best = 0.0;
  for (const auto& p : S.tiles()) best = std::max(best, mins[heap_id(p.spatial())]);
  return best;
}

}  // namespace

double size_bound(const TileCollection& S, const GridSignal& f) {
  require_same_resolution(S.resolution(), f.resolution(), "size_bound");
  return sup_inf_over_tiles(S, dyadic_maximal(f.abs(), f.resolution()));
}

double mass_bound(const TileCollection& S, const GridSet& E) {
  require_same_resolution(S.resolution(), E.resolution(), "mass_bound");
  return sup_inf_over_tiles(S, dyadic_maximal(E.indicator().abs(), E.resolution()));
}

// ---------------------------------------------------------------------------

void write_collection_csv(std::ostream& out, const TileCollection& S) {
  out << "k,n,freq_offset\n";
  for (const auto& p : S.tiles()) out << p.k << ',' << p.n << ',' << p.l << '\n';
}

TileCollection read_collection_csv(std::istream& in, int resolution) {
  std::string line;
  if (!std::getline(in, line)) throw CsvError(1, "missing header");
  if (csv_fields(line) != std::vector<std::string>{"k", "n", "freq_offset"})
    throw CsvError(1, "expected header 'k,n,freq_offset'");
  TileCollection S(resolution);
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    const auto fields = csv_fields(line);
    if (fields.size() != 3) throw CsvError(row, "expected 3 fields");
    const std::uint64_t k = csv_index(fields[0], row);
    const BiTile p{static_cast<int>(std::min<std::uint64_t>(k, 1u << 20)), csv_index(fields[1], row),
                   csv_index(fields[2], row)};
    if (!p.fits(resolution)) throw CsvError(row, "bi-tile does not fit resolution " + std::to_string(resolution));
    S.insert(p);
  }
  return S;
}

void to_json(nlohmann::json& j, const Tree& t) {
  j = nlohmann::json{{"top_scale", t.top.scale}, {"top_offset", t.top.offset}, {"xi", t.xi}, {"members", t.members.size()}};
}

void to_json(nlohmann::json& j, const Decomposition& d) {
  auto buckets = nlohmann::json::array();
  for (const auto& b : d.buckets)
    buckets.push_back({{"n", b.n},
                       {"m", b.m},
                       {"lemma", b.by_size ? "size" : "mass"},
                       {"trees", b.forest.size()},
                       {"top_measure", b.top_measure},
                       {"size", b.size},
                       {"mass", b.mass},
                       {"counting_ratio", b.counting_ratio}});
  j = nlohmann::json{{"buckets", buckets},
                     {"residual_trees", d.residual.size()},
                     {"max_counting_ratio", d.max_counting_ratio}};
}

void to_json(nlohmann::json& j, const TreeEstimate& r) {
  j = nlohmann::json{{"lhs", r.lhs}, {"rhs", r.rhs}, {"ratio", r.ratio}, {"size", r.size}, {"mass", r.mass}};
}

}  // namespace tflab
