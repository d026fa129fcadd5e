#include "tflab/biparam.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <nlohmann/json.hpp>
#include <numbers>
#include <ostream>

#include "tflab/principle.hpp"

namespace tflab {

namespace {

int heap_scale(std::uint64_t id) { return 63 - std::countl_zero(id); }

void require_scale(int j, int L, const char* what) {
  if (j < 0 || j >= L) throw std::invalid_argument(std::string(what) + ": vertical scale must lie in [0, L)");
}

std::vector<GridSignal> flats(const std::vector<Grid2D>& fam) {
  std::vector<GridSignal> out;
  out.reserve(fam.size());
  for (const auto& f : fam) out.push_back(f.flat());
  return out;
}

// Per-rectangle sums of a nonnegative per-cell quantity over R = I x J with
// |J| = 2^-j, indexed like RectCollection. Horizontal scales run 0..L.
std::vector<double> rect_sums(std::span<const double> cells, int L, int j) {
  const std::size_t N = std::size_t{1} << L;
  const std::size_t nb = std::size_t{1} << j;
  const std::size_t h = N >> j;
  std::vector<double> out(nb * 2 * N, 0.0);
  for (std::size_t b = 0; b < nb; ++b) {
    double* s = out.data() + b * 2 * N;
    for (std::size_t x = 0; x < N; ++x) {
      double acc = 0.0;
      for (std::size_t y = b * h; y < (b + 1) * h; ++y) acc += cells[(x << L) + y];
      s[N + x] = acc;
    }
    for (std::size_t id = N - 1; id >= 1; --id) s[id] = s[2 * id] + s[2 * id + 1];
  }
  return out;
}

// <F, h_I (x) h_J> for |J| = 2^-j and every I of scale below L, indexed like
// RectCollection.
std::vector<complex> rect_coefficients(const Grid2D& F, int j) {
  const int L = F.resolution();
  const std::size_t N = F.side();
  const std::size_t nb = std::size_t{1} << j;
  const std::size_t h = N >> j;
  const double vscale = std::sqrt(std::ldexp(1.0, j)) * std::ldexp(1.0, -L);
  std::vector<complex> out(nb * N, complex{});
  std::vector<complex> s(2 * N);
  for (std::size_t b = 0; b < nb; ++b) {
    for (std::size_t x = 0; x < N; ++x) {
      complex acc{};
      for (std::size_t y = b * h; y < b * h + h / 2; ++y) acc += F(x, y);
      for (std::size_t y = b * h + h / 2; y < (b + 1) * h; ++y) acc -= F(x, y);
      s[N + x] = acc * vscale;
    }
    for (std::size_t id = N - 1; id >= 1; --id) s[id] = s[2 * id] + s[2 * id + 1];
    for (std::size_t id = 1; id < N; ++id) {
      const int k = heap_scale(id);
      out[b * N + id] = (s[2 * id] - s[2 * id + 1]) * (std::sqrt(std::ldexp(1.0, k)) * std::ldexp(1.0, -L));
    }
  }
  return out;
}

std::vector<double> cell_mask(const GridSet& S) {
  std::vector<double> out(S.size());
  for (std::size_t i = 0; i < S.size(); ++i) out[i] = S[i] ? 1.0 : 0.0;
  return out;
}

// Densities |R cap S| / |R| indexed like RectCollection.
std::vector<double> rect_densities(const GridSet& S, int j) {
  const int L = square_resolution(S);
  const std::size_t N = std::size_t{1} << L;
  const auto sums = rect_sums(cell_mask(S), L, j);
  std::vector<double> out((N << j), 0.0);
  for (std::size_t b = 0; b < (std::size_t{1} << j); ++b)
    for (std::size_t id = 1; id < N; ++id)
      out[b * N + id] = std::ldexp(sums[b * 2 * N + id], heap_scale(id) + j - 2 * L);
  return out;
}

// Sum of weights over the members below each index (members only count when present).
std::vector<double> subtree_sums(const RectCollection& R, const std::vector<double>& w) {
  const std::size_t N = std::size_t{1} << R.resolution();
  std::vector<double> sub(R.capacity(), 0.0);
  for (std::size_t b = 0; b < (std::size_t{1} << R.j()); ++b) {
    for (std::size_t id = N - 1; id >= 1; --id) {
      const std::size_t i = b * N + id;
      double v = R.contains_index(i) ? w[i] : 0.0;
      if (2 * id < N) v += sub[b * N + 2 * id] + sub[b * N + 2 * id + 1];
      sub[i] = v;
    }
  }
  return sub;
}

double area_of_index(std::size_t id, int j) { return std::ldexp(1.0, -heap_scale(id) - j); }

double size_squared_from(const RectCollection& R, const std::vector<double>& w) {
  const auto sub = subtree_sums(R, w);
  const std::size_t N = std::size_t{1} << R.resolution();
  double best = 0.0;
  for (std::size_t i = 0; i < R.capacity(); ++i)
    if (R.contains_index(i)) best = std::max(best, sub[i] / area_of_index(i % N, R.j()));
  return best;
}

double mass_from(const RectCollection& R, const std::vector<double>& dens) {
  double best = 0.0;
  for (std::size_t i = 0; i < R.capacity(); ++i)
    if (R.contains_index(i)) best = std::max(best, dens[i]);
  return best;
}

RectTree remove_below(RectCollection& R, std::size_t top) {
  const std::size_t N = std::size_t{1} << R.resolution();
  const std::size_t b = top / N;
  RectTree t;
  t.top = R.at(top);
  std::vector<std::size_t> stack{top % N};
  while (!stack.empty()) {
    const std::size_t id = stack.back();
    stack.pop_back();
    if (R.contains_index(b * N + id)) {
      t.members.push_back(R.at(b * N + id));
      R.erase(t.members.back());
    }
    if (2 * id < N) {
      stack.push_back(2 * id);
      stack.push_back(2 * id + 1);
    }
  }
  std::sort(t.members.begin(), t.members.end());
  return t;
}

// Removes the members below every present index whose score exceeds the
// threshold, coarsest first.
std::vector<RectTree> select_trees(RectCollection& R, const std::vector<double>& score, double threshold) {
  const std::size_t N = std::size_t{1} << R.resolution();
  std::vector<RectTree> out;
  for (std::size_t id = 1; id < N; ++id)
    for (std::size_t b = 0; b < (std::size_t{1} << R.j()); ++b) {
      const std::size_t i = b * N + id;
      if (R.contains_index(i) && score[i] > threshold) out.push_back(remove_below(R, i));
    }
  return out;
}

std::vector<RectTree> cover_maximal(RectCollection R) {
  std::vector<double> all(R.capacity(), 1.0);
  return select_trees(R, all, 0.0);
}

double top_measure(const std::vector<RectTree>& trees) {
  double s = 0.0;
  for (const auto& t : trees) s += t.top.area();
  return s;
}

}  // namespace

Grid2D::Grid2D(int resolution) : Grid2D(resolution, std::vector<complex>(std::size_t{1} << (2 * resolution))) {}

Grid2D::Grid2D(int resolution, std::vector<complex> values) : resolution_(resolution), values_(std::move(values)) {
  if (resolution < 0 || 2 * resolution > kMaxResolution) throw std::invalid_argument("Grid2D: resolution out of range");
  if (values_.size() != (std::size_t{1} << (2 * resolution))) throw std::invalid_argument("Grid2D: need 4^L values");
  for (const auto& v : values_)
    if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) throw std::invalid_argument("Grid2D: values must be finite");
}

Grid2D Grid2D::from_flat(const GridSignal& flat) {
  if (flat.resolution() % 2 != 0) throw ResolutionMismatch("Grid2D::from_flat: flat resolution must be even");
  return Grid2D(flat.resolution() / 2, std::vector<complex>(flat.values().begin(), flat.values().end()));
}

GridSignal Grid2D::flat() const { return GridSignal(2 * resolution_, values_); }

std::vector<double> Grid2D::abs() const {
  std::vector<double> out(values_.size());
  std::transform(values_.begin(), values_.end(), out.begin(), [](const complex& v) { return std::abs(v); });
  return out;
}

Grid2D& Grid2D::operator+=(const Grid2D& other) {
  require_same_resolution(resolution_, other.resolution_, "Grid2D +=");
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += other.values_[i];
  return *this;
}

int square_resolution(const GridSet& set) {
  if (set.resolution() % 2 != 0) throw ResolutionMismatch("a set over the square needs an even resolution");
  return set.resolution() / 2;
}

double lp_norm(const Grid2D& f, double p) { return lp_norm(f.flat(), p); }

Grid2D restrict_to(const Grid2D& f, const GridSet& set) { return Grid2D::from_flat(restrict_to(f.flat(), set)); }

double vector_lq_norm(const std::vector<Grid2D>& family, double q) {
  if (family.empty()) throw std::invalid_argument("vector_lq_norm: empty family");
  return vector_lq_norm(VectorSignal(flats(family)), q);
}

GridSet DyadicRectangle::as_set(int resolution) const {
  if (!fits(resolution)) throw std::invalid_argument("DyadicRectangle: finer than the grid");
  GridSet out(2 * resolution);
  const std::size_t x0 = I.first_cell(resolution), y0 = J.first_cell(resolution);
  for (std::size_t x = x0; x < x0 + I.cell_count(resolution); ++x)
    for (std::size_t y = y0; y < y0 + J.cell_count(resolution); ++y) out.set((x << resolution) + y, true);
  return out;
}

Grid2D strong_maximal(const Grid2D& f) {
  const int L = f.resolution();
  const std::size_t N = f.side();
  const auto a = f.abs();
  std::vector<double> best(a.size(), 0.0);
  // col holds averages over (single column x) x (vertical interval of scale ky).
  std::vector<double> col = a;
  for (int ky = L; ky >= 0; --ky) {
    const std::size_t ny = std::size_t{1} << ky;
    if (ky < L) {
      std::vector<double> next(N * ny);
      for (std::size_t x = 0; x < N; ++x)
        for (std::size_t b = 0; b < ny; ++b) next[x * ny + b] = 0.5 * (col[x * 2 * ny + 2 * b] + col[x * 2 * ny + 2 * b + 1]);
      col = std::move(next);
    }
    std::vector<double> cur = col;
    for (int kx = L; kx >= 0; --kx) {
      const std::size_t nx = std::size_t{1} << kx;
      if (kx < L) {
        std::vector<double> next(nx * ny);
        for (std::size_t c = 0; c < nx; ++c)
          for (std::size_t b = 0; b < ny; ++b) next[c * ny + b] = 0.5 * (cur[2 * c * ny + b] + cur[(2 * c + 1) * ny + b]);
        cur = std::move(next);
      }
      for (std::size_t x = 0; x < N; ++x) {
        const double* row = cur.data() + (x >> (L - kx)) * ny;
        for (std::size_t y = 0; y < N; ++y) {
          double& m = best[(x << L) + y];
          m = std::max(m, row[y >> (L - ky)]);
        }
      }
    }
  }
  std::vector<complex> out(best.begin(), best.end());
  return Grid2D(L, std::move(out));
}

GridSet strong_level_set(const GridSet& S, double threshold) {
  const int L = square_resolution(S);
  const Grid2D m = strong_maximal(Grid2D::from_flat(S.indicator()));
  GridSet out(2 * L);
  for (std::size_t i = 0; i < out.size(); ++i) out.set(i, m.values()[i].real() > threshold);
  return out;
}

Grid2D tensor_packet(const DyadicRectangle& R, int resolution) {
  if (R.I.scale >= resolution || R.J.scale >= resolution)
    throw std::invalid_argument("tensor_packet: both scales must lie below the resolution");
  Grid2D out(resolution);
  const double amp = std::sqrt(std::ldexp(1.0, R.I.scale + R.J.scale));
  const std::size_t x0 = R.I.first_cell(resolution), nx = R.I.cell_count(resolution);
  const std::size_t y0 = R.J.first_cell(resolution), ny = R.J.cell_count(resolution);
  for (std::size_t x = x0; x < x0 + nx; ++x)
    for (std::size_t y = y0; y < y0 + ny; ++y) {
      const double sx = x < x0 + nx / 2 ? 1.0 : -1.0;
      const double sy = y < y0 + ny / 2 ? 1.0 : -1.0;
      out(x, y) = amp * sx * sy;
    }
  return out;
}

Grid2D model_Tj(const Grid2D& f, int j) {
  const int L = f.resolution();
  require_scale(j, L, "model_Tj");
  const std::size_t N = f.side();
  // The packets with |J| = 2^-j span the vertical Haar level j; summed over every
  // horizontal interval they span everything of zero horizontal mean.
  Grid2D out(L);
  const std::size_t fine = N >> (j + 1);
  for (std::size_t x = 0; x < N; ++x)
    for (std::size_t b = 0; b < (std::size_t{1} << j); ++b) {
      complex lo{}, hi{};
      for (std::size_t y = 2 * b * fine; y < (2 * b + 1) * fine; ++y) lo += f(x, y);
      for (std::size_t y = (2 * b + 1) * fine; y < (2 * b + 2) * fine; ++y) hi += f(x, y);
      const complex d = (lo - hi) / (2.0 * double(fine));
      for (std::size_t y = 2 * b * fine; y < (2 * b + 1) * fine; ++y) out(x, y) = d;
      for (std::size_t y = (2 * b + 1) * fine; y < (2 * b + 2) * fine; ++y) out(x, y) = -d;
    }
  for (std::size_t y = 0; y < N; ++y) {
    complex mean{};
    for (std::size_t x = 0; x < N; ++x) mean += out(x, y);
    mean /= double(N);
    for (std::size_t x = 0; x < N; ++x) out(x, y) -= mean;
  }
  return out;
}

Grid2D littlewood_paley_Sj2(const Grid2D& f, int j) {
  const int L = f.resolution();
  if (j < -1 || j >= L) throw std::invalid_argument("littlewood_paley_Sj2: band index must lie in [-1, L)");
  const std::size_t N = f.side();
  const std::size_t lo = j < 0 ? 0 : std::size_t{1} << j;
  const std::size_t hi = j < 0 ? 1 : std::size_t{2} << j;
  Grid2D out(L);
  GridSignal column(L);
  for (std::size_t x = 0; x < N; ++x) {
    for (std::size_t y = 0; y < N; ++y) column[y] = f(x, y);
    auto c = walsh_transform(column);
    for (std::size_t l = 0; l < N; ++l)
      if (l < lo || l >= hi) c[l] = 0.0;
    const GridSignal back = inverse_walsh_transform(L, c);
    for (std::size_t y = 0; y < N; ++y) out(x, y) = back[y];
  }
  return out;
}

GridSet build_H_prime_biparam(const GridSet& H, const GridSet& G, double eps, double c_eps) {
  require_same_resolution(H.resolution(), G.resolution(), "build_H_prime_biparam");
  square_resolution(H);
  if (H.is_empty()) throw std::invalid_argument("build_H_prime_biparam: H must have positive measure");
  if (!(eps > 0.0 && eps < 0.5)) throw std::invalid_argument("build_H_prime_biparam: eps must lie in (0, 1/2)");
  if (!(c_eps > 0.0)) throw std::invalid_argument("build_H_prime_biparam: c_eps must be positive");
  if (G.is_empty()) return H;
  const double threshold = c_eps * std::pow(measure(G) / measure(H), 1.0 - eps);
  if (threshold >= 1.0) return H;
  return H - strong_level_set(G, threshold);
}

double strong_weak_constant(const std::vector<GridSet>& sets, double p) {
  if (!(p >= 1.0)) throw std::invalid_argument("strong_weak_constant: p must be at least 1");
  double W = 0.0;
  for (const auto& S : sets) {
    if (S.is_empty()) continue;
    square_resolution(S);
    const Grid2D m = strong_maximal(Grid2D::from_flat(S.indicator()));
    std::vector<double> v;
    v.reserve(m.size());
    for (const auto& z : m.values()) v.push_back(z.real());
    std::sort(v.begin(), v.end(), std::greater<>());
    const double s = double(S.count());
    for (std::size_t i = 0; i < v.size() && v[i] > 0.0; ++i) {
      if (i + 1 < v.size() && v[i + 1] == v[i]) continue;
      W = std::max(W, v[i] * std::pow(double(i + 1) / s, 1.0 / p));
    }
  }
  return W;
}

std::vector<GridSet> strong_weak_test_sets(int resolution, CounterRng& rng, int random_sets) {
  // Level sets of a rectangle indicator do not depend on its position, so one
  // rectangle per shape suffices.
  std::vector<GridSet> sets;
  for (int a = 0; a <= resolution; ++a)
    for (int b = 0; b <= resolution; ++b) sets.push_back(DyadicRectangle{{a, 0}, {b, 0}}.as_set(resolution));
  for (int t = 0; t < random_sets; ++t)
    sets.push_back(random_rect_union(resolution, rng, 1 + int(rng.below(6)), std::max(1, resolution / 2)));
  return sets;
}

double calibrate_c_eps(int resolution, double eps, std::uint64_t seed, int random_sets) {
  if (!(eps > 0.0 && eps < 0.5)) throw std::invalid_argument("calibrate_c_eps: eps must lie in (0, 1/2)");
  CounterRng rng(seed);
  const double p = 1.0 / (1.0 - eps);
  const double W = strong_weak_constant(strong_weak_test_sets(resolution, rng, random_sets), p);
  return std::pow(2.0, 1.0 / p) * W;
}

RectCollection::RectCollection(int resolution, int j) : resolution_(resolution), j_(j) {
  if (resolution < 1 || 2 * resolution > kMaxResolution) throw std::invalid_argument("RectCollection: resolution out of range");
  require_scale(j, resolution, "RectCollection");
  present_.assign(std::size_t{1} << (resolution + j), 0);
}

RectCollection RectCollection::all(int resolution, int j) {
  RectCollection R(resolution, j);
  const std::size_t N = std::size_t{1} << resolution;
  for (std::size_t i = 0; i < R.capacity(); ++i)
    if (i % N != 0) R.present_[i] = 1, ++R.count_;
  return R;
}

RectCollection RectCollection::meeting(const GridSet& set, int j) {
  const int L = square_resolution(set);
  RectCollection R(L, j);
  const auto dens = rect_densities(set, j);
  const std::size_t N = std::size_t{1} << L;
  for (std::size_t i = 0; i < R.capacity(); ++i)
    if (i % N != 0 && dens[i] > 0.0) R.present_[i] = 1, ++R.count_;
  return R;
}

bool RectCollection::admissible(const DyadicRectangle& R) const {
  return R.J.scale == j_ && R.I.scale >= 0 && R.I.scale < resolution_ && R.I.offset < (std::uint64_t{1} << R.I.scale) &&
         R.J.offset < (std::uint64_t{1} << j_);
}

std::size_t RectCollection::index(const DyadicRectangle& R) const {
  if (!admissible(R)) throw std::invalid_argument("RectCollection: rectangle of the wrong scale");
  return (std::size_t(R.J.offset) << resolution_) + heap_id(R.I);
}

DyadicRectangle RectCollection::at(std::size_t i) const {
  const std::size_t N = std::size_t{1} << resolution_;
  return {from_heap_id(i % N), DyadicInterval(j_, i / N)};
}

bool RectCollection::contains(const DyadicRectangle& R) const { return admissible(R) && present_[index(R)] != 0; }

void RectCollection::insert(const DyadicRectangle& R) {
  auto& slot = present_[index(R)];
  if (!slot) slot = 1, ++count_;
}

void RectCollection::erase(const DyadicRectangle& R) {
  auto& slot = present_[index(R)];
  if (slot) slot = 0, --count_;
}

std::vector<DyadicRectangle> RectCollection::rects() const {
  std::vector<DyadicRectangle> out;
  out.reserve(count_);
  for (std::size_t i = 0; i < present_.size(); ++i)
    if (present_[i]) out.push_back(at(i));
  return out;
}

bool RectCollection::is_convex() const {
  const std::size_t N = std::size_t{1} << resolution_;
  for (std::size_t i = 0; i < present_.size(); ++i) {
    if (!present_[i]) continue;
    const std::size_t b = i / N;
    const std::size_t id = i % N;
    if (id == 1 || present_[b * N + id / 2]) continue;
    for (std::size_t a = id / 4; a >= 1; a /= 2)
      if (present_[b * N + a]) return false;
  }
  return true;
}

RectCollection RectCollection::operator-(const RectCollection& other) const {
  require_same_resolution(resolution_, other.resolution_, "RectCollection -");
  if (j_ != other.j_) throw std::invalid_argument("RectCollection -: vertical scales differ");
  RectCollection out = *this;
  for (std::size_t i = 0; i < present_.size(); ++i)
    if (out.present_[i] && other.present_[i]) out.present_[i] = 0, --out.count_;
  return out;
}

bool RectTree::valid(int resolution) const {
  if (!top.fits(resolution)) return false;
  if (members.empty()) return true;
  const int j = members.front().J.scale;
  if (j >= resolution || top.J.scale > j) return false;
  RectCollection c(resolution, j);
  for (const auto& R : members) {
    if (!c.admissible(R) || !top.contains(R)) return false;
    c.insert(R);
  }
  return c.is_convex();
}

double rect_size(const RectCollection& R, const Grid2D& f, const GridSet& H_prime) {
  require_same_resolution(R.resolution(), f.resolution(), "rect_size");
  require_same_resolution(2 * R.resolution(), H_prime.resolution(), "rect_size");
  const auto a = rect_coefficients(restrict_to(f, H_prime), R.j());
  std::vector<double> w(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) w[i] = std::norm(a[i]);
  return std::sqrt(size_squared_from(R, w));
}

double rect_mass(const RectCollection& R, const GridSet& F, const GridSet& G) {
  require_same_resolution(2 * R.resolution(), F.resolution(), "rect_mass");
  require_same_resolution(F.resolution(), G.resolution(), "rect_mass");
  return mass_from(R, rect_densities(F & G, R.j()));
}

RectTreeEstimate rect_tree_estimate(const RectTree& T, const Grid2D& f, const Grid2D& g, const GridSet& H_prime,
                                    const GridSet& G, const GridSet& F) {
  const int L = f.resolution();
  require_same_resolution(L, g.resolution(), "rect_tree_estimate");
  for (const GridSet* S : {&H_prime, &G, &F}) require_same_resolution(2 * L, S->resolution(), "rect_tree_estimate");
  if (!T.valid(L)) throw std::invalid_argument("rect_tree_estimate: invalid tree");
  RectTreeEstimate r;
  if (T.members.empty()) return r;
  RectCollection c(L, T.members.front().J.scale);
  for (const auto& R : T.members) c.insert(R);
  const auto a = rect_coefficients(restrict_to(f, H_prime), c.j());
  const auto b = rect_coefficients(restrict_to(g, G), c.j());
  std::vector<double> terms, w(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) w[i] = std::norm(a[i]);
  for (const auto& R : T.members) {
    const std::size_t i = c.index(R);
    terms.push_back(std::abs(a[i]) * std::abs(b[i]));
  }
  r.lhs = pairwise_sum(std::span<const double>(terms));
  r.size = std::sqrt(size_squared_from(c, w));
  r.mass = rect_mass(c, F, G);
  r.rhs = T.top.area() * r.size * r.mass;
  r.ratio = r.lhs == 0.0 ? 0.0 : r.lhs / r.rhs;
  return r;
}

RectDecomposition rect_decompose(const RectCollection& R, const Grid2D& f, const GridSet& H_prime, const GridSet& E,
                                 const GridSet& F, const GridSet& G) {
  const int L = R.resolution();
  require_same_resolution(L, f.resolution(), "rect_decompose");
  for (const GridSet* S : {&H_prime, &E, &F, &G}) require_same_resolution(2 * L, S->resolution(), "rect_decompose");
  if (!R.is_convex()) throw std::invalid_argument("rect_decompose: collection must be convex");
  RectDecomposition d;
  if (R.empty()) return d;
  const std::size_t N = std::size_t{1} << L;
  const auto a = rect_coefficients(restrict_to(f, H_prime), R.j());
  std::vector<double> w(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) w[i] = std::norm(a[i]);
  const auto dens = rect_densities(F & G, R.j());
  const double e = measure(E);
  const double fm = measure(F);

  RectCollection rem = R;
  double s2 = size_squared_from(rem, w);
  double mu = mass_from(rem, dens);
  if (s2 == 0.0 || mu == 0.0) {
    d.residual = cover_maximal(rem);
    return d;
  }
  int n = dyadic_class(std::sqrt(s2));
  int m = dyadic_class(mu);
  while (!rem.empty()) {
    s2 = size_squared_from(rem, w);
    mu = mass_from(rem, dens);
    if (s2 == 0.0 || mu == 0.0) {
      d.residual = cover_maximal(rem);
      break;
    }
    const bool by_size = std::ldexp(e, 2 * n) <= std::ldexp(fm, m);
    std::vector<RectTree> trees;
    if (by_size) {
      auto sub = subtree_sums(rem, w);
      for (std::size_t i = 0; i < sub.size(); ++i) sub[i] /= area_of_index(i % N == 0 ? 1 : i % N, R.j());
      trees = select_trees(rem, sub, std::ldexp(1.0, -2 * n) / 4.0);
    } else {
      trees = select_trees(rem, dens, std::ldexp(1.0, -m) / 2.0);
    }
    d.convex_throughout = d.convex_throughout && rem.is_convex();
    if (!trees.empty()) {
      RectBucket bk;
      bk.n = n;
      bk.m = m;
      bk.by_size = by_size;
      bk.top_measure = top_measure(trees);
      bk.counting_ratio = bk.top_measure / std::min(std::ldexp(e, 2 * n), std::ldexp(fm, m));
      bk.trees = std::move(trees);
      d.max_counting_ratio = std::max(d.max_counting_ratio, bk.counting_ratio);
      d.buckets.push_back(std::move(bk));
    }
    if (by_size)
      ++n;
    else
      ++m;
  }
  return d;
}

RectTree random_rect_tree(int resolution, int j, CounterRng& rng, double keep, int max_top_scale) {
  require_scale(j, resolution, "random_rect_tree");
  const int kt = int(rng.below(std::uint64_t(std::clamp(max_top_scale, 0, resolution - 1)) + 1));
  const DyadicInterval I(kt, rng.below(std::uint64_t{1} << kt));
  const DyadicInterval J(j, rng.below(std::uint64_t{1} << j));
  RectCollection c(resolution, j);
  std::vector<std::uint64_t> stack{heap_id(I)};
  const std::uint64_t N = std::uint64_t{1} << resolution;
  while (!stack.empty()) {
    const std::uint64_t id = stack.back();
    stack.pop_back();
    if (rng.bernoulli(keep)) c.insert({from_heap_id(id), J});
    if (2 * id < N) {
      stack.push_back(2 * id);
      stack.push_back(2 * id + 1);
    }
  }
  // Fill the chains between members.
  for (const auto& R : c.rects()) {
    std::vector<std::uint64_t> chain;
    for (std::uint64_t a = heap_id(R.I) / 2; a >= heap_id(I); a /= 2) {
      if (c.contains({from_heap_id(a), J})) {
        for (auto x : chain) c.insert({from_heap_id(x), J});
        break;
      }
      chain.push_back(a);
    }
  }
  if (c.empty()) c.insert({I, J});
  return {{I, J}, c.rects()};
}

GridSet random_rect_union(int resolution, CounterRng& rng, int count, int min_scale) {
  GridSet out(2 * resolution);
  min_scale = std::clamp(min_scale, 0, resolution);
  for (int t = 0; t < count; ++t) {
    const int a = min_scale + int(rng.below(std::uint64_t(resolution - min_scale + 1)));
    const int b = min_scale + int(rng.below(std::uint64_t(resolution - min_scale + 1)));
    const DyadicRectangle R{{a, rng.below(std::uint64_t{1} << a)}, {b, rng.below(std::uint64_t{1} << b)}};
    out = out | R.as_set(resolution);
  }
  return out;
}

std::vector<Grid2D> random_grid_family(int resolution, std::size_t J, CounterRng& rng) {
  std::vector<Grid2D> fam;
  for (std::size_t i = 0; i < J; ++i) {
    const GridSet E = random_rect_union(resolution, rng, 1 + int(rng.below(4)), 1);
    Grid2D f(resolution);
    for (std::size_t c = 0; c < f.size(); ++c)
      if (E[c]) f.values()[c] = std::polar(1.0, 2.0 * std::numbers::pi * rng.uniform());
    if (rng.bernoulli(0.5)) f = littlewood_paley_Sj2(f, int(i % std::size_t(resolution)));
    fam.push_back(std::move(f));
  }
  return fam;
}

Thm51Report verify_thm51(const std::vector<Grid2D>& fam, double p, double eps, const Thm51Options& opt) {
  if (!(p > 2.0) || !std::isfinite(p)) throw std::invalid_argument("verify_thm51: p must lie in (2, inf)");
  if (!(eps > 0.0 && eps < 0.5)) throw std::invalid_argument("verify_thm51: eps must lie in (0, 1/2)");
  if (!(opt.q > 1.0 && opt.q < 2.0)) throw std::invalid_argument("verify_thm51: q must lie in (1, 2)");
  if (fam.empty()) throw std::invalid_argument("verify_thm51: empty family");
  const int L = fam.front().resolution();
  if (L < 1) throw std::invalid_argument("verify_thm51: resolution must be at least 1");
  for (const auto& f : fam) require_same_resolution(L, f.resolution(), "verify_thm51");

  Thm51Report r;
  r.p = p;
  r.q = opt.q;
  r.eps = eps;
  r.family_size = fam.size();

  std::vector<Grid2D> out;
  for (std::size_t i = 0; i < fam.size(); ++i) out.push_back(model_Tj(fam[i], int(i % std::size_t(L))));
  r.lhs = vector_lq_norm(out, p);
  r.rhs = vector_lq_norm(fam, p);
  r.ratio = r.rhs > 0.0 ? r.lhs / r.rhs : 0.0;

  {
    std::vector<Grid2D> parts, images;
    Grid2D total(L);
    for (int j = 0; j < L; ++j) {
      parts.push_back(littlewood_paley_Sj2(fam.front(), j));
      images.push_back(model_Tj(parts.back(), j));
      total += images.back();
    }
    const double fn = lp_norm(fam.front(), p);
    r.scalar_ratio = fn > 0.0 ? lp_norm(total, p) / fn : 0.0;
    const double vn = vector_lq_norm(parts, p);
    r.reduction_ratio = vn > 0.0 ? vector_lq_norm(images, p) / vn : 0.0;
  }

  r.c_eps = opt.c_eps ? *opt.c_eps : calibrate_c_eps(L, eps, opt.seed);
  const double q = opt.q;
  r.theta = (1.0 / q - 0.5) / (1.0 / q - 1.0 / p);
  r.exponent = r.theta * (1.0 - eps) / p;

  OperatorFamily ops;
  for (int j = 0; j < L; ++j) {
    const auto T = [j](const GridSignal& g) { return model_Tj(Grid2D::from_flat(g), j).flat(); };
    ops.members.push_back({2 * L, T, T});
  }

  const CounterRng base(opt.seed);
  for (int t = 0; t < opt.trials; ++t) {
    CounterRng rng = base.split(std::uint64_t(t));
    const GridSet H = random_rect_union(L, rng, 6, 1);
    const GridSet G = random_rect_union(L, rng, 1 + int(rng.below(3)), std::max(1, L / 2));
    const GridSet E = random_rect_union(L, rng, 4, 1);
    const GridSet F = random_rect_union(L, rng, 4, 1);
    Grid2D f(L), g(L);
    for (std::size_t c = 0; c < f.size(); ++c) {
      if (E[c]) f.values()[c] = std::polar(1.0, 2.0 * std::numbers::pi * rng.uniform());
      if (F[c]) g.values()[c] = std::polar(1.0, 2.0 * std::numbers::pi * rng.uniform());
    }

    Thm51Trial tr;
    tr.measure_H = measure(H);
    tr.measure_G = measure(G);
    tr.c_eps = r.c_eps;
    GridSet Hp = build_H_prime_biparam(H, G, eps, tr.c_eps);
    tr.measure_ok = 2 * Hp.count() >= H.count();
    while (2 * Hp.count() < H.count()) {
      tr.c_eps *= 2.0;
      Hp = build_H_prime_biparam(H, G, eps, tr.c_eps);
    }
    tr.measure_Hp = measure(Hp);
    const double ratio_GH = tr.measure_G / tr.measure_H;
    tr.mass_cap = tr.c_eps * std::pow(ratio_GH, 1.0 - eps);

    const GridSet full = GridSet::full(2 * L);
    const double mE = measure(E), mF = measure(F);
    for (int j = 0; j < L; ++j) {
      const RectCollection Rj = RectCollection::meeting(Hp, j);
      if (Rj.empty()) continue;
      tr.max_mass = std::max(tr.max_mass, rect_mass(Rj, full, G));
      tr.max_size = std::max(tr.max_size, rect_size(Rj, f, Hp));
      const auto a = rect_coefficients(restrict_to(f, Hp), j);
      const auto b = rect_coefficients(restrict_to(g, G), j);
      std::vector<double> terms;
      for (std::size_t i = 0; i < Rj.capacity(); ++i)
        if (Rj.contains_index(i)) terms.push_back(std::abs(a[i]) * std::abs(b[i]));
      tr.restricted_lhs = std::max(tr.restricted_lhs, pairwise_sum(std::span<const double>(terms)));
      tr.counting_ratio = std::max(tr.counting_ratio, rect_decompose(Rj, f, Hp, E, F, G).max_counting_ratio);
    }
    tr.mass_ok = tr.max_mass <= tr.mass_cap;
    const double lhs = tr.restricted_lhs;
    tr.ratio_p = lhs / (std::pow(ratio_GH, (1.0 - eps) / p) * std::pow(mE, 1.0 / p) * std::pow(mF, 1.0 - 1.0 / p));
    tr.ratio_q = lhs / (std::pow(mE, 1.0 / q) * std::pow(mF, 1.0 - 1.0 / q));
    tr.ratio_2 = lhs / (std::pow(ratio_GH, r.exponent) * std::sqrt(mE * mF));

    const double c_used = tr.c_eps;
    const SubsetBuilder sb = [eps, c_used](const GridSet& h, const GridSet& gg, double) {
      return std::make_pair(build_H_prime_biparam(h, gg, eps, c_used), gg);
    };
    tr.C_p = measure_condition_P(ops, H, G, sb, p, 1, base.split(std::uint64_t(t)).split(1).key()).C_p;

    r.measure_ok = r.measure_ok && tr.measure_ok;
    r.mass_ok = r.mass_ok && tr.mass_ok;
    r.K_p = std::max(r.K_p, tr.ratio_p);
    r.K_q = std::max(r.K_q, tr.ratio_q);
    r.K_2 = std::max(r.K_2, tr.ratio_2);
    r.max_counting_ratio = std::max(r.max_counting_ratio, tr.counting_ratio);
    r.max_C_p = std::max(r.max_C_p, tr.C_p);
    r.trials.push_back(tr);
  }
  r.interpolation_ok = r.K_2 <= std::pow(r.K_p, r.theta) * std::pow(r.K_q, 1.0 - r.theta) * (1.0 + 1e-9);
  return r;
}

void write_grid2d_csv(std::ostream& out, const Grid2D& f) {
  out << "row,col,re,im\n";
  out.precision(17);
  for (std::size_t x = 0; x < f.side(); ++x)
    for (std::size_t y = 0; y < f.side(); ++y) out << x << ',' << y << ',' << f(x, y).real() << ',' << f(x, y).imag() << '\n';
}

Grid2D read_grid2d_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw CsvError(1, "missing header");
  if (csv_fields(line) != std::vector<std::string>{"row", "col", "re", "im"})
    throw CsvError(1, "expected header 'row,col,re,im'");
  struct Entry {
    std::uint64_t x, y;
    complex v;
  };
  std::vector<Entry> entries;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    const auto fields = csv_fields(line);
    if (fields.size() != 4) throw CsvError(row, "expected 4 fields");
    entries.push_back({csv_index(fields[0], row), csv_index(fields[1], row),
                       {csv_double(fields[2], row), csv_double(fields[3], row)}});
  }
  const std::size_t n = entries.size();
  std::size_t side = 1;
  int L = 0;
  while (side * side < n) side *= 2, ++L;
  if (side * side != n || 2 * L > kMaxResolution) throw CsvError(row, "need 4^L entries");
  Grid2D f(L);
  std::vector<std::uint8_t> seen(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& e = entries[i];
    if (e.x >= side || e.y >= side) throw CsvError(i + 2, "row or col out of range");
    const std::size_t c = (e.x << L) + e.y;
    if (seen[c]) throw CsvError(i + 2, "duplicate cell");
    seen[c] = 1;
    f.values()[c] = e.v;
  }
  return f;
}

void to_json(nlohmann::json& j, const RectTreeEstimate& r) {
  j = nlohmann::json{{"lhs", r.lhs}, {"rhs", r.rhs}, {"ratio", r.ratio}, {"size", r.size}, {"mass", r.mass}};
}

void to_json(nlohmann::json& j, const Thm51Report& r) {
  auto trials = nlohmann::json::array();
  for (const auto& t : r.trials)
    trials.push_back({{"measure_H", t.measure_H},
                      {"measure_G", t.measure_G},
                      {"measure_H_prime", t.measure_Hp},
                      {"c_eps", t.c_eps},
                      {"mass_cap", t.mass_cap},
                      {"max_mass", t.max_mass},
                      {"max_size", t.max_size},
                      {"restricted_lhs", t.restricted_lhs},
                      {"ratio_p", t.ratio_p},
                      {"ratio_q", t.ratio_q},
                      {"ratio_2", t.ratio_2},
                      {"counting_ratio", t.counting_ratio},
                      {"C_p", t.C_p},
                      {"measure_ok", t.measure_ok},
                      {"mass_ok", t.mass_ok}});
  j = nlohmann::json{{"p", r.p},
                     {"q", r.q},
                     {"epsilon", r.eps},
                     {"family_size", r.family_size},
                     {"lhs", r.lhs},
                     {"rhs", r.rhs},
                     {"ratio", r.ratio},
                     {"scalar_ratio", r.scalar_ratio},
                     {"reduction_ratio", r.reduction_ratio},
                     {"c_eps", r.c_eps},
                     {"theta", r.theta},
                     {"exponent", r.exponent},
                     {"K_p", r.K_p},
                     {"K_q", r.K_q},
                     {"K_2", r.K_2},
                     {"interpolation_ok", r.interpolation_ok},
                     {"measure_ok", r.measure_ok},
                     {"mass_ok", r.mass_ok},
                     {"max_counting_ratio", r.max_counting_ratio},
                     {"max_C_p", r.max_C_p},
                     {"trials", trials}};
}

}  // namespace tflab
