#pragma once

// Independent brute-force references shared by the unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "tflab/biparam.hpp"
#include "tflab/dyadic_core.hpp"
#include "tflab/walsh_tiles.hpp"

namespace oracle {

using namespace tflab;

/// Averages over every dyadic interval, summed directly.
inline std::vector<double> maximal(const std::vector<double>& a, int L) {
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

inline std::vector<BiTile> universe(int L) {
  std::vector<BiTile> all;
  for (int k = 0; k < L; ++k)
    for (std::uint64_t n = 0; n < (std::uint64_t{1} << k); ++n)
      for (std::uint64_t l = 0; l < (std::uint64_t{1} << (L - k - 1)); ++l) all.push_back({k, n, l});
  return all;
}

/// Convexity by scanning every intermediate bi-tile of the universe.
inline bool convex(const std::vector<BiTile>& S, int L) {
  const auto all = universe(L);
  auto in = [&](const BiTile& r) { return std::find(S.begin(), S.end(), r) != S.end(); };
  for (const auto& p : S)
    for (const auto& q : S)
      if (fefferman_le(p, q))
        for (const auto& r : all)
          if (fefferman_le(p, r) && fefferman_le(r, q) && !in(r)) return false;
  return true;
}

/// size^2 by enumerating every subset of a small collection that is convex,
/// shares a frequency cell in all upper halves, and using the smallest
/// dyadic interval containing all spatial intervals as the top.
inline double size_squared(const std::vector<BiTile>& S, const GridSignal& f) {
  const int L = f.resolution();
  const std::size_t m = S.size();
  std::vector<double> w(m);
  for (std::size_t i = 0; i < m; ++i) w[i] = std::norm(inner_product(f, walsh_packet(S[i].lower(), L)));
  // Per comparable pair: bitmask of required intermediates, or "forbidden".
  const auto all = universe(L);
  std::vector<std::uint32_t> need_a, need_b, need_mask;
  for (std::size_t a = 0; a < m; ++a)
    for (std::size_t b = 0; b < m; ++b) {
      if (a == b || !fefferman_le(S[a], S[b])) continue;
      std::uint32_t mask = 0;
      bool ok = true;
      for (const auto& r : all) {
        if (!(fefferman_le(S[a], r) && fefferman_le(r, S[b]))) continue;
        const auto it = std::find(S.begin(), S.end(), r);
        if (it == S.end()) {
          ok = false;
          break;
        }
        mask |= 1u << (it - S.begin());
      }
      need_a.push_back(std::uint32_t(a));
      need_b.push_back(std::uint32_t(b));
      need_mask.push_back(ok ? mask : 0xffffffffu);
    }
  double best = 0.0;
  for (std::uint32_t T = 1; T < (1u << m); ++T) {
    bool ok = true;
    for (std::size_t c = 0; c < need_a.size() && ok; ++c)
      if ((T >> need_a[c] & 1u) && (T >> need_b[c] & 1u) && (need_mask[c] & T) != need_mask[c]) ok = false;
    if (!ok) continue;
    std::uint64_t lo = 0, hi = std::uint64_t{1} << L;
    DyadicInterval top;
    bool first = true;
    double sum = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      if (!(T >> i & 1u)) continue;
      const Tile up = S[i].upper();
      lo = std::max(lo, up.freq_lo());
      hi = std::min(hi, up.freq_hi());
      if (first) {
        top = S[i].spatial();
        first = false;
      } else {
        while (!top.contains(S[i].spatial())) top = top.parent();
      }
      sum += w[i];
    }
    if (lo >= hi) continue;
    best = std::max(best, sum / top.length());
  }
  return best;
}

/// Strong maximal function by summing every dyadic rectangle directly.
inline std::vector<double> strong_maximal(const std::vector<double>& a, int L) {
  const std::size_t N = std::size_t{1} << L;
  std::vector<double> out(N * N, 0.0);
  for (int kx = 0; kx <= L; ++kx)
    for (int ky = 0; ky <= L; ++ky)
      for (std::size_t ox = 0; ox < (std::size_t{1} << kx); ++ox)
        for (std::size_t oy = 0; oy < (std::size_t{1} << ky); ++oy) {
          const std::size_t wx = N >> kx, wy = N >> ky;
          double s = 0.0;
          for (std::size_t x = ox * wx; x < (ox + 1) * wx; ++x)
            for (std::size_t y = oy * wy; y < (oy + 1) * wy; ++y) s += a[x * N + y];
          const double avg = s / double(wx * wy);
          for (std::size_t x = ox * wx; x < (ox + 1) * wx; ++x)
            for (std::size_t y = oy * wy; y < (oy + 1) * wy; ++y) out[x * N + y] = std::max(out[x * N + y], avg);
        }
  return out;
}

/// Every rectangle of vertical scale j and horizontal scale below L.
inline std::vector<DyadicRectangle> rect_universe(int L, int j) {
  std::vector<DyadicRectangle> all;
  for (int k = 0; k < L; ++k)
    for (std::uint64_t n = 0; n < (std::uint64_t{1} << k); ++n)
      for (std::uint64_t b = 0; b < (std::uint64_t{1} << j); ++b) all.push_back({{k, n}, {j, b}});
  return all;
}

inline DyadicInterval common_ancestor(DyadicInterval a, DyadicInterval b) {
  while (a.scale > b.scale) a = a.parent();
  while (b.scale > a.scale) b = b.parent();
  while (a != b) a = a.parent(), b = b.parent();
  return a;
}

/// size^2 by enumerating every subset, checking convexity against the universe
/// and dividing by the area of the smallest enclosing rectangle. Coefficients
/// come from explicit inner products with the tensor packets.
inline double rect_size_squared(const std::vector<DyadicRectangle>& S, const Grid2D& f, const GridSet& Hp) {
  const int L = f.resolution();
  const Grid2D fh = restrict_to(f, Hp);
  std::vector<double> w;
  for (const auto& R : S) {
    const Grid2D phi = tensor_packet(R, L);
    complex acc{};
    for (std::size_t c = 0; c < phi.size(); ++c) acc += fh.values()[c] * phi.values()[c];
    w.push_back(std::norm(acc * std::ldexp(1.0, -2 * L)));
  }
  // For every nested pair, the members of S strictly between them; a pair with
  // an intermediate outside S can never sit in one convex subset.
  const auto uni = rect_universe(L, S.empty() ? 0 : S.front().J.scale);
  const std::size_t n = S.size();
  std::vector<std::uint32_t> need(n * n, 0);
  std::vector<std::uint8_t> banned(n * n, 0);
  for (std::size_t lo = 0; lo < n; ++lo)
    for (std::size_t hi = 0; hi < n; ++hi) {
      if (lo == hi || !S[hi].contains(S[lo])) continue;
      for (const auto& mid : uni) {
        if (!S[hi].contains(mid) || !mid.contains(S[lo])) continue;
        const auto it = std::find(S.begin(), S.end(), mid);
        if (it == S.end())
          banned[lo * n + hi] = 1;
        else
          need[lo * n + hi] |= 1u << (it - S.begin());
      }
    }
  double best = 0.0;
  for (std::uint32_t mask = 1; mask < (1u << n); ++mask) {
    std::vector<DyadicRectangle> T;
    double sum = 0.0;
    bool ok = true;
    for (std::size_t i = 0; i < n; ++i) {
      if (!(mask >> i & 1u)) continue;
      T.push_back(S[i]);
      sum += w[i];
      for (std::size_t k = 0; k < n; ++k)
        if (mask >> k & 1u)
          if (banned[i * n + k] || (need[i * n + k] & ~mask)) ok = false;
    }
    if (!ok) continue;
    DyadicRectangle top = T.front();
    for (const auto& R : T) top = {common_ancestor(top.I, R.I), common_ancestor(top.J, R.J)};
    best = std::max(best, sum / top.area());
  }
  return best;
}

}  // namespace oracle
