#pragma once

#include <span>

#include "tflab/dyadic_core.hpp"

namespace tflab::detail {

/// In-place DFT of a 2^L x 2^L row-major array (row index = first coordinate).
/// The inverse is normalized so that inverse(forward(x)) = x.
void fft2(std::span<complex> data, int L, bool inverse);
/// In-place DFT of length 2^L, same normalization.
void fft1(std::span<complex> data, int L, bool inverse);

/// Centered frequency of DFT index k on a grid of n points: k or k - n.
inline long centered(std::size_t k, std::size_t n) {
  return k < n / 2 ? static_cast<long>(k) : static_cast<long>(k) - static_cast<long>(n);
}

}  // namespace tflab::detail
