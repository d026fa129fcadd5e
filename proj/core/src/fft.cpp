#include "fft.hpp"

#include <fftw3.h>

#include <map>
#include <mutex>
#include <tuple>

namespace tflab::detail {

namespace {

// FFTW's planner is not thread-safe; executing a finished plan is.
std::mutex plan_mutex;

fftw_plan plan_for(int dims, int L, bool inverse) {
  static std::map<std::tuple<int, int, bool>, fftw_plan> cache;
  std::lock_guard lock(plan_mutex);
  const auto key = std::make_tuple(dims, L, inverse);
  if (auto it = cache.find(key); it != cache.end()) return it->second;
  const int n = 1 << L;
  const std::size_t total = dims == 2 ? std::size_t(n) * n : std::size_t(n);
  auto* scratch = fftw_alloc_complex(total);
  const int sign = inverse ? FFTW_BACKWARD : FFTW_FORWARD;
  const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
  fftw_plan p = dims == 2 ? fftw_plan_dft_2d(n, n, scratch, scratch, sign, flags)
                          : fftw_plan_dft_1d(n, scratch, scratch, sign, flags);
  fftw_free(scratch);
  cache.emplace(key, p);
  return p;
}

void run(std::span<complex> data, int dims, int L, bool inverse) {
  auto* z = reinterpret_cast<fftw_complex*>(data.data());
  fftw_execute_dft(plan_for(dims, L, inverse), z, z);
  if (inverse) {
    const double s = 1.0 / double(data.size());
    for (auto& v : data) v *= s;
  }
}

}  // namespace

void fft2(std::span<complex> data, int L, bool inverse) {
  if (data.size() != (std::size_t{1} << (2 * L))) throw std::invalid_argument("fft2: size must be 4^L");
  run(data, 2, L, inverse);
}

void fft1(std::span<complex> data, int L, bool inverse) {
  if (data.size() != (std::size_t{1} << L)) throw std::invalid_argument("fft1: size must be 2^L");
  run(data, 1, L, inverse);
}

}  // namespace tflab::detail
