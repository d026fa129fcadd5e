#include "tflab/rng.hpp"

#include <cmath>
#include <numbers>

namespace tflab {

// Box-Muller on our own uniforms so the stream does not depend on the
// standard library's distribution implementation.
double CounterRng::normal() {
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace tflab
