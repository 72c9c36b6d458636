#include "ufd/random.h"

#include <cmath>
#include <numbers>

namespace ufd {

double Rng::normal() noexcept {
  const double u1 = unit_interval_open_closed(next());
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace ufd
