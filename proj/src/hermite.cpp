#include "cps/hermite.hpp"

#include <cmath>
#include <numbers>

namespace cps {

void hermite_functions(double x, std::span<double> out) {
  if (out.empty()) return;
  // Forward recurrence is stable for the regular solution. The Gaussian
  // envelope is applied up front, so deep in the tail the values underflow
  // to zero instead of overflowing.
  out[0] = std::pow(std::numbers::pi, -0.25) * std::exp(-0.5 * x * x);
  if (out.size() == 1) return;
  out[1] = std::numbers::sqrt2 * x * out[0];
  for (std::size_t n = 1; n + 1 < out.size(); ++n) {
    const double dn = static_cast<double>(n);
    out[n + 1] = (std::numbers::sqrt2 * x * out[n] - std::sqrt(dn) * out[n - 1]) / std::sqrt(dn + 1.0);
  }
}

std::vector<double> hermite_functions(double x, int n_max) {
  std::vector<double> out(static_cast<std::size_t>(n_max) + 1);
  hermite_functions(x, out);
  return out;
}

}  // namespace cps
