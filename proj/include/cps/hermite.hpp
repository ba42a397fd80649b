#pragma once

#include <span>
#include <vector>

namespace cps {

/// Normalized harmonic-oscillator eigenfunctions psi_0..psi_{n_max} at x,
/// with |psi_0|^2 a Gaussian of variance 1/2.
std::vector<double> hermite_functions(double x, int n_max);

/// In-place variant; out.size() - 1 is the highest order.
void hermite_functions(double x, std::span<double> out);

}  // namespace cps
