#pragma once

#include <vector>

namespace cps {

/// Convergence target of the pattern-function quadratures.
inline constexpr double kPatternQuadratureTarget = 1e-8;

/// Density-matrix sampling function f_nm(x; s), the phase-free factor of
/// <n| K(F, varphi; -s) |m>. Evaluated by adaptive Gauss-Kronrod quadrature of
///
///   f_nm(x; s) = (2/pi) sqrt(n_<!/n_>!) int_0^inf dt t^{d+1} L_{n_<}^{d}(t^2)
///                e^{-(1+s) t^2 / 2} cos(sqrt(2) x t - d pi / 2),   d = |n - m|,
///
/// which is the symmetric |y| integral folded onto the positive axis with
/// y |F| = t. Valid for s <= 0 with efficiency 1/(1-s) > 1/2.
///
/// Throws SParameterPositive, EfficiencyTooLow or QuadratureNotConverged.
double pattern_function(int n, int m, double x, double s, double target = kPatternQuadratureTarget);

/// s = 0 only: f_nm(x) = d/dx [psi_{n<}(x) phi_{n>}(x)] with phi the irregular
/// oscillator solution. The irregular solutions come from an upward
/// recurrence that loses about log10 max_m (2x^2)^m / m! digits, so it runs
/// in multiprecision sized to |x| and the highest order.
double pattern_function_fast(int n, int m, double x);

/// Index of the unordered pair (n, m) in pair-major storage. Pairs are
/// ordered by max(n, m) so a table of order N is a prefix of one of order N+1.
constexpr std::size_t pair_index(int n, int m) {
  const auto lo = static_cast<std::size_t>(n < m ? n : m);
  const auto hi = static_cast<std::size_t>(n < m ? m : n);
  return hi * (hi + 1) / 2 + lo;
}

constexpr std::size_t pair_count(int n_max) {
  const auto n = static_cast<std::size_t>(n_max) + 1;
  return n * (n + 1) / 2;
}

/// All f_nm(x; 0) for 0 <= n <= m <= n_max at a single x, in pair_index order.
/// Fast path; falls back to quadrature when |x| needs more than the largest
/// precision tier.
std::vector<double> pattern_row_fast(double x, int n_max);

/// f_nm(x_j; s) for all pairs up to n_max on all x_j, pair-major
/// ([pair][x]), by composite Gauss-Legendre quadrature of the Laguerre form.
/// The panel count doubles until two successive rules agree to the target
/// (absolute, or relative 1e-10 for values of large magnitude).
/// Throws QuadratureNotConverged if that does not happen within the limit.
std::vector<double> pattern_table_quadrature(const std::vector<double>& x_grid, int n_max, double s,
                                             double target = kPatternQuadratureTarget);

/// Throws EfficiencyTooLow unless s corresponds to eta = 1/(1-s) > 1/2,
/// SParameterPositive for s > 0.
void require_admissible_s(double s);

}  // namespace cps
