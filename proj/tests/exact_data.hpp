#pragma once

// Exact-data limit of the direct sampling estimator: event averages replaced
// by x integrals of the analytic quadrature density. Shared by the unit and
// acceptance tests.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include <Eigen/Dense>

#include "cps/fock.hpp"
#include "cps/kernel.hpp"
#include "cps/pattern_function.hpp"
#include "cps/quadrature_rule.hpp"

namespace cps_test {

/// K_eps(sigma, x) = sum_d h(x, d) cos(d sigma) on Gauss-Legendre x nodes,
/// summed directly from pattern-function rows (no table, no interpolation).
struct ExactHarmonics {
  std::vector<double> x;
  std::vector<double> w;
  Eigen::MatrixXd h;  // [x][d]
  int order = 0;
  double sup_pattern = 0.0;
};

inline ExactHarmonics exact_harmonics(double epsilon, int order, double s, double a = -12.0, double b = 12.0,
                                      int panels = 48) {
  const auto rule = cps::composite_gauss_legendre(a, b, panels);
  ExactHarmonics out{rule.nodes, rule.weights, Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rule.size()), order + 1),
                     order, 0.0};
  const double q = std::exp(-epsilon);
  std::vector<double> qpow(2 * order + 1);
  for (int k = 0; k <= 2 * order; ++k) qpow[k] = std::pow(q, k);
  for (std::size_t i = 0; i < rule.size(); ++i) {
    const auto row = cps::pattern_row(rule.nodes[i], order, s);
    for (int hi = 0; hi <= order; ++hi)
      for (int lo = 0; lo <= hi; ++lo) {
        const double f = row[cps::pair_index(lo, hi)];
        out.sup_pattern = std::max(out.sup_pattern, std::abs(f));
        out.h(static_cast<Eigen::Index>(i), hi - lo) += (lo == hi ? 1.0 : 2.0) * f * qpow[lo + hi];
      }
  }
  out.h *= 1.0 - q * q;
  return out;
}

/// sum_k weight_k int dx p(x, varphi_k; s) K_eps(phi, x, varphi_k) / N(eps),
/// with the analytic normalization of rho.
inline std::vector<double> exact_data_estimate(const cps::DensityMatrix& rho, const ExactHarmonics& H,
                                               const std::vector<double>& phases,
                                               const std::vector<double>& phase_weights, const cps::PhaseGrid& grid,
                                               double epsilon, double s = 0.0) {
  const auto nx = static_cast<Eigen::Index>(H.x.size());
  std::vector<double> out(grid.size(), 0.0);
  for (std::size_t k = 0; k < phases.size(); ++k) {
    const cps::QuadratureDistribution p(rho, phases[k], s);
    Eigen::RowVectorXd px(nx);
    for (Eigen::Index i = 0; i < nx; ++i) px(i) = H.w[static_cast<std::size_t>(i)] * p.pdf_x(H.x[static_cast<std::size_t>(i)]);
    const Eigen::RowVectorXd a = px * H.h;  // A_d(varphi_k)
    for (std::size_t g = 0; g < grid.size(); ++g) {
      double v = 0.0;
      for (int d = 0; d <= H.order; ++d) v += a(d) * std::cos(d * (grid[g] + phases[k]));
      out[g] += phase_weights[k] * v;
    }
  }
  const double norm = cps::cps_normalization(rho.matrix(), epsilon);
  for (double& v : out) v /= norm;
  return out;
}

inline void midpoint_phases(int n, std::vector<double>& phases, std::vector<double>& weights) {
  phases.resize(n);
  weights.assign(n, std::numbers::pi / n);
  for (int k = 0; k < n; ++k) phases[k] = (k + 0.5) * std::numbers::pi / n;
}

}  // namespace cps_test
