#include "cps/pattern_function.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <string>

#include <Eigen/Dense>
#include <boost/math/constants/constants.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/laguerre.hpp>
#include <boost/multiprecision/cpp_bin_float.hpp>

#include "cps/error.hpp"
#include "cps/quadrature_rule.hpp"

namespace cps {

namespace {

using std::numbers::pi;
using std::numbers::sqrt2;

// cos(a t - d pi / 2) without the phase round-off.
double shifted_cos(double at, int d) {
  switch (d % 4) {
    case 0: return std::cos(at);
    case 1: return std::sin(at);
    case 2: return -std::cos(at);
    default: return -std::sin(at);
  }
}

// Upper integration limit: past the outermost turning point the Laguerre
// functions decay like a Gaussian; stop once the envelope is negligible.
double integration_cutoff(int lo, int d, double s) {
  const double log_pref = 0.5 * (std::lgamma(lo + 1.0) - std::lgamma(lo + d + 1.0));
  const auto log_envelope = [&](double t) {
    const double u = t * t;
    const double lag = std::abs(boost::math::laguerre(static_cast<unsigned>(lo), static_cast<unsigned>(d), u));
    if (lag == 0.0) return -1e300;
    return log_pref + (d + 1) * std::log(t) - 0.5 * (1.0 + s) * u + std::log(lag);
  };
  double t = std::sqrt(2.0 * (2 * lo + d + 1)) + 1.0;
  while (t < 80.0 && log_envelope(t) > std::log(1e-22)) t += 0.25;
  return t;
}

// Number of decimal digits the upward irregular recurrence loses at x when
// run to order n_top.
double recurrence_digit_loss(double x, int n_top) {
  const double log_growth = std::log(std::max(2.0 * x * x, 1e-300));
  double worst = 0.0;
  for (int m = 1; m <= n_top; ++m) worst = std::max(worst, m * log_growth - std::lgamma(m + 1.0));
  return worst / std::numbers::ln10;
}

// phi_k(x) e^{-x^2/2} for k = 0..n_top: the irregular oscillator solutions,
// normalized so that d/dx [psi_0 phi_0] = f_00.
template <class Real>
std::vector<double> irregular_scaled(double x, int n_top) {
  const Real xr = x;
  const Real ax = abs(xr);
  const Real ax2 = ax * ax;
  // Dawson's integral from the positive series for int_0^x e^{t^2} dt.
  Real sum = 0;
  Real power = ax;  // ax^{2k+1} / k!
  const Real tiny = std::numeric_limits<Real>::epsilon();
  for (int k = 0;; ++k) {
    const Real term = power / (2 * k + 1);
    sum += term;
    if (k > 2 && Real(k) > ax2 && term <= tiny * sum) break;
    power *= ax2 / (k + 1);
  }
  Real dawson = exp(-ax2) * sum;
  if (x < 0) dawson = -dawson;

  const Real root2 = boost::math::constants::root_two<Real>();
  const Real c = 2 * pow(boost::math::constants::pi<Real>(), Real(-0.75));
  std::vector<double> out(static_cast<std::size_t>(n_top) + 1);
  Real prev = c * dawson;
  out[0] = static_cast<double>(prev);
  if (n_top == 0) return out;
  Real cur = c * (2 * xr * dawson - 1) / root2;
  out[1] = static_cast<double>(cur);
  for (int k = 1; k < n_top; ++k) {
    Real next = (root2 * xr * cur - sqrt(Real(k)) * prev) / sqrt(Real(k + 1));
    prev = cur;
    cur = next;
    out[static_cast<std::size_t>(k) + 1] = static_cast<double>(cur);
  }
  return out;
}

template <unsigned Digits>
using mp_float = boost::multiprecision::number<boost::multiprecision::cpp_bin_float<Digits>>;

// Returns an empty vector when no precision tier is sufficient.
std::vector<double> irregular_scaled_auto(double x, int n_top) {
  const double digits = recurrence_digit_loss(x, n_top) + 22.0;
  if (digits <= 50) return irregular_scaled<mp_float<50>>(x, n_top);
  if (digits <= 100) return irregular_scaled<mp_float<100>>(x, n_top);
  if (digits <= 200) return irregular_scaled<mp_float<200>>(x, n_top);
  if (digits <= 400) return irregular_scaled<mp_float<400>>(x, n_top);
  return {};
}

// psi_k(x) e^{x^2/2}: forward recurrence is stable for the regular solution.
std::vector<double> regular_scaled(double x, int n_top) {
  std::vector<double> out(static_cast<std::size_t>(n_top) + 1);
  out[0] = std::pow(pi, -0.25);
  if (n_top == 0) return out;
  out[1] = sqrt2 * x * out[0];
  for (int k = 1; k < n_top; ++k) {
    out[static_cast<std::size_t>(k) + 1] =
        (sqrt2 * x * out[static_cast<std::size_t>(k)] - std::sqrt(double(k)) * out[static_cast<std::size_t>(k) - 1]) /
        std::sqrt(k + 1.0);
  }
  return out;
}

double derivative_product(const std::vector<double>& psi, const std::vector<double>& phi, int lo, int hi,
                          double x) {
  const auto at = [](const std::vector<double>& v, int k) { return v[static_cast<std::size_t>(k)]; };
  if (hi == 0) {
    // The irregular ground state is not annihilated by a, so use
    // phi_0' = x phi_0 - sqrt(2) phi_1 instead of the ladder form.
    return -at(psi, 1) * at(phi, 0) / sqrt2 + at(psi, 0) * (x * at(phi, 0) - sqrt2 * at(phi, 1));
  }
  const double dpsi_phi = (lo > 0 ? std::sqrt(double(lo)) * at(psi, lo - 1) : 0.0) - std::sqrt(lo + 1.0) * at(psi, lo + 1);
  const double dphi_psi = std::sqrt(double(hi)) * at(phi, hi - 1) - std::sqrt(hi + 1.0) * at(phi, hi + 1);
  return (dpsi_phi * at(phi, hi) + at(psi, lo) * dphi_psi) / sqrt2;
}

}  // namespace

void require_admissible_s(double s) {
  if (s > 0.0) throw Error(ErrorKind::SParameterPositive, "s must be <= 0, got " + std::to_string(s));
  if (!(s > -1.0)) {
    throw Error(ErrorKind::EfficiencyTooLow,
                "s = " + std::to_string(s) + " means eta <= 1/2; the sampling function is unbounded");
  }
}

double pattern_function(int n, int m, double x, double s, double target) {
  require_admissible_s(s);
  if (n < 0 || m < 0) throw Error(ErrorKind::IndexOutOfRange, "photon numbers must be >= 0");
  const int lo = std::min(n, m);
  const int d = std::abs(n - m);
  const double a = sqrt2 * x;
  const double log_pref = 0.5 * (std::lgamma(lo + 1.0) - std::lgamma(lo + d + 1.0));
  const auto integrand = [&](double t) {
    if (t <= 0.0) return 0.0;
    const double u = t * t;
    const double lag = boost::math::laguerre(static_cast<unsigned>(lo), static_cast<unsigned>(d), u);
    return std::exp(log_pref + (d + 1) * std::log(t) - 0.5 * (1.0 + s) * u) * lag * shifted_cos(a * t, d);
  };
  const double upper = integration_cutoff(lo, d, s);
  double error = 0.0;
  double l1 = 0.0;
  const double value = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(integrand, 0.0, upper, 25,
                                                                                      1e-14, &error, &l1);
  const double scale = 2.0 / pi;
  if (!std::isfinite(value) || scale * error > target) {
    throw Error(ErrorKind::QuadratureNotConverged,
                "f_" + std::to_string(n) + std::to_string(m) + "(" + std::to_string(x) + ") error estimate " +
                    std::to_string(scale * error));
  }
  return scale * value;
}

double pattern_function_fast(int n, int m, double x) {
  if (n < 0 || m < 0) throw Error(ErrorKind::IndexOutOfRange, "photon numbers must be >= 0");
  const int lo = std::min(n, m);
  const int hi = std::max(n, m);
  const auto phi = irregular_scaled_auto(x, hi + 1);
  if (phi.empty()) return pattern_function(n, m, x, 0.0);
  const auto psi = regular_scaled(x, hi + 1);
  return derivative_product(psi, phi, lo, hi, x);
}

std::vector<double> pattern_row_fast(double x, int n_max) {
  std::vector<double> row(pair_count(n_max));
  const auto phi = irregular_scaled_auto(x, n_max + 1);
  if (phi.empty()) {
    for (int hi = 0; hi <= n_max; ++hi)
      for (int lo = 0; lo <= hi; ++lo) row[pair_index(lo, hi)] = pattern_function(lo, hi, x, 0.0);
    return row;
  }
  const auto psi = regular_scaled(x, n_max + 1);
  for (int hi = 0; hi <= n_max; ++hi)
    for (int lo = 0; lo <= hi; ++lo) row[pair_index(lo, hi)] = derivative_product(psi, phi, lo, hi, x);
  return row;
}

// --- bulk quadrature -----------------------------------------------------------

namespace {

// t h_k^d(t) with h_k^d = sqrt(k!/(k+d)!) t^d L_k^d(t^2) e^{-(1+s) t^2/2}, for
// all pairs up to n_max, pair-major. Upward recurrence in k at fixed d.
void laguerre_functions(double t, int n_max, double s, std::span<double> out) {
  const double u = t * t;
  const double log_t = std::log(t);
  for (int d = 0; d <= n_max; ++d) {
    double prev = 0.0;
    double cur = std::exp(d * log_t - 0.5 * (1.0 + s) * u - 0.5 * std::lgamma(d + 1.0));
    out[pair_index(0, d)] = t * cur;
    for (int k = 0; k + d < n_max; ++k) {
      const double next =
          ((2.0 * k + 1.0 + d - u) * cur - std::sqrt(double(k) * double(k + d)) * prev) / std::sqrt((k + 1.0) * (k + 1.0 + d));
      prev = cur;
      cur = next;
      out[pair_index(k + 1, k + 1 + d)] = t * cur;
    }
  }
}

double table_cutoff(int n_max, double s) {
  std::vector<double> buf(pair_count(n_max));
  double peak = 0.0;
  double t = 0.25;
  for (; t < 80.0; t += 0.25) {
    laguerre_functions(t, n_max, s, buf);
    double level = 0.0;
    for (double v : buf) level = std::max(level, std::abs(v));
    peak = std::max(peak, level);
    const double turning = std::sqrt(2.0 * (2 * n_max + 1)) + 1.0;
    if (t > turning && level < 1e-20 * std::max(peak, 1.0)) break;
  }
  return t;
}

// `mass` receives sum_q |w_q integrand_p(t_q)| per pair, the scale of the
// rounding error in the sums.
Eigen::MatrixXd quadrature_pass(const std::vector<double>& x_grid, int n_max, double s, double upper, int panels,
                                Eigen::VectorXd* mass = nullptr) {
  const QuadratureRule rule = composite_gauss_legendre(0.0, upper, panels);
  const auto q_count = static_cast<Eigen::Index>(rule.size());
  const auto x_count = static_cast<Eigen::Index>(x_grid.size());
  const auto pairs = static_cast<Eigen::Index>(pair_count(n_max));

  Eigen::MatrixXd weighted(pairs, q_count);
  std::vector<double> buf(static_cast<std::size_t>(pairs));
  for (Eigen::Index q = 0; q < q_count; ++q) {
    laguerre_functions(rule.nodes[static_cast<std::size_t>(q)], n_max, s, buf);
    const double w = 2.0 / pi * rule.weights[static_cast<std::size_t>(q)];
    for (Eigen::Index p = 0; p < pairs; ++p) weighted(p, q) = w * buf[static_cast<std::size_t>(p)];
  }
  if (mass) *mass = weighted.cwiseAbs().rowwise().sum();
  Eigen::MatrixXd cos_table(q_count, x_count);
  Eigen::MatrixXd sin_table(q_count, x_count);
  for (Eigen::Index q = 0; q < q_count; ++q) {
    for (Eigen::Index j = 0; j < x_count; ++j) {
      const double at = sqrt2 * x_grid[static_cast<std::size_t>(j)] * rule.nodes[static_cast<std::size_t>(q)];
      cos_table(q, j) = std::cos(at);
      sin_table(q, j) = std::sin(at);
    }
  }
  const Eigen::MatrixXd with_cos = weighted * cos_table;
  const Eigen::MatrixXd with_sin = weighted * sin_table;
  Eigen::MatrixXd result(pairs, x_count);
  for (int hi = 0; hi <= n_max; ++hi) {
    for (int lo = 0; lo <= hi; ++lo) {
      const int d = hi - lo;
      const auto p = static_cast<Eigen::Index>(pair_index(lo, hi));
      const double sign = (d % 4 == 2 || d % 4 == 3) ? -1.0 : 1.0;
      result.row(p) = sign * (d % 2 == 0 ? with_cos.row(p) : with_sin.row(p));
    }
  }
  return result;
}

}  // namespace

std::vector<double> pattern_table_quadrature(const std::vector<double>& x_grid, int n_max, double s, double target) {
  require_admissible_s(s);
  if (n_max < 0) throw Error(ErrorKind::IndexOutOfRange, "n_max must be >= 0");
  const double upper = table_cutoff(n_max, s);
  int panels = std::max(8, static_cast<int>(std::ceil(upper / 0.5)));
  Eigen::MatrixXd coarse = quadrature_pass(x_grid, n_max, s, upper, panels);
  for (int attempt = 0; attempt < 5; ++attempt) {
    panels *= 2;
    Eigen::VectorXd mass;
    Eigen::MatrixXd fine = quadrature_pass(x_grid, n_max, s, upper, panels, &mass);
    // Lossy tables reach values far above 1 through cancelling integrands;
    // agreement down to the rounding floor of the sums counts as converged.
    const Eigen::ArrayXd floor = 64.0 * std::numeric_limits<double>::epsilon() * mass.array();
    const Eigen::ArrayXXd allowed =
        (target + 1e-10 * fine.array().abs()).colwise() + floor;
    if (((fine - coarse).array().abs() <= allowed).all()) {
      std::vector<double> out(static_cast<std::size_t>(fine.size()));
      Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
          out.data(), fine.rows(), fine.cols()) = fine;
      return out;
    }
    coarse = std::move(fine);
  }
  throw Error(ErrorKind::QuadratureNotConverged,
              "pattern-function table for n_max=" + std::to_string(n_max) + ", s=" + std::to_string(s) +
                  " did not converge with " + std::to_string(panels) + " panels");
}

}  // namespace cps
