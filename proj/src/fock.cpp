#include "cps/fock.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <string>

#include "cps/error.hpp"
#include "cps/hermite.hpp"
#include "cps/quadrature_rule.hpp"

namespace cps {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Probability mass strictly above n_max for a distribution given by its log
// weights. The weights are assumed unimodal (up to interleaved zeros), so
// once past the mode the sum stops when terms fall far below the threshold.
double tail_weight(const std::function<double(int)>& log_weight, int n_max, int mode) {
  double tail = 0.0;
  int negligible_run = 0;
  for (int n = n_max + 1; n < mode + 100000; ++n) {
    const double lw = log_weight(n);
    const double term = lw == kNegInf ? 0.0 : std::exp(lw);
    tail += term;
    negligible_run = term < 1e-40 ? negligible_run + 1 : 0;
    // Two in a row so that interleaved zero weights (odd n) do not stop the sum.
    if (n > mode + 2 && negligible_run >= 2) break;
  }
  return tail;
}

int smallest_truncation(const std::function<double(int)>& log_weight, int mode) {
  for (int n_max = 0;; ++n_max) {
    if (tail_weight(log_weight, n_max, mode) < kTruncationTailLimit) return n_max;
  }
}

double coherent_log_weight(double mean, int n) {
  if (mean == 0.0) return n == 0 ? 0.0 : kNegInf;
  return -mean + n * std::log(mean) - std::lgamma(n + 1.0);
}

double squeeze_parameter(double mean_n) { return std::asinh(std::sqrt(mean_n)); }

double squeezed_log_weight(double r, int n) {
  if (n % 2 != 0) return kNegInf;
  if (r == 0.0) return n == 0 ? 0.0 : kNegInf;
  const int k = n / 2;
  const double t = std::tanh(r);
  return -std::log(std::cosh(r)) + 2.0 * k * std::log(t) + std::lgamma(2.0 * k + 1.0) -
         2.0 * k * std::numbers::ln2 - 2.0 * std::lgamma(k + 1.0);
}

void require_epsilon(double epsilon) {
  if (!(epsilon > 0.0)) {
    throw Error(ErrorKind::EpsilonNonPositive, "epsilon must be > 0, got " + std::to_string(epsilon));
  }
}

void require_grid(const PhaseGrid& grid) {
  if (grid.size() == 0) throw Error(ErrorKind::EmptyGrid, "phase grid has no points");
}

// Hermitian form v^dagger rho v, real part.
double hermitian_form(const Eigen::MatrixXcd& rho, const Eigen::VectorXcd& v) {
  return (v.adjoint() * rho * v)(0, 0).real();
}

}  // namespace

// --- FockState ---------------------------------------------------------------

FockState::FockState(std::vector<cplx> coeffs) : coeffs_(std::move(coeffs)) {
  if (coeffs_.empty()) throw Error(ErrorKind::InvalidState, "empty coefficient vector");
  double norm2 = 0.0;
  for (const auto& c : coeffs_) norm2 += std::norm(c);
  if (!(norm2 > 0.0) || !std::isfinite(norm2)) {
    throw Error(ErrorKind::InvalidState, "coefficient vector has zero or non-finite norm");
  }
  const double scale = 1.0 / std::sqrt(norm2);
  for (auto& c : coeffs_) c *= scale;
}

double FockState::mean_photon_number() const {
  double mean = 0.0;
  for (std::size_t n = 0; n < coeffs_.size(); ++n) mean += static_cast<double>(n) * std::norm(coeffs_[n]);
  return mean;
}

FockState FockState::phase_rotated(double theta) const {
  std::vector<cplx> rotated(coeffs_.size());
  for (std::size_t n = 0; n < coeffs_.size(); ++n) {
    rotated[n] = coeffs_[n] * std::polar(1.0, static_cast<double>(n) * theta);
  }
  FockState out(std::move(rotated));
  out.gaussian_ = gaussian_;
  return out;
}

// --- DensityMatrix -----------------------------------------------------------

DensityMatrix::DensityMatrix(Eigen::MatrixXcd rho, bool gaussian) : gaussian_(gaussian) {
  if (rho.rows() == 0 || rho.rows() != rho.cols()) {
    throw Error(ErrorKind::InvalidState, "density matrix must be square and non-empty");
  }
  const double asym = (rho - rho.adjoint()).cwiseAbs().maxCoeff();
  if (asym > 1e-10) {
    throw Error(ErrorKind::InvalidState, "density matrix is not Hermitian (deviation " + std::to_string(asym) + ")");
  }
  rho_ = 0.5 * (rho + rho.adjoint());
  for (Eigen::Index n = 0; n < rho_.rows(); ++n) rho_(n, n) = rho_(n, n).real();
  const double tr = rho_.trace().real();
  if (std::abs(tr - 1.0) > 1e-10) {
    throw Error(ErrorKind::InvalidState, "density matrix trace is " + std::to_string(tr));
  }
}

double DensityMatrix::mean_photon_number() const {
  double mean = 0.0;
  for (Eigen::Index n = 0; n < rho_.rows(); ++n) mean += static_cast<double>(n) * rho_(n, n).real();
  return mean;
}

double DensityMatrix::min_eigenvalue() const {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> solver(rho_, Eigen::EigenvaluesOnly);
  return solver.eigenvalues().minCoeff();
}

DensityMatrix DensityMatrix::phase_rotated(double theta) const {
  const Eigen::Index dim = rho_.rows();
  Eigen::VectorXcd phase(dim);
  for (Eigen::Index n = 0; n < dim; ++n) phase(n) = std::polar(1.0, static_cast<double>(n) * theta);
  Eigen::MatrixXcd rotated = phase.asDiagonal() * rho_ * phase.conjugate().asDiagonal();
  return DensityMatrix(std::move(rotated), gaussian_);
}

// --- PhaseGrid ---------------------------------------------------------------

PhaseGrid::PhaseGrid(std::vector<double> phis) : phis_(std::move(phis)) {
  if (phis_.empty()) throw Error(ErrorKind::EmptyGrid, "phase grid has no points");
  for (std::size_t i = 0; i < phis_.size(); ++i) {
    const double phi = phis_[i];
    if (!(phi >= -std::numbers::pi && phi < std::numbers::pi)) {
      throw Error(ErrorKind::InvalidState, "phase " + std::to_string(phi) + " outside [-pi, pi)");
    }
    if (i > 0 && !(phi > phis_[i - 1])) {
      throw Error(ErrorKind::InvalidState, "phase grid is not strictly increasing");
    }
  }
}

PhaseGrid PhaseGrid::uniform(int count) {
  if (count <= 0) throw Error(ErrorKind::EmptyGrid, "phase grid needs at least one point");
  std::vector<double> phis(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) phis[static_cast<std::size_t>(i)] = -std::numbers::pi + kTwoPi * i / count;
  return PhaseGrid(std::move(phis));
}

double PhaseGrid::integrate(std::span<const double> values) const {
  if (values.size() != phis_.size()) {
    throw Error(ErrorKind::GridMismatch, "value count does not match grid size");
  }
  const std::size_t n = phis_.size();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = (i + 1) % n;
    const double width = j == 0 ? phis_[0] + kTwoPi - phis_[i] : phis_[j] - phis_[i];
    total += 0.5 * width * (values[i] + values[j]);
  }
  return total;
}

std::vector<bool> PhaseDistribution::negative_flags() const {
  std::vector<bool> flags(values.size(), false);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double se = stderr_values ? (*stderr_values)[i] : 0.0;
    flags[i] = values[i] < -se;
  }
  return flags;
}

// --- state preparation ---------------------------------------------------------

int coherent_truncation(cplx alpha) {
  const double mean = std::norm(alpha);
  return smallest_truncation([mean](int n) { return coherent_log_weight(mean, n); },
                             static_cast<int>(std::ceil(mean)));
}

FockState coherent_state(cplx alpha, int n_max) {
  if (n_max < 0) throw Error(ErrorKind::InvalidState, "n_max must be >= 0");
  const double mean = std::norm(alpha);
  if (!std::isfinite(mean)) throw Error(ErrorKind::InvalidState, "coherent amplitude is not finite");
  const auto log_weight = [mean](int n) { return coherent_log_weight(mean, n); };
  const double tail = tail_weight(log_weight, n_max, static_cast<int>(std::ceil(mean)));
  if (tail >= kTruncationTailLimit) {
    throw Error(ErrorKind::TruncationInsufficient,
                "coherent state tail weight " + std::to_string(tail) + " above n_max=" + std::to_string(n_max));
  }
  const double phase = std::arg(alpha);
  std::vector<cplx> coeffs(static_cast<std::size_t>(n_max) + 1);
  for (int n = 0; n <= n_max; ++n) {
    const double lw = log_weight(n);
    coeffs[static_cast<std::size_t>(n)] = lw == kNegInf ? cplx{} : std::polar(std::exp(0.5 * lw), n * phase);
  }
  FockState state(std::move(coeffs));
  state.mark_gaussian();
  return state;
}

FockState coherent_state(cplx alpha) { return coherent_state(alpha, coherent_truncation(alpha)); }

int squeezed_vacuum_truncation(double mean_n) {
  if (!(mean_n >= 0.0)) throw Error(ErrorKind::InvalidState, "mean photon number must be >= 0");
  const double r = squeeze_parameter(mean_n);
  return smallest_truncation([r](int n) { return squeezed_log_weight(r, n); }, 0);
}

FockState squeezed_vacuum(double mean_n, int n_max) {
  if (!(mean_n >= 0.0) || !std::isfinite(mean_n)) {
    throw Error(ErrorKind::InvalidState, "mean photon number must be finite and >= 0");
  }
  if (n_max < 0) throw Error(ErrorKind::InvalidState, "n_max must be >= 0");
  const double r = squeeze_parameter(mean_n);
  const auto log_weight = [r](int n) { return squeezed_log_weight(r, n); };
  const double tail = tail_weight(log_weight, n_max, 0);
  if (tail >= kTruncationTailLimit) {
    throw Error(ErrorKind::TruncationInsufficient,
                "squeezed vacuum tail weight " + std::to_string(tail) + " above n_max=" + std::to_string(n_max));
  }
  std::vector<cplx> coeffs(static_cast<std::size_t>(n_max) + 1);
  for (int n = 0; n <= n_max; ++n) {
    const double lw = log_weight(n);
    coeffs[static_cast<std::size_t>(n)] = lw == kNegInf ? 0.0 : std::exp(0.5 * lw);
  }
  FockState state(std::move(coeffs));
  state.mark_gaussian();
  return state;
}

FockState squeezed_vacuum(double mean_n) { return squeezed_vacuum(mean_n, squeezed_vacuum_truncation(mean_n)); }

FockState fock_number_state(int n, int n_max) {
  if (n < 0 || n > n_max) throw Error(ErrorKind::IndexOutOfRange, "photon number outside [0, n_max]");
  std::vector<cplx> coeffs(static_cast<std::size_t>(n_max) + 1);
  coeffs[static_cast<std::size_t>(n)] = 1.0;
  return FockState(std::move(coeffs));
}

DensityMatrix pure_to_density(const FockState& state) {
  const auto c = state.coeffs();
  Eigen::Map<const Eigen::VectorXcd> v(c.data(), static_cast<Eigen::Index>(c.size()));
  return DensityMatrix(v * v.adjoint(), state.is_gaussian());
}

// --- distributions -----------------------------------------------------------

double cps_overlap(const Eigen::MatrixXcd& rho, double phi, double epsilon) {
  require_epsilon(epsilon);
  const Eigen::Index dim = rho.rows();
  Eigen::VectorXcd z_powers(dim);
  for (Eigen::Index n = 0; n < dim; ++n) {
    const double dn = static_cast<double>(n);
    z_powers(n) = std::polar(std::exp(-epsilon * dn), dn * phi);
  }
  return -std::expm1(-2.0 * epsilon) * hermitian_form(rho, z_powers);
}

double cps_overlap(const DensityMatrix& rho, double phi, double epsilon) {
  return cps_overlap(rho.matrix(), phi, epsilon);
}

double cps_normalization(const Eigen::MatrixXcd& rho, double epsilon) {
  require_epsilon(epsilon);
  double sum = 0.0;
  for (Eigen::Index n = 0; n < rho.rows(); ++n) sum += rho(n, n).real() * std::exp(-2.0 * epsilon * n);
  return kTwoPi * -std::expm1(-2.0 * epsilon) * sum;
}

PhaseDistribution cps_distribution(const Eigen::MatrixXcd& rho, double epsilon, const PhaseGrid& grid) {
  require_epsilon(epsilon);
  require_grid(grid);
  const double norm = cps_normalization(rho, epsilon);
  if (!(norm > 0.0)) throw Error(ErrorKind::DegenerateNormalization, "N(epsilon) is not positive");
  PhaseDistribution dist{grid, std::vector<double>(grid.size()), std::nullopt, epsilon};
  for (std::size_t i = 0; i < grid.size(); ++i) dist.values[i] = cps_overlap(rho, grid[i], epsilon) / norm;
  return dist;
}

PhaseDistribution cps_distribution(const DensityMatrix& rho, double epsilon, const PhaseGrid& grid) {
  return cps_distribution(rho.matrix(), epsilon, grid);
}

PhaseDistribution london_distribution(const DensityMatrix& rho, const PhaseGrid& grid) {
  require_grid(grid);
  const Eigen::Index dim = rho.matrix().rows();
  PhaseDistribution dist{grid, std::vector<double>(grid.size()), std::nullopt, 0.0};
  Eigen::VectorXcd phases(dim);
  // The integral over the circle of sum rho_nm e^{-i(n-m)phi} is 2 pi tr(rho).
  const double norm = kTwoPi * rho.trace();
  for (std::size_t i = 0; i < grid.size(); ++i) {
    for (Eigen::Index n = 0; n < dim; ++n) phases(n) = std::polar(1.0, static_cast<double>(n) * grid[i]);
    dist.values[i] = hermitian_form(rho.matrix(), phases) / norm;
  }
  return dist;
}

// --- quadrature distributions ------------------------------------------------

QuadratureDistribution::QuadratureDistribution(const DensityMatrix& rho, double varphi, double s,
                                               double field_scale)
    : n_max_(rho.n_max()), s_(s), field_scale_(field_scale) {
  if (s > 0.0) throw Error(ErrorKind::SParameterPositive, "s must be <= 0, got " + std::to_string(s));
  if (!(field_scale > 0.0)) throw Error(ErrorKind::InvalidState, "|F| must be positive");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> solver(rho.matrix());
  const auto& values = solver.eigenvalues();
  const double largest = values.cwiseAbs().maxCoeff();
  for (Eigen::Index k = 0; k < values.size(); ++k) {
    if (values(k) <= 1e-15 * largest) continue;
    std::vector<cplx> vec(static_cast<std::size_t>(n_max_) + 1);
    // p = sum_k w_k |sum_n v_kn e^{i n varphi} psi_n(x)|^2.
    for (int n = 0; n <= n_max_; ++n) {
      vec[static_cast<std::size_t>(n)] = solver.eigenvectors()(n, k) * std::polar(1.0, n * varphi);
    }
    weights_.push_back(values(k));
    vectors_.push_back(std::move(vec));
  }
}

double QuadratureDistribution::ideal_pdf_x(double x) const {
  thread_local std::vector<double> psi;
  psi.resize(static_cast<std::size_t>(n_max_) + 1);
  hermite_functions(x, psi);
  double p = 0.0;
  for (std::size_t k = 0; k < weights_.size(); ++k) {
    cplx amp{};
    const auto& vec = vectors_[k];
    for (std::size_t n = 0; n < psi.size(); ++n) amp += vec[n] * psi[n];
    p += weights_[k] * std::norm(amp);
  }
  return p;
}

double QuadratureDistribution::pdf_x(double x) const {
  if (s_ == 0.0) return ideal_pdf_x(x);
  // Gaussian smearing: variance |s||F|^2 in field units is |s|/2 in x units.
  static const QuadratureRule kRule = composite_gauss_legendre(-10.0, 10.0, 8);
  const double sigma = std::sqrt(-s_ / 2.0);
  double p = 0.0;
  for (std::size_t i = 0; i < kRule.size(); ++i) {
    const double z = kRule.nodes[i];
    p += kRule.weights[i] * std::exp(-0.5 * z * z) * ideal_pdf_x(x - sigma * z);
  }
  return p / std::sqrt(kTwoPi);
}

double QuadratureDistribution::pdf(double field) const {
  const double scale = std::numbers::sqrt2 * field_scale_;
  return pdf_x(field / scale) / scale;
}

double quadrature_pdf(const DensityMatrix& rho, double field, double varphi, double s, double field_scale) {
  return QuadratureDistribution(rho, varphi, s, field_scale).pdf(field);
}

QuadratureMoments quadrature_moments(const DensityMatrix& rho, double varphi) {
  const auto& m = rho.matrix();
  cplx a{};
  cplx a2{};
  for (Eigen::Index n = 1; n < m.rows(); ++n) a += std::sqrt(static_cast<double>(n)) * m(n, n - 1);
  for (Eigen::Index n = 2; n < m.rows(); ++n) {
    a2 += std::sqrt(static_cast<double>(n) * static_cast<double>(n - 1)) * m(n, n - 2);
  }
  const cplx rot = std::polar(1.0, varphi);
  const double mean = std::numbers::sqrt2 * (a * rot).real();
  const double second = (a2 * rot * rot).real() + rho.mean_photon_number() + 0.5;
  return {mean, second - mean * mean};
}

}  // namespace cps
