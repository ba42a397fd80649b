#pragma once

#include <complex>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace cps {

using cplx = std::complex<double>;

/// Tail probability above which a truncated state is rejected.
inline constexpr double kTruncationTailLimit = 1e-10;

/// |F| convention for the field-strength operator: with 1/sqrt(2) the field
/// strength equals the dimensionless quadrature x.
inline constexpr double kDefaultFieldScale = 0.70710678118654752440;

/// Pure state in the photon-number basis, c_0..c_{n_max}, unit norm.
class FockState {
public:
  /// Renormalizes `coeffs`; throws InvalidState for an empty or zero vector.
  explicit FockState(std::vector<cplx> coeffs);

  int n_max() const { return static_cast<int>(coeffs_.size()) - 1; }
  std::span<const cplx> coeffs() const { return coeffs_; }
  cplx operator[](int n) const { return coeffs_[static_cast<std::size_t>(n)]; }

  double mean_photon_number() const;

  /// c_n -> c_n e^{i n theta}.
  FockState phase_rotated(double theta) const;

  /// Set by the coherent / squeezed-vacuum constructors; the simulator uses
  /// exact Gaussian draws for such states.
  bool is_gaussian() const { return gaussian_; }
  FockState& mark_gaussian(bool g = true) {
    gaussian_ = g;
    return *this;
  }

private:
  std::vector<cplx> coeffs_;
  bool gaussian_ = false;
};

/// Hermitian, unit-trace density matrix in a truncated Fock basis.
class DensityMatrix {
public:
  /// Stores (rho + rho^dagger)/2 so that rho_nm == conj(rho_mn) exactly.
  /// Throws InvalidState if the input is not square, not Hermitian to 1e-10
  /// or not of unit trace to 1e-10.
  explicit DensityMatrix(Eigen::MatrixXcd rho, bool gaussian = false);

  int n_max() const { return static_cast<int>(rho_.rows()) - 1; }
  const Eigen::MatrixXcd& matrix() const { return rho_; }
  cplx operator()(int n, int m) const { return rho_(n, m); }

  double trace() const { return rho_.trace().real(); }
  double mean_photon_number() const;
  /// Smallest eigenvalue (Hermitian eigensolver).
  double min_eigenvalue() const;

  /// rho_nm -> rho_nm e^{i (n-m) theta}.
  DensityMatrix phase_rotated(double theta) const;

  bool is_gaussian() const { return gaussian_; }

private:
  Eigen::MatrixXcd rho_;
  bool gaussian_ = false;
};

/// Sorted phases in [-pi, pi).
class PhaseGrid {
public:
  /// Throws EmptyGrid for no points and InvalidState if the values are not
  /// strictly increasing inside [-pi, pi).
  explicit PhaseGrid(std::vector<double> phis);

  /// phi_i = -pi + 2 pi i / count.
  static PhaseGrid uniform(int count);

  std::size_t size() const { return phis_.size(); }
  std::span<const double> phis() const { return phis_; }
  double operator[](std::size_t i) const { return phis_[i]; }

  /// Trapezoidal rule on the circle, closing the last interval across +pi.
  double integrate(std::span<const double> values) const;

  bool operator==(const PhaseGrid&) const = default;

private:
  std::vector<double> phis_;
};

/// Tabulated phase distribution. epsilon == 0 marks the London limit.
struct PhaseDistribution {
  PhaseGrid grid;
  std::vector<double> values;
  std::optional<std::vector<double>> stderr_values;
  double epsilon = 0.0;

  double integral() const { return grid.integrate(values); }
  /// True where the value is below zero by more than one standard error.
  std::vector<bool> negative_flags() const;
};

// --- state preparation -----------------------------------------------------

/// Smallest truncation with tail weight below kTruncationTailLimit.
int coherent_truncation(cplx alpha);
int squeezed_vacuum_truncation(double mean_n);

/// Poisson amplitudes alpha^n / sqrt(n!) e^{-|alpha|^2/2}, renormalized.
/// Throws TruncationInsufficient when the discarded tail exceeds the limit.
FockState coherent_state(cplx alpha, int n_max);
FockState coherent_state(cplx alpha);

/// Real squeezing r = asinh(sqrt(mean_n)); even amplitudes only.
FockState squeezed_vacuum(double mean_n, int n_max);
FockState squeezed_vacuum(double mean_n);

FockState fock_number_state(int n, int n_max);

DensityMatrix pure_to_density(const FockState& state);

// --- distributions ---------------------------------------------------------

/// <phi,eps| rho |phi,eps> for the coherent phase state with
/// z = e^{-eps} e^{i phi}. Works on any square matrix so that estimated
/// (non-positive) matrices can be plugged in; the imaginary residue is dropped.
double cps_overlap(const Eigen::MatrixXcd& rho, double phi, double epsilon);
double cps_overlap(const DensityMatrix& rho, double phi, double epsilon);

/// Closed-form N(eps) = 2 pi (1 - e^{-2 eps}) sum_n rho_nn e^{-2 eps n}.
double cps_normalization(const Eigen::MatrixXcd& rho, double epsilon);

PhaseDistribution cps_distribution(const DensityMatrix& rho, double epsilon, const PhaseGrid& grid);
PhaseDistribution cps_distribution(const Eigen::MatrixXcd& rho, double epsilon, const PhaseGrid& grid);

/// eps -> 0 limit of the truncated state, normalized numerically on the
/// grid. Approximates the untruncated London distribution to within the
/// state's tail weight.
PhaseDistribution london_distribution(const DensityMatrix& rho, const PhaseGrid& grid);

/// Field-strength distribution p(F, varphi; s) for F-hat(varphi) =
/// |F| (a e^{i varphi} + a^dagger e^{-i varphi}). Precomputes the eigen
/// decomposition of rho once per instance.
class QuadratureDistribution {
public:
  QuadratureDistribution(const DensityMatrix& rho, double varphi, double s = 0.0,
                         double field_scale = kDefaultFieldScale);

  /// Density in x = F / (sqrt(2) |F|) units.
  double pdf_x(double x) const;
  /// Density in field-strength units.
  double pdf(double field) const;
  /// Ideal (s = 0) density in x units.
  double ideal_pdf_x(double x) const;

  double s() const { return s_; }
  double field_scale() const { return field_scale_; }

private:
  int n_max_;
  double s_;
  double field_scale_;
  // rho(varphi) = sum_k weight_k v_k v_k^dagger with the LO phase folded in.
  std::vector<double> weights_;
  std::vector<std::vector<cplx>> vectors_;
};

/// Throws SParameterPositive for s > 0.
double quadrature_pdf(const DensityMatrix& rho, double field, double varphi, double s,
                      double field_scale = kDefaultFieldScale);

/// Exact first and second moments of the ideal quadrature at varphi, in x units.
struct QuadratureMoments {
  double mean;
  double variance;
};
QuadratureMoments quadrature_moments(const DensityMatrix& rho, double varphi);

}  // namespace cps
