#pragma once

#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cps/fock.hpp"
#include "cps/homodyne.hpp"
#include "cps/kernel.hpp"

namespace cps {

struct EstimationConfig {
  double epsilon = 0.1;
  PhaseGrid phi_grid = PhaseGrid::uniform(128);
  double tol = 1e-6;
  bool normalize = true;
  XGridSpec x_grid;
  Interpolation interpolation = Interpolation::Cubic;
  std::filesystem::path kernel_cache;  // empty: no caching

  void validate() const;
};

/// Kernel table plus the truncation order chosen for (eps, tol).
struct KernelPlan {
  std::shared_ptr<const KernelTable> table;
  int order = 0;
  double tail_bound = 0.0;  // kernel_tail_bound at `order`
  int required_order = 0;   // what the tolerance asked for
  bool converged = false;
};

/// Grows the table until kernel_truncation(eps, tol, sup|f|) fits in it.
/// When the supported cap is reached first, throws TruncationInsufficient,
/// or with allow_unconverged returns the capped plan marked unconverged.
KernelPlan plan_kernel(double epsilon, double tol, double s, const std::vector<double>& x_grid,
                       const std::filesystem::path& cache_dir = {},
                       Interpolation interpolation = Interpolation::Cubic, bool allow_unconverged = false);

/// Direct CPS sampling: p(phi) = (pi / n_phases) sum_k mean_j K_eps(phi,
/// F_kj, varphi_k; s), normalized on the grid when config.normalize.
/// Throws EfficiencyTooLow, TruncationInsufficient, DegenerateNormalization.
PhaseDistribution sample_cps(const HomodyneDataset& dataset, const EstimationConfig& config);
/// Same with a prepared kernel; kernel.table().s() must equal dataset.s().
PhaseDistribution sample_cps(const HomodyneDataset& dataset, const EstimationConfig& config,
                             const SamplingKernel& kernel);

struct DensityEstimate {
  Eigen::MatrixXcd rho_hat;
  Eigen::MatrixXd stderr_values;  // sd of the complex estimate, sqrt(var re + var im)
  int n_max = 0;
};

struct DensityOptions {
  XGridSpec x_grid;
  Interpolation interpolation = Interpolation::Cubic;
  std::filesystem::path kernel_cache;
};

/// rho_nm = (pi / n_phases) sum_k e^{-i(n-m) varphi_k} mean_j f_nm(x_kj; s),
/// Hermitian by construction. Throws EfficiencyTooLow, TruncationInsufficient.
DensityEstimate estimate_density(const HomodyneDataset& dataset, int n_max, const DensityOptions& options = {});

/// cps_distribution of rho_hat. The standard error is a first-order
/// propagation treating matrix elements as independent, so it is only
/// indicative. Throws EpsilonNonPositive.
PhaseDistribution cps_from_density(const DensityEstimate& est, double epsilon, const PhaseGrid& grid);

struct CompareReport {
  double sup_distance = 0.0;
  double integrated_abs_distance = 0.0;  // trapezoid of |a - b|
  std::vector<double> z_scores;          // empty when neither side has errors
  double fraction_z_above_3 = 0.0;
};

/// Throws GridMismatch unless both grids are identical.
CompareReport compare(const PhaseDistribution& a, const PhaseDistribution& b);
void write_compare_report(std::ostream& out, const CompareReport& report);

/// Peak positions: local maxima on the periodic grid, strongest first.
std::vector<std::size_t> local_maxima(const PhaseDistribution& dist);

// --- CSV ------------------------------------------------------------------------

struct CsvMeta {
  std::optional<double> epsilon;
  std::optional<double> eta;
  std::optional<std::uint64_t> seed;
  std::string dataset_hash;
  std::string note;
};

/// phi,p,stderr,flag_negative with '#' header comments.
void write_distribution_csv(std::ostream& out, const PhaseDistribution& dist, const CsvMeta& meta = {});
void write_distribution_csv(const std::filesystem::path& path, const PhaseDistribution& dist,
                            const CsvMeta& meta = {});
PhaseDistribution read_distribution_csv(const std::filesystem::path& path);

/// n,m,re,im,stderr, all n, m.
void write_density_csv(std::ostream& out, const DensityEstimate& est, const CsvMeta& meta = {});

}  // namespace cps
