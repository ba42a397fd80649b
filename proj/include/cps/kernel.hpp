#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "cps/fock.hpp"
#include "cps/pattern_function.hpp"

namespace cps {

/// Largest supported table order. Lossy detection (s < 0) is capped lower
/// because its sampling functions grow geometrically with the photon number.
inline constexpr int kMaxKernelOrderIdeal = 256;
inline constexpr int kMaxKernelOrderLossy = 64;

int max_kernel_order(double s);

enum class Interpolation { Linear, Cubic };

/// Uniform x grid, both ends included.
struct XGridSpec {
  double x_min = -10.0;
  double x_max = 10.0;
  double spacing = 0.05;

  std::vector<double> points() const;
  bool operator==(const XGridSpec&) const = default;
};

/// f_nm(x; s) for all unordered pairs 0 <= n <= m <= n_max on a sorted x
/// grid, stored once per pair ([pair][x], see pair_index). Immutable.
class KernelTable {
public:
  KernelTable(int n_max, double s, std::vector<double> x_grid, std::vector<double> values,
              Interpolation interpolation = Interpolation::Cubic);

  int n_max() const { return n_max_; }
  double s() const { return s_; }
  std::span<const double> x_grid() const { return x_grid_; }
  std::span<const double> values() const { return values_; }
  Interpolation interpolation() const { return interpolation_; }
  KernelTable with_interpolation(Interpolation interpolation) const;

  /// f_nm on the grid; f_nm and f_mn share storage.
  std::span<const double> pair_values(int n, int m) const;
  double at(int n, int m, std::size_t ix) const { return pair_values(n, m)[ix]; }

  bool covers(double x) const { return x >= x_grid_.front() && x <= x_grid_.back(); }
  /// Interpolated value inside the grid, direct evaluation outside it.
  double value(int n, int m, double x) const;

  /// Largest |f_nm| over the whole table.
  double sup_abs() const { return sup_abs_; }
  std::uint64_t grid_hash() const;

  /// Interpolation stencil: up to four (index, weight) pairs for x inside the grid.
  struct Stencil {
    std::size_t index[4];
    double weight[4];
    int size;
  };
  Stencil stencil(double x) const;

private:
  int n_max_;
  double s_;
  std::vector<double> x_grid_;
  std::vector<double> values_;
  Interpolation interpolation_;
  double sup_abs_ = 0.0;
  bool uniform_ = false;
  double spacing_ = 0.0;
};

/// Fast path for s = 0 (parallel over x), Gauss-Legendre table otherwise.
/// Throws EfficiencyTooLow, SParameterPositive, TruncationInsufficient
/// (n_max above the supported cap), or QuadratureNotConverged.
KernelTable build_kernel_table(int n_max, const std::vector<double>& x_grid, double s,
                               Interpolation interpolation = Interpolation::Cubic);

/// All f_nm(x; s), n <= m <= n_max, at one x in pair_index order, evaluated
/// directly (fast path for s = 0).
std::vector<double> pattern_row(double x, int n_max, double s);

/// Truncation-error bound of the kernel double sum cut at n, m <= order:
/// bound * (1 - q^2) * sum over pairs with max(n, m) > order of q^{n+m},
/// q = e^{-eps}, in closed form.
double kernel_tail_bound(double epsilon, int order, double bound);

/// Smallest order whose tail bound is below tol. `bound` is a sup of
/// |f_nm|, normally KernelTable::sup_abs().
int kernel_truncation(double epsilon, double tol, double bound);

/// Arguments of K_eps(phi, F, varphi; s).
struct KernelQuery {
  double phi = 0.0;
  double field = 0.0;
  double varphi = 0.0;
  double epsilon = 0.1;
  double s = 0.0;

  void validate() const;
};

/// K_eps at one point: (1 - e^{-2 eps}) sum_{n,m <= N} f_nm(x; s)
/// cos[(n - m)(phi + varphi)] e^{-eps (n + m)}, N = kernel_truncation(eps,
/// tol, table.sup_abs()). Throws TruncationInsufficient if the table is too
/// small and InvalidState if table.s() != query.s.
double sampling_kernel(const KernelQuery& query, const KernelTable& table, double tol = 1e-6,
                       double field_scale = kDefaultFieldScale);

/// K_eps for fixed eps and order as a cosine series in the sum phase,
/// K = sum_d h_d(x) cos(d sigma), with the harmonics h_d tabulated on the
/// table's x grid.
class SamplingKernel {
public:
  SamplingKernel(const KernelTable& table, double epsilon, int order);

  int order() const { return order_; }
  double epsilon() const { return epsilon_; }
  const KernelTable& table() const { return *table_; }

  /// h_0..h_order at x (interpolated inside the grid, direct outside).
  void harmonics(double x, std::span<double> out) const;
  /// Tabulated harmonics, row-major [x][d] with order() + 1 columns.
  std::span<const double> grid_harmonics() const { return grid_harmonics_; }
  double operator()(double sum_phase, double x) const;

private:
  const KernelTable* table_;
  double epsilon_;
  int order_;
  std::size_t width_;
  std::vector<double> grid_harmonics_;  // [x][d]
};

// --- binary cache ---------------------------------------------------------------

/// Little-endian file: "CPSKTBL1", u32 version, i32 n_max, f64 s, i32
/// interpolation, u64 grid hash, u64 x count, f64 x[count], f64 values
/// (pair-major).
void write_kernel_table(const std::filesystem::path& path, const KernelTable& table);
KernelTable read_kernel_table(const std::filesystem::path& path);

/// File name keyed by (n_max, s, grid hash).
std::filesystem::path kernel_cache_file(const std::filesystem::path& cache_dir, int n_max, double s,
                                        std::uint64_t grid_hash);

/// Reads the cached table if present, otherwise builds and stores it. An
/// empty cache_dir disables caching.
KernelTable load_or_build_kernel_table(const std::filesystem::path& cache_dir, int n_max,
                                       const std::vector<double>& x_grid, double s,
                                       Interpolation interpolation = Interpolation::Cubic);

std::uint64_t hash_grid(std::span<const double> x_grid);

}  // namespace cps
