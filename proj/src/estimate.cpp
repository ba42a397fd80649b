#include "cps/estimate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <numbers>
#include <ostream>
#include <sstream>

#include "cps/error.hpp"

namespace cps {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

void rethrow_first(const std::vector<std::exception_ptr>& failures) {
  for (const auto& f : failures)
    if (f) std::rethrow_exception(f);
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// Running mean / variance of a vector-valued sample.
struct Moments {
  explicit Moments(std::size_t n) : mean(n, 0.0), m2(n, 0.0) {}
  template <class Get>
  void add(Get&& value) {
    ++count;
    const double inv = 1.0 / static_cast<double>(count);
    for (std::size_t i = 0; i < mean.size(); ++i) {
      const double v = value(i);
      const double delta = v - mean[i];
      mean[i] += delta * inv;
      m2[i] += delta * (v - mean[i]);
    }
  }
  // Variance of the mean.
  double mean_variance(std::size_t i) const {
    return count > 1 ? m2[i] / static_cast<double>(count - 1) / static_cast<double>(count) : 0.0;
  }
  std::size_t count = 0;
  std::vector<double> mean;
  std::vector<double> m2;
};

}  // namespace

void EstimationConfig::validate() const {
  if (!(epsilon > 0.0)) throw Error(ErrorKind::EpsilonNonPositive, "epsilon must be > 0");
  if (phi_grid.size() == 0) throw Error(ErrorKind::EmptyGrid, "phi grid is empty");
  if (!(tol > 0.0 && tol < 1.0)) throw Error(ErrorKind::InvalidState, "tol must lie in (0, 1)");
}

KernelPlan plan_kernel(double epsilon, double tol, double s, const std::vector<double>& x_grid,
                       const std::filesystem::path& cache_dir, Interpolation interpolation, bool allow_unconverged) {
  require_admissible_s(s);
  const int cap = max_kernel_order(s);
  // sup|f| is at least f_00(0) ~ 0.64, so a unit bound is a fair first guess.
  int n = std::min(cap, kernel_truncation(epsilon, tol, 1.0) + 8);
  for (;;) {
    auto table = std::make_shared<const KernelTable>(load_or_build_kernel_table(cache_dir, n, x_grid, s, interpolation));
    const int required = kernel_truncation(epsilon, tol, table->sup_abs());
    if (required <= n) {
      return {table, required, kernel_tail_bound(epsilon, required, table->sup_abs()), required, true};
    }
    if (n == cap) {
      if (!allow_unconverged)
        throw Error(ErrorKind::TruncationInsufficient,
                    "kernel for eps = " + fmt(epsilon) + ", s = " + fmt(s) + " needs order " +
                        std::to_string(required) + " but the supported maximum is " + std::to_string(cap));
      return {table, cap, kernel_tail_bound(epsilon, cap, table->sup_abs()), required, false};
    }
    n = std::min(cap, required + 8);
  }
}

PhaseDistribution sample_cps(const HomodyneDataset& dataset, const EstimationConfig& config) {
  dataset.validate();
  config.validate();
  const auto plan = plan_kernel(config.epsilon, config.tol, dataset.s(), config.x_grid.points(), config.kernel_cache,
                                config.interpolation);
  const SamplingKernel kernel(*plan.table, config.epsilon, plan.order);
  return sample_cps(dataset, config, kernel);
}

PhaseDistribution sample_cps(const HomodyneDataset& dataset, const EstimationConfig& config,
                             const SamplingKernel& kernel) {
  dataset.validate();
  config.validate();
  const KernelTable& table = kernel.table();
  if (std::abs(table.s() - dataset.s()) > 1e-12)
    throw Error(ErrorKind::InvalidState, "kernel table s does not match the dataset efficiency");
  if (kernel.epsilon() != config.epsilon) throw Error(ErrorKind::InvalidState, "kernel built for another epsilon");

  const auto& grid = config.phi_grid;
  const auto P = static_cast<Eigen::Index>(grid.size());
  const auto W = static_cast<Eigen::Index>(kernel.order() + 1);
  const auto nx = static_cast<Eigen::Index>(table.x_grid().size());
  const Eigen::Map<const RowMatrix> G(kernel.grid_harmonics().data(), nx, W);
  const double to_x = 1.0 / (std::numbers::sqrt2 * dataset.f_abs);

  const std::size_t n_phases = dataset.phases.size();
  std::vector<std::vector<double>> means(n_phases), variances(n_phases);
  std::vector<std::exception_ptr> failures(n_phases);

#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t kk = 0; kk < static_cast<std::ptrdiff_t>(n_phases); ++kk) {
    const auto k = static_cast<std::size_t>(kk);
    try {
      RowMatrix C(W, P);
      for (Eigen::Index d = 0; d < W; ++d)
        for (Eigen::Index i = 0; i < P; ++i)
          C(d, i) = std::cos(static_cast<double>(d) * (grid[static_cast<std::size_t>(i)] + dataset.phases[k]));
      // Kernel values on the x grid for every phi: the per-event work is then a
      // stencil blend of rows.
      const RowMatrix T = G * C;
      Moments acc(static_cast<std::size_t>(P));
      Eigen::VectorXd h(W);
      Eigen::RowVectorXd direct(P);
      for (double field : dataset.events[k]) {
        const double x = field * to_x;
        if (table.covers(x)) {
          const auto st = table.stencil(x);
          acc.add([&](std::size_t i) {
            double v = 0.0;
            for (int a = 0; a < st.size; ++a)
              v += st.weight[a] * T(static_cast<Eigen::Index>(st.index[a]), static_cast<Eigen::Index>(i));
            return v;
          });
        } else {
          kernel.harmonics(x, std::span<double>(h.data(), static_cast<std::size_t>(W)));
          direct = h.transpose() * C;
          acc.add([&](std::size_t i) { return direct(static_cast<Eigen::Index>(i)); });
        }
      }
      means[k] = acc.mean;
      variances[k].resize(static_cast<std::size_t>(P));
      for (std::size_t i = 0; i < static_cast<std::size_t>(P); ++i) variances[k][i] = acc.mean_variance(i);
    } catch (...) {
      failures[k] = std::current_exception();
    }
  }
  rethrow_first(failures);

  // Midpoint rule over [0, pi), summed in phase order for determinism.
  const double w = std::numbers::pi / static_cast<double>(n_phases);
  std::vector<double> raw(grid.size(), 0.0), var(grid.size(), 0.0);
  for (std::size_t k = 0; k < n_phases; ++k)
    for (std::size_t i = 0; i < grid.size(); ++i) {
      raw[i] += w * means[k][i];
      var[i] += w * w * variances[k][i];
    }

  PhaseDistribution dist{grid, std::move(raw), std::vector<double>(grid.size()), config.epsilon};
  double scale = 1.0;
  if (config.normalize) {
    const double integral = grid.integrate(dist.values);
    if (!(integral > 0.0))
      throw Error(ErrorKind::DegenerateNormalization, "sampled distribution integrates to " + fmt(integral));
    scale = 1.0 / integral;
  }
  for (std::size_t i = 0; i < grid.size(); ++i) {
    dist.values[i] *= scale;
    (*dist.stderr_values)[i] = std::sqrt(var[i]) * scale;
  }
  return dist;
}

DensityEstimate estimate_density(const HomodyneDataset& dataset, int n_max, const DensityOptions& options) {
  dataset.validate();
  if (n_max < 0) throw Error(ErrorKind::InvalidState, "n_max must be >= 0");
  const double s = dataset.s();
  const KernelTable table =
      load_or_build_kernel_table(options.kernel_cache, n_max, options.x_grid.points(), s, options.interpolation);
  const std::size_t pairs = pair_count(n_max);
  const std::size_t nx = table.x_grid().size();
  const auto values = table.values();
  const double to_x = 1.0 / (std::numbers::sqrt2 * dataset.f_abs);

  const std::size_t n_phases = dataset.phases.size();
  std::vector<std::vector<double>> means(n_phases), variances(n_phases);
  std::vector<std::exception_ptr> failures(n_phases);

#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t kk = 0; kk < static_cast<std::ptrdiff_t>(n_phases); ++kk) {
    const auto k = static_cast<std::size_t>(kk);
    try {
      Moments acc(pairs);
      for (double field : dataset.events[k]) {
        const double x = field * to_x;
        if (table.covers(x)) {
          const auto st = table.stencil(x);
          acc.add([&](std::size_t p) {
            double v = 0.0;
            for (int a = 0; a < st.size; ++a) v += st.weight[a] * values[p * nx + st.index[a]];
            return v;
          });
        } else {
          const auto row = pattern_row(x, n_max, s);
          acc.add([&](std::size_t p) { return row[p]; });
        }
      }
      means[k] = acc.mean;
      variances[k].resize(pairs);
      for (std::size_t p = 0; p < pairs; ++p) variances[k][p] = acc.mean_variance(p);
    } catch (...) {
      failures[k] = std::current_exception();
    }
  }
  rethrow_first(failures);

  const double w = std::numbers::pi / static_cast<double>(n_phases);
  const Eigen::Index dim = n_max + 1;
  DensityEstimate est{Eigen::MatrixXcd::Zero(dim, dim), Eigen::MatrixXd::Zero(dim, dim), n_max};
  for (int hi = 0; hi <= n_max; ++hi)
    for (int lo = 0; lo <= hi; ++lo) {
      const std::size_t p = pair_index(lo, hi);
      cplx sum{};
      double var = 0.0;
      for (std::size_t k = 0; k < n_phases; ++k) {
        // e^{-i(n-m) varphi} with n = lo, m = hi.
        sum += std::polar(means[k][p], (hi - lo) * dataset.phases[k]);
        var += variances[k][p];
      }
      sum *= w;
      if (lo == hi) sum.imag(0.0);
      est.rho_hat(lo, hi) = sum;
      est.rho_hat(hi, lo) = std::conj(sum);
      est.stderr_values(lo, hi) = est.stderr_values(hi, lo) = w * std::sqrt(var);
    }
  return est;
}

PhaseDistribution cps_from_density(const DensityEstimate& est, double epsilon, const PhaseGrid& grid) {
  auto dist = cps_distribution(est.rho_hat, epsilon, grid);
  const double norm = cps_normalization(est.rho_hat, epsilon);
  const double q = std::exp(-epsilon);
  const double scale = -std::expm1(-2.0 * epsilon) / norm;
  // Each grid point sees every element with weight of modulus q^{n+m}; the
  // off-diagonal pair contributes 2 Re(.), whose variance averages to half
  // the complex variance.
  double var = 0.0;
  for (Eigen::Index n = 0; n <= est.n_max; ++n)
    for (Eigen::Index m = n; m <= est.n_max; ++m) {
      const double wq = std::pow(q, static_cast<double>(n + m));
      const double se = est.stderr_values(n, m);
      var += (n == m ? 1.0 : 2.0) * wq * wq * se * se;
    }
  dist.stderr_values = std::vector<double>(grid.size(), scale * std::sqrt(var));
  return dist;
}

CompareReport compare(const PhaseDistribution& a, const PhaseDistribution& b) {
  if (!(a.grid == b.grid)) throw Error(ErrorKind::GridMismatch, "distributions are on different phase grids");
  if (a.values.size() != a.grid.size() || b.values.size() != b.grid.size())
    throw Error(ErrorKind::InvalidState, "distribution value count does not match its grid");
  CompareReport r;
  const std::size_t n = a.grid.size();
  std::vector<double> absdiff(n);
  for (std::size_t i = 0; i < n; ++i) {
    absdiff[i] = std::abs(a.values[i] - b.values[i]);
    r.sup_distance = std::max(r.sup_distance, absdiff[i]);
  }
  r.integrated_abs_distance = a.grid.integrate(absdiff);
  if (a.stderr_values || b.stderr_values) {
    r.z_scores.resize(n);
    std::size_t above = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double sa = a.stderr_values ? (*a.stderr_values)[i] : 0.0;
      const double sb = b.stderr_values ? (*b.stderr_values)[i] : 0.0;
      const double se = std::sqrt(sa * sa + sb * sb);
      const double diff = a.values[i] - b.values[i];
      r.z_scores[i] = se > 0.0 ? diff / se : (diff == 0.0 ? 0.0 : std::copysign(INFINITY, diff));
      if (std::abs(r.z_scores[i]) > 3.0) ++above;
    }
    r.fraction_z_above_3 = static_cast<double>(above) / static_cast<double>(n);
  }
  return r;
}

void write_compare_report(std::ostream& out, const CompareReport& r) {
  out << "sup_distance=" << fmt(r.sup_distance) << '\n';
  out << "integrated_abs_distance=" << fmt(r.integrated_abs_distance) << '\n';
  if (!r.z_scores.empty()) {
    double max_z = 0.0;
    for (double z : r.z_scores) max_z = std::max(max_z, std::abs(z));
    out << "fraction_z_above_3=" << fmt(r.fraction_z_above_3) << '\n';
    out << "max_abs_z=" << fmt(max_z) << '\n';
    out << "z_scores=";
    for (std::size_t i = 0; i < r.z_scores.size(); ++i) out << (i ? "," : "") << fmt(r.z_scores[i]);
    out << '\n';
  }
}

std::vector<std::size_t> local_maxima(const PhaseDistribution& dist) {
  const auto& v = dist.values;
  const std::size_t n = v.size();
  std::vector<std::size_t> peaks;
  for (std::size_t i = 0; i < n && n >= 3; ++i) {
    const double prev = v[(i + n - 1) % n];
    const double next = v[(i + 1) % n];
    if (v[i] > prev && v[i] >= next) peaks.push_back(i);
  }
  std::stable_sort(peaks.begin(), peaks.end(), [&](std::size_t x, std::size_t y) { return v[x] > v[y]; });
  return peaks;
}

// --- CSV ------------------------------------------------------------------------

namespace {

void write_meta(std::ostream& out, const CsvMeta& meta) {
  if (meta.epsilon) out << "# epsilon=" << fmt(*meta.epsilon) << '\n';
  if (meta.eta) out << "# eta=" << fmt(*meta.eta) << '\n';
  if (meta.seed) out << "# seed=" << *meta.seed << '\n';
  if (!meta.dataset_hash.empty()) out << "# dataset_sha256=" << meta.dataset_hash << '\n';
  if (!meta.note.empty()) out << "# note=" << meta.note << '\n';
}

}  // namespace

void write_distribution_csv(std::ostream& out, const PhaseDistribution& dist, const CsvMeta& meta) {
  write_meta(out, meta);
  if (!meta.epsilon) out << "# epsilon=" << fmt(dist.epsilon) << '\n';
  out << "phi,p,stderr,flag_negative\n";
  const auto flags = dist.negative_flags();
  for (std::size_t i = 0; i < dist.grid.size(); ++i) {
    out << fmt(dist.grid[i]) << ',' << fmt(dist.values[i]) << ','
        << (dist.stderr_values ? fmt((*dist.stderr_values)[i]) : std::string("nan")) << ',' << (flags[i] ? 1 : 0)
        << '\n';
  }
}

void write_distribution_csv(const std::filesystem::path& path, const PhaseDistribution& dist, const CsvMeta& meta) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot open " + path.string() + " for writing");
  write_distribution_csv(out, dist, meta);
  if (!out) throw Error(ErrorKind::Io, "write failed for " + path.string());
}

PhaseDistribution read_distribution_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  std::vector<double> phis, values, errors;
  double epsilon = 0.0;
  bool any_error = false, header = false;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto pos = line.find("epsilon=");
      if (pos != std::string::npos) epsilon = std::strtod(line.c_str() + pos + 8, nullptr);
      continue;
    }
    if (!header) {
      if (line.rfind("phi,p", 0) != 0) throw Error(ErrorKind::Io, path.string() + ": missing phi,p header");
      header = true;
      continue;
    }
    std::istringstream ls(line);
    std::string cell[4];
    for (int c = 0; c < 4; ++c) std::getline(ls, cell[c], ',');
    char* end = nullptr;
    const double phi = std::strtod(cell[0].c_str(), &end);
    if (cell[0].empty() || *end) throw Error(ErrorKind::Io, path.string() + ":" + std::to_string(line_no) + " bad phi");
    const double p = std::strtod(cell[1].c_str(), &end);
    if (cell[1].empty() || *end) throw Error(ErrorKind::Io, path.string() + ":" + std::to_string(line_no) + " bad p");
    const double se = cell[2].empty() ? NAN : std::strtod(cell[2].c_str(), nullptr);
    any_error = any_error || !std::isnan(se);
    phis.push_back(phi);
    values.push_back(p);
    errors.push_back(se);
  }
  if (phis.empty()) throw Error(ErrorKind::Io, path.string() + " holds no distribution rows");
  PhaseDistribution dist{PhaseGrid(std::move(phis)), std::move(values), std::nullopt, epsilon};
  if (any_error) {
    for (double& e : errors)
      if (std::isnan(e)) e = 0.0;
    dist.stderr_values = std::move(errors);
  }
  return dist;
}

void write_density_csv(std::ostream& out, const DensityEstimate& est, const CsvMeta& meta) {
  write_meta(out, meta);
  out << "n,m,re,im,stderr\n";
  for (int n = 0; n <= est.n_max; ++n)
    for (int m = 0; m <= est.n_max; ++m)
      out << n << ',' << m << ',' << fmt(est.rho_hat(n, m).real()) << ',' << fmt(est.rho_hat(n, m).imag()) << ','
          << fmt(est.stderr_values(n, m)) << '\n';
}

}  // namespace cps
