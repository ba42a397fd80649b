// End-to-end acceptance checks, one PASS/FAIL line per criterion.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <sstream>
#include <string>

#include "commands.hpp"
#include "cps/error.hpp"
#include "cps/estimate.hpp"
#include "cps/fock.hpp"
#include "cps/homodyne.hpp"
#include "cps/kernel.hpp"
#include "cps/pattern_function.hpp"
#include "cps/quadrature_rule.hpp"
#include "exact_data.hpp"

using namespace cps;
namespace fs = std::filesystem;

namespace {

constexpr double kPi = std::numbers::pi;
const double kR = std::asinh(1.0);
constexpr std::uint64_t kSeed = 20240601;

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail += (detail.empty() ? "" : "; ") + std::string("FAILED ") + what;
    }
  }
  void note(const std::string& what) { detail += (detail.empty() ? "" : "; ") + what; }
};

std::string f(const char* format, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), format, v);
  return buf;
}

int failures = 0;

void criterion(int id, const char* title, double budget_s, const std::function<void(Outcome&)>& body) {
  Outcome o;
  const auto start = std::chrono::steady_clock::now();
  try {
    body(o);
  } catch (const std::exception& e) {
    o.require(false, std::string("exception: ") + e.what());
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  o.require(secs < budget_s, "runtime " + f("%.1f", secs) + " s over budget " + f("%.0f", budget_s) + " s");
  if (!o.pass) ++failures;
  std::printf("[%s] %d %s (%.1f s): %s\n", o.pass ? "PASS" : "FAIL", id, title, secs, o.detail.c_str());
  std::fflush(stdout);
}

const DensityMatrix& squeezed() {
  static const DensityMatrix rho = pure_to_density(squeezed_vacuum(1.0));
  return rho;
}

const HomodyneDataset& squeezed_data() {
  static const HomodyneDataset d = simulate(squeezed(), 30, 10000, 1.0, kSeed, "squeezed_vacuum(1)");
  return d;
}

double sample_variance(const std::vector<double>& v, double* stderr_var) {
  const double n = static_cast<double>(v.size());
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= n;
  double m2 = 0.0, m4 = 0.0;
  for (double x : v) {
    const double d = (x - mean) * (x - mean);
    m2 += d;
    m4 += d * d;
  }
  const double var = m2 / (n - 1.0);
  *stderr_var = std::sqrt((m4 / n - var * var) / n);
  return var;
}

double squeezed_variance(double phi) {
  const double c = std::cos(phi), s = std::sin(phi);
  return (std::exp(2.0 * kR) * c * c + std::exp(-2.0 * kR) * s * s) / 2.0;
}

double circular_distance(double a, double b) {
  const double d = std::fmod(std::abs(a - b), 2.0 * kPi);
  return std::min(d, 2.0 * kPi - d);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

// --- criteria ---------------------------------------------------------------------

void quadrature_variances(Outcome& o) {
  const auto& d = squeezed_data();
  double worst = 0.0;
  for (std::size_t k = 0; k < d.phases.size(); ++k) {
    double se = 0.0;
    const double var = sample_variance(d.events[k], &se);
    worst = std::max(worst, std::abs(var - squeezed_variance(d.phases[k])) / se);
  }
  o.require(d.phases.size() == 30 && d.total_events() == 300000, "30 x 10^4 events");
  o.require(worst <= 4.0, "variance within 4 stderr");
  o.note("worst |z| " + f("%.2f", worst));
}

void sampled_cps(Outcome& o) {
  EstimationConfig config;  // eps 0.1, 128 points, fresh table build (no cache)
  config.epsilon = 0.1;
  const auto p = sample_cps(squeezed_data(), config);
  const auto exact = cps_distribution(squeezed(), 0.1, config.phi_grid);
  const auto report = compare(p, exact);
  const auto peaks = local_maxima(p);
  const double spacing = 2.0 * kPi / 128;
  o.require(peaks.size() >= 2, "two peaks");
  if (peaks.size() >= 2) {
    const double sep = circular_distance(p.grid[peaks[0]], p.grid[peaks[1]]);
    o.require(std::abs(sep - kPi) <= spacing + 1e-12, "peak separation pi +/- one spacing");
    o.note("peak separation " + f("%.4f", sep));
    // The two dominant peaks must stand out from noise maxima.
    if (peaks.size() > 2) o.note("third maximum " + f("%.3f", p.values[peaks[2]]) + " vs " + f("%.3f", p.values[peaks[1]]));
  }
  o.require(report.fraction_z_above_3 <= 0.01, "fraction |z|>3 <= 1%");
  o.require(report.integrated_abs_distance < 0.05, "integrated distance < 0.05");
  o.note("frac|z|>3 " + f("%.4f", report.fraction_z_above_3) + ", L1 " + f("%.4f", report.integrated_abs_distance) +
         ", sup " + f("%.4f", report.sup_distance));
}

void reconstruction_identity(Outcome& o) {
  const auto grid = PhaseGrid::uniform(128);
  const auto phase_rule = composite_gauss_legendre(0.0, kPi, 16);
  for (double eps : {0.1, 0.3, 0.8}) {
    const int order = kernel_truncation(eps, 1e-6, 3.0);
    const auto H = cps_test::exact_harmonics(eps, order, 0.0);
    o.require(H.sup_pattern <= 3.0, "pattern sup below the assumed bound");
    const auto est = cps_test::exact_data_estimate(squeezed(), H, phase_rule.nodes, phase_rule.weights, grid, eps);
    const auto exact = cps_distribution(squeezed(), eps, grid);
    double sup = 0.0;
    for (std::size_t i = 0; i < grid.size(); ++i) sup = std::max(sup, std::abs(est[i] - exact.values[i]));
    o.require(sup < 1e-3, "eps=" + f("%g", eps) + " within 1e-3");
    o.note("eps=" + f("%g", eps) + " sup " + f("%.2e", sup));
  }
}

void kernel_properties(Outcome& o) {
  double sym = 0.0;
  for (double x : {-4.2, -0.7, 0.0, 1.3, 5.6})
    for (int n = 0; n <= 10; ++n)
      for (int m = 0; m <= 10; ++m) {
        sym = std::max(sym, std::abs(pattern_function_fast(n, m, x) - pattern_function_fast(m, n, x)));
        sym = std::max(sym, std::abs(pattern_function(n, m, x, 0.0) - pattern_function(m, n, x, 0.0)));
      }
  o.require(sym <= 1e-10, "f_nm = f_mn");

  const auto table = build_kernel_table(80, XGridSpec{-6.0, 6.0, 0.05}.points(), 0.0);
  double even = 0.0;
  for (double eps : {0.8, 0.3}) {
    const SamplingKernel k(table, eps, kernel_truncation(eps, 1e-6, table.sup_abs()));
    for (double x = -6.0; x <= 6.0; x += 0.37)
      for (double sigma = -3.0; sigma <= 3.0; sigma += 0.29) {
        even = std::max(even, std::abs(k(sigma, x) - k(-sigma, x)));
        even = std::max(even, std::abs(k(sigma, x) - k(sigma + 2.0 * kPi, x)));
      }
  }
  o.require(even <= 1e-10, "kernel even and 2pi-periodic");

  std::string slopes;
  for (auto [n, m] : {std::pair{0, 1}, std::pair{0, 2}, std::pair{1, 3}}) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int count = 0;
    for (double x = 6.0; x <= 12.0 + 1e-9; x += 0.25) {
      const double lx = std::log(x), ly = std::log(std::abs(pattern_function_fast(n, m, x)));
      sx += lx, sy += ly, sxx += lx * lx, sxy += lx * ly, ++count;
    }
    const double slope = (count * sxy - sx * sy) / (count * sxx - sx * sx);
    const double expected = -(std::abs(n - m) + 2.0);
    o.require(std::abs(slope - expected) <= 0.1 * std::abs(expected), "tail slope");
    slopes += f("%.3f", slope) + " ";
  }

  double agree = 0.0;
  for (double x : {-7.1, -2.5, 0.0, 0.9, 3.3, 8.0}) {
    const auto row = pattern_row_fast(x, 10);
    for (int n = 0; n <= 10; ++n)
      for (int m = n; m <= 10; ++m) agree = std::max(agree, std::abs(row[pair_index(n, m)] - pattern_function(n, m, x, 0.0)));
  }
  o.require(agree <= 1e-8, "fast path vs quadrature 1e-8");
  o.note("symmetry " + f("%.1e", sym) + ", evenness/periodicity " + f("%.1e", even) + ", slopes " + slopes +
         "fast-vs-quadrature " + f("%.1e", agree));
}

void analytic_limits(Outcome& o) {
  const auto grid = PhaseGrid::uniform(512);
  const auto vac = cps_distribution(pure_to_density(coherent_state(0.0, 4)), 0.3, grid);
  double flat = 0.0;
  for (double v : vac.values) flat = std::max(flat, std::abs(v - 1.0 / (2.0 * kPi)));
  o.require(flat <= 1e-12, "vacuum flat");

  const std::vector<std::pair<std::string, DensityMatrix>> states{
      {"coherent(1)", pure_to_density(coherent_state(1.0))},
      {"squeezed(1)", squeezed()},
      {"squeezed(2)", pure_to_density(squeezed_vacuum(2.0))}};
  double worst_norm = 0.0;
  for (const auto& [name, rho] : states) {
    const auto london = london_distribution(rho, grid);
    worst_norm = std::max(worst_norm, std::abs(london.integral() - 1.0));
    double last = INFINITY;
    std::string seq;
    for (double eps : {0.8, 0.3, 0.1, 0.01}) {
      const auto p = cps_distribution(rho, eps, grid);
      worst_norm = std::max(worst_norm, std::abs(p.integral() - 1.0));
      double d = 0.0;
      for (std::size_t i = 0; i < grid.size(); ++i) d = std::max(d, std::abs(p.values[i] - london.values[i]));
      o.require(d < last, name + " distance to London decreasing");
      last = d;
      seq += f("%.3g", d) + " ";
    }
    o.note(name + " " + seq);
  }
  o.require(worst_norm <= 1e-6, "normalization");

  const int n = 360, shift = 37;
  const auto g = PhaseGrid::uniform(n);
  const auto base = cps_distribution(squeezed(), 0.1, g);
  const auto rot = cps_distribution(squeezed().phase_rotated(2.0 * kPi * shift / n), 0.1, g);
  double cov = 0.0;
  for (int i = 0; i < n; ++i) cov = std::max(cov, std::abs(rot.values[i] - base.values[(i - shift + n) % n]));
  o.require(cov <= 1e-10, "phase-shift covariance");
  o.note("normalization " + f("%.1e", worst_norm) + ", covariance " + f("%.1e", cov));
}

void density_sampling(Outcome& o) {
  DensityOptions options;
  options.kernel_cache = CPS_TEST_KERNEL_CACHE;
  const auto est = estimate_density(squeezed_data(), 8, options);
  const auto s = squeezed_vacuum(1.0);
  double worst = 0.0, worst_odd = 0.0;
  for (int n = 0; n <= 6; ++n) {
    const double z = std::abs(est.rho_hat(n, n).real() - std::norm(s[n])) / est.stderr_values(n, n);
    worst = std::max(worst, z);
    if (n % 2) worst_odd = std::max(worst_odd, z);
  }
  o.require(worst <= 3.0, "diagonals within 3 stderr");
  o.require(worst_odd <= 3.0, "odd diagonals consistent with zero");
  o.note("worst |z| " + f("%.2f", worst) + ", odd " + f("%.2f", worst_odd));
}

void efficiency_model(Outcome& o) {
  const auto lossy = simulate(squeezed(), 30, 10000, 0.8, kSeed, "squeezed_vacuum(1)");
  const auto& ideal = squeezed_data();
  const double excess = 0.25 * 0.5;  // |s||F|^2
  double worst = 0.0;
  for (std::size_t k = 0; k < lossy.phases.size(); ++k) {
    double se_l = 0.0, se_i = 0.0;
    const double vl = sample_variance(lossy.events[k], &se_l);
    const double vi = sample_variance(ideal.events[k], &se_i);
    // Matched seeds: the ideal draws are shared, so the noise variance is the
    // stderr that matters; the lossy stderr bounds it from above.
    worst = std::max(worst, std::abs(vl - vi - excess) / se_l);
  }
  o.require(worst <= 4.0, "variance excess within 4 stderr");
  o.note("excess worst |z| " + f("%.2f", worst));

  const XGridSpec grid;
  const auto plan = plan_kernel(0.1, 1e-6, -0.25, grid.points(), CPS_TEST_KERNEL_CACHE, Interpolation::Cubic, true);
  const SamplingKernel k(*plan.table, 0.1, plan.order);
  double sup = 0.0;
  bool finite = true;
  for (double field = -6.0; field <= 6.0; field += 0.1)
    for (int j = 0; j < 128; ++j) {
      const double v = k(2.0 * kPi * j / 128, field);
      finite = finite && std::isfinite(v);
      sup = std::max(sup, std::abs(v));
    }
  o.require(finite, "finite kernel");
  o.require(plan.converged, "kernel eps=0.1 eta=0.8 converged (order " + std::to_string(plan.order) + " of " +
                                std::to_string(plan.required_order) + " required, tail bound " +
                                f("%.2e", plan.tail_bound) + ")");
  o.note("sup|K| " + f("%.3g", sup) + ", sup|f| " + f("%.3g", plan.table->sup_abs()));
}

void determinism(Outcome& o) {
  const fs::path root = fs::temp_directory_path() / "cps_acceptance_determinism";
  fs::remove_all(root);
  fs::create_directories(root);
  {
    std::ofstream cfg(root / "run.cfg");
    cfg << "[state]\nkind = squeezed_vacuum\nmean_n = 1\n[run]\nseed = 7\nepsilons = 0.8, 0.3\n"
           "[simulate]\nn_phases = 30\nevents_per_phase = 10000\nhistogram_bins = 40\n"
           "[estimate]\ndensity_n_max = 6\n";
  }
  for (const char* run : {"a", "b"}) {
    const std::string out = (root / run).string();
    for (const char* cmd : {"simulate", "estimate"}) {
      const int code = cli::run_cli({"cps", "--config", (root / "run.cfg").string(), "--out", out, "--kernel-cache",
                                     CPS_TEST_KERNEL_CACHE, cmd});
      o.require(code == cli::kExitOk, std::string(cmd) + " exit code");
    }
  }
  int files = 0, differ = 0;
  for (const auto& entry : fs::directory_iterator(root / "a")) {
    if (!entry.is_regular_file()) continue;
    ++files;
    if (slurp(entry.path()) != slurp(root / "b" / entry.path().filename())) {
      ++differ;
      o.note("differs: " + entry.path().filename().string());
    }
  }
  o.require(files > 0 && differ == 0, "byte-identical outputs");
  o.note(std::to_string(files) + " files compared");
  fs::remove_all(root);
}

}  // namespace

int main() {
  criterion(1, "squeezed-vacuum quadrature variances track the phase", 30.0, quadrature_variances);
  criterion(2, "sampled CPS at eps=0.1 matches the analytic curve", 120.0, sampled_cps);
  criterion(3, "reconstruction identity with exact quadrature data", 300.0, reconstruction_identity);
  criterion(4, "pattern-function and kernel properties", 60.0, kernel_properties);
  criterion(5, "analytic limits", 60.0, analytic_limits);
  criterion(6, "density sampling on the squeezed dataset", 60.0, density_sampling);
  criterion(7, "efficiency model and lossy kernel", 300.0, efficiency_model);
  criterion(8, "determinism of datasets and outputs", 300.0, determinism);
  std::printf("%d of 8 criteria failed\n", failures);
  return failures ? 1 : 0;
}
