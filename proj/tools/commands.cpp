#include "commands.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <numbers>
#include <sstream>

#include <CLI11.hpp>

#include "cps/digest.hpp"
#include "cps/error.hpp"
#include "cps/estimate.hpp"
#include "cps/homodyne.hpp"
#include "cps/kernel.hpp"

namespace cps::cli {

namespace fs = std::filesystem;

namespace {

constexpr const char* kManifest = "MANIFEST";
constexpr const char* kRunConfig = "run.cfg";

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// Short form for file names.
std::string tag(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

// Files produced by a command, hashed into MANIFEST at the end.
class Outputs {
public:
  Outputs(fs::path dir, std::string command) : dir_(std::move(dir)), command_(std::move(command)) {
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec) throw Error(ErrorKind::Io, "cannot create output directory " + dir_.string());
  }

  fs::path path(const std::string& name) {
    names_.push_back(name);
    return dir_ / name;
  }

  std::ofstream open(const std::string& name) {
    std::ofstream out(path(name), std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::Io, "cannot open " + (dir_ / name).string() + " for writing");
    return out;
  }

  void finish(const RunConfig& config) {
    {
      std::ofstream cfg(dir_ / kRunConfig, std::ios::binary | std::ios::trunc);
      cfg << serialize_config(config);
      if (!cfg) throw Error(ErrorKind::Io, "cannot write " + (dir_ / kRunConfig).string());
    }
    std::sort(names_.begin(), names_.end());
    names_.erase(std::unique(names_.begin(), names_.end()), names_.end());
    std::ofstream m(dir_ / kManifest, std::ios::binary | std::ios::trunc);
    m << "#command " << command_ << '\n';
    for (const auto& n : names_) m << sha256_file(dir_ / n) << "  " << n << '\n';
    if (!m) throw Error(ErrorKind::Io, "cannot write manifest in " + dir_.string());
  }

private:
  fs::path dir_;
  std::string command_;
  std::vector<std::string> names_;
};

void check_stream(const std::ofstream& out, const std::string& what) {
  if (!out) throw Error(ErrorKind::Io, "write failed for " + what);
}

PhaseGrid phi_grid(const RunConfig& c) { return PhaseGrid::uniform(c.phi_points); }

// --- analytic -------------------------------------------------------------------

int cmd_analytic(const RunConfig& c, Outputs& out) {
  std::string state_tag;
  const auto rho = build_state(c.state, &state_tag);
  const auto grid = phi_grid(c);
  for (double eps : c.epsilons) {
    auto f = out.open("analytic_eps" + tag(eps) + ".csv");
    write_distribution_csv(f, cps_distribution(rho, eps, grid), CsvMeta{eps, std::nullopt, std::nullopt, {}, state_tag});
    check_stream(f, "analytic CSV");
  }
  auto f = out.open("analytic_london.csv");
  write_distribution_csv(f, london_distribution(rho, grid), CsvMeta{0.0, std::nullopt, std::nullopt, {}, state_tag});
  check_stream(f, "London CSV");
  std::cout << "analytic: " << c.epsilons.size() << " CPS curves + London for " << state_tag << '\n';
  return kExitOk;
}

// --- kernel ---------------------------------------------------------------------

int cmd_kernel(const RunConfig& c, Outputs& out, const fs::path& cache) {
  const auto x_grid = c.x_grid.points();
  bool all_converged = true;
  for (const auto& pair : c.kernel_pairs) {
    const double s = 1.0 - 1.0 / pair.eta;
    const auto plan = plan_kernel(pair.epsilon, c.tol, s, x_grid, cache, c.interpolation, true);
    const SamplingKernel kernel(*plan.table, pair.epsilon, plan.order);
    const std::string stem = "kernel_eps" + tag(pair.epsilon) + "_eta" + tag(pair.eta);

    const int np = c.sum_phase_points;
    const int nf = c.field_points;
    std::vector<double> sigma(static_cast<std::size_t>(np));
    for (int j = 0; j < np; ++j) sigma[static_cast<std::size_t>(j)] = 2.0 * std::numbers::pi * j / np;
    std::vector<double> surface(static_cast<std::size_t>(np) * static_cast<std::size_t>(nf));
    std::vector<double> h(static_cast<std::size_t>(plan.order) + 1);
    const double to_x = 1.0 / (std::numbers::sqrt2 * kDefaultFieldScale);
    for (int i = 0; i < nf; ++i) {
      const double field = c.field_min + (c.field_max - c.field_min) * i / (nf - 1);
      kernel.harmonics(field * to_x, h);
      for (int j = 0; j < np; ++j) {
        double k = 0.0;
        for (std::size_t d = 0; d < h.size(); ++d) k += h[d] * std::cos(static_cast<double>(d) * sigma[static_cast<std::size_t>(j)]);
        surface[static_cast<std::size_t>(j) * static_cast<std::size_t>(nf) + static_cast<std::size_t>(i)] = k;
      }
    }

    double sup = 0.0, even_residual = 0.0;
    bool finite = true;
    for (int j = 0; j < np; ++j)
      for (int i = 0; i < nf; ++i) {
        const double v = surface[static_cast<std::size_t>(j * nf + i)];
        finite = finite && std::isfinite(v);
        sup = std::max(sup, std::abs(v));
        if (j > 0) {
          const double mirror = surface[static_cast<std::size_t>((np - j) * nf + i)];
          even_residual = std::max(even_residual, std::abs(v - mirror));
        }
      }

    {
      auto f = out.open(stem + ".csv");
      f << "# epsilon=" << fmt(pair.epsilon) << "\n# eta=" << fmt(pair.eta) << "\n# s=" << fmt(s)
        << "\n# order=" << plan.order << "\n# converged=" << (plan.converged ? "true" : "false") << '\n';
      f << "sum_phase,F,K\n";
      for (int j = 0; j < np; ++j)
        for (int i = 0; i < nf; ++i) {
          const double field = c.field_min + (c.field_max - c.field_min) * i / (nf - 1);
          f << fmt(sigma[static_cast<std::size_t>(j)]) << ',' << fmt(field) << ','
            << fmt(surface[static_cast<std::size_t>(j * nf + i)]) << '\n';
        }
      check_stream(f, stem + ".csv");
    }
    {
      auto f = out.open(stem + "_report.txt");
      f << "epsilon=" << fmt(pair.epsilon) << "\neta=" << fmt(pair.eta) << "\ns=" << fmt(s)
        << "\ntol=" << fmt(c.tol) << "\ntable_order=" << plan.table->n_max()
        << "\nsup_abs_pattern=" << fmt(plan.table->sup_abs()) << "\nrequired_order=" << plan.required_order
        << "\norder_used=" << plan.order << "\ntail_bound=" << fmt(plan.tail_bound)
        << "\nconverged=" << (plan.converged ? "true" : "false") << "\nsup_abs_kernel=" << fmt(sup)
        << "\nfinite=" << (finite ? "true" : "false") << "\nevenness_residual=" << fmt(even_residual) << '\n';
      check_stream(f, stem + "_report.txt");
    }
    std::cout << "kernel eps=" << tag(pair.epsilon) << " eta=" << tag(pair.eta) << ": order " << plan.order
              << (plan.converged ? "" : " (NOT converged, needs " + std::to_string(plan.required_order) + ")")
              << ", sup|K|=" << tag(sup) << '\n';
    if (!plan.converged) {
      all_converged = false;
      std::cerr << "warning: kernel eps=" << tag(pair.epsilon) << " eta=" << tag(pair.eta)
                << " did not reach tol " << tag(c.tol) << " within the supported order "
                << plan.table->n_max() << "; tail bound " << tag(plan.tail_bound) << '\n';
    }
  }
  return all_converged ? kExitOk : kExitNumeric;
}

// --- simulate -------------------------------------------------------------------

int cmd_simulate(const RunConfig& c, Outputs& out) {
  std::string state_tag;
  const auto rho = build_state(c.state, &state_tag);
  const auto ds = simulate(rho, c.n_phases, c.events_per_phase, c.eta, c.seed, state_tag);
  write_dataset(out.path("dataset.txt"), ds);
  if (c.histogram_bins > 0) {
    for (int k = 0; k < c.n_phases; ++k) {
      char name[48];
      std::snprintf(name, sizeof(name), "histogram_%03d.csv", k);
      auto f = out.open(name);
      f << "# phase=" << fmt(ds.phases[static_cast<std::size_t>(k)]) << '\n';
      write_histogram_csv(f, histogram(ds, k, c.histogram_bins));
      check_stream(f, name);
    }
  }
  std::cout << "simulate: " << ds.total_events() << " events at " << ds.phases.size() << " phases, eta=" << tag(c.eta)
            << '\n';
  return kExitOk;
}

// --- estimate -------------------------------------------------------------------

int cmd_estimate(const RunConfig& c, Outputs& out, const fs::path& cache) {
  const auto ds = read_dataset(fs::path(c.dataset));
  const std::string hash = dataset_hash(ds);
  const auto grid = phi_grid(c);

  std::optional<DensityMatrix> rho;
  std::optional<PhaseDistribution> reference_file;
  if (c.reference == "analytic")
    rho = build_state(c.state);
  else if (c.reference != "none")
    reference_file = read_distribution_csv(c.reference);

  std::optional<DensityEstimate> density;
  if (c.density_n_max > 0) {
    density = estimate_density(ds, c.density_n_max, DensityOptions{c.x_grid, c.interpolation, cache});
    auto f = out.open("density.csv");
    write_density_csv(f, *density, CsvMeta{std::nullopt, ds.eta, ds.seed, hash, {}});
    check_stream(f, "density.csv");
  }

  for (double eps : c.epsilons) {
    EstimationConfig ec;
    ec.epsilon = eps;
    ec.phi_grid = grid;
    ec.tol = c.tol;
    ec.normalize = c.normalize;
    ec.x_grid = c.x_grid;
    ec.interpolation = c.interpolation;
    ec.kernel_cache = cache;
    const auto sampled = sample_cps(ds, ec);
    const CsvMeta meta{eps, ds.eta, ds.seed, hash, {}};
    write_distribution_csv(out.path("sampled_eps" + tag(eps) + ".csv"), sampled, meta);

    if (density) {
      write_distribution_csv(out.path("twostep_eps" + tag(eps) + ".csv"), cps_from_density(*density, eps, grid), meta);
    }
    std::optional<PhaseDistribution> reference;
    if (rho) reference = cps_distribution(*rho, eps, grid);
    if (reference_file) reference = *reference_file;
    if (reference) {
      const auto report = compare(sampled, *reference);
      auto f = out.open("compare_eps" + tag(eps) + ".txt");
      f << "epsilon=" << fmt(eps) << "\nreference=" << c.reference << '\n';
      const auto peaks = local_maxima(sampled);
      if (peaks.size() >= 2) {
        double sep = std::abs(grid[peaks[0]] - grid[peaks[1]]);
        f << "peak_separation=" << fmt(sep) << '\n';
      }
      write_compare_report(f, report);
      check_stream(f, "compare report");
      std::cout << "estimate eps=" << tag(eps) << ": sup=" << tag(report.sup_distance)
                << " L1=" << tag(report.integrated_abs_distance)
                << " frac|z|>3=" << tag(report.fraction_z_above_3) << '\n';
    } else {
      std::cout << "estimate eps=" << tag(eps) << ": written\n";
    }
  }
  return kExitOk;
}

// --- compare --------------------------------------------------------------------

int cmd_compare(const RunConfig& c, Outputs& out) {
  if (c.compare_a.empty() || c.compare_b.empty())
    throw Error(ErrorKind::Config, "compare.a / compare.b: two distribution files are required");
  const auto a = read_distribution_csv(c.compare_a);
  const auto b = read_distribution_csv(c.compare_b);
  const auto report = compare(a, b);
  auto f = out.open("compare.txt");
  write_compare_report(f, report);
  check_stream(f, "compare.txt");
  write_compare_report(std::cout, report);
  return kExitOk;
}

// --- check ----------------------------------------------------------------------

std::map<std::string, std::string> read_manifest(const fs::path& dir, std::string* command) {
  std::ifstream in(dir / kManifest);
  if (!in) throw Error(ErrorKind::Io, "no MANIFEST in " + dir.string());
  std::map<std::string, std::string> entries;
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("#command ", 0) == 0) {
      if (command) *command = line.substr(9);
      continue;
    }
    const auto sep = line.find("  ");
    if (sep == std::string::npos) continue;
    entries[line.substr(sep + 2)] = line.substr(0, sep);
  }
  return entries;
}

int cmd_check(const fs::path& dir, bool rerun, const fs::path& cache) {
  std::string command;
  const auto entries = read_manifest(dir, &command);
  int bad = 0;
  for (const auto& [name, hash] : entries) {
    std::string actual;
    try {
      actual = sha256_file(dir / name);
    } catch (const Error&) {
      actual = "missing";
    }
    if (actual != hash) {
      std::cout << "MISMATCH " << name << '\n';
      ++bad;
    }
  }
  std::cout << "check: " << entries.size() - static_cast<std::size_t>(bad) << "/" << entries.size()
            << " files match MANIFEST\n";
  if (rerun) {
    auto config = load_config(dir / kRunConfig);
    if (command == "estimate" && config.dataset.empty()) config.dataset = (dir / "dataset.txt").string();
    const fs::path again = dir / ".rerun";
    fs::remove_all(again);
    const int code = run_command(command, config, again, cache);
    if (code != kExitOk && code != kExitNumeric) return code;
    const auto fresh = read_manifest(again, nullptr);
    int differ = 0;
    for (const auto& [name, hash] : entries) {
      const auto it = fresh.find(name);
      if (it == fresh.end() || it->second != hash) {
        std::cout << "NONDETERMINISTIC " << name << '\n';
        ++differ;
      }
    }
    if (fresh.size() != entries.size()) ++differ;
    std::cout << "rerun of '" << command << "': " << (differ ? "outputs differ" : "byte-identical") << '\n';
    fs::remove_all(again);
    bad += differ;
  }
  return bad ? kExitIo : kExitOk;
}

fs::path absolute_or_empty(const std::string& p) { return p.empty() ? fs::path() : fs::absolute(p); }

}  // namespace

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::QuadratureNotConverged:
    case ErrorKind::SamplerNotConverged:
    case ErrorKind::DegenerateNormalization:
    case ErrorKind::TruncationInsufficient:
      return kExitNumeric;
    case ErrorKind::Io:
      return kExitIo;
    default:
      return kExitConfig;
  }
}

int run_command(const std::string& command, RunConfig config, const fs::path& out, const fs::path& kernel_cache) {
  // Validate everything before any work starts.
  config.validate();
  // A defaulted dataset is recorded blank so run.cfg does not depend on the output directory.
  bool default_dataset = false;
  if (command == "estimate") {
    default_dataset = config.dataset.empty();
    if (default_dataset) config.dataset = (out / "dataset.txt").string();
    config.dataset = absolute_or_empty(config.dataset).string();
    if (config.reference != "analytic" && config.reference != "none")
      config.reference = absolute_or_empty(config.reference).string();
  }
  if (command == "compare") {
    config.compare_a = absolute_or_empty(config.compare_a).string();
    config.compare_b = absolute_or_empty(config.compare_b).string();
  }
  // run.cfg records content, not where this run happened to write.
  RunConfig recorded = config;
  recorded.out.clear();
  recorded.kernel_cache.clear();
  if (default_dataset) recorded.dataset.clear();

  Outputs outputs(out, command);
  int code = kExitOk;
  if (command == "analytic")
    code = cmd_analytic(config, outputs);
  else if (command == "kernel")
    code = cmd_kernel(config, outputs, kernel_cache);
  else if (command == "simulate")
    code = cmd_simulate(config, outputs);
  else if (command == "estimate")
    code = cmd_estimate(config, outputs, kernel_cache);
  else if (command == "compare")
    code = cmd_compare(config, outputs);
  else
    throw Error(ErrorKind::Config, "unknown command '" + command + "'");
  outputs.finish(recorded);
  return code;
}

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"Coherent-phase-state distributions from simulated homodyne data", "cps"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path, out_dir, kernel_cache;
  std::optional<std::uint64_t> seed;
  int threads = 0;
  app.add_option("--config", config_path, "Run configuration file");
  app.add_option("--out", out_dir, "Output directory (default: run.out or ./out)");
  app.add_option("--seed", seed, "RNG seed (overrides run.seed)");
  app.add_option("--threads", threads, "Worker threads, 0 = auto")->check(CLI::NonNegativeNumber);
  app.add_option("--kernel-cache", kernel_cache, "Kernel table cache directory (default: $CPS_KERNEL_CACHE)");

  auto* analytic = app.add_subcommand("analytic", "CPS and London distributions of the configured state");
  auto* kernel = app.add_subcommand("kernel", "Sampling-kernel surfaces for the configured (eps, eta) pairs");
  auto* simulate_cmd = app.add_subcommand("simulate", "Simulate balanced homodyne detection");
  auto* estimate = app.add_subcommand("estimate", "Sample CPS distributions from a dataset");
  std::string dataset_path, reference;
  estimate->add_option("--dataset", dataset_path, "Dataset file (default: estimate.dataset or <out>/dataset.txt)");
  estimate->add_option("--reference", reference, "analytic, none, or a distribution CSV");
  auto* compare_cmd = app.add_subcommand("compare", "Compare two distribution CSV files");
  std::string file_a, file_b;
  compare_cmd->add_option("a", file_a, "First distribution CSV");
  compare_cmd->add_option("b", file_b, "Second distribution CSV");
  auto* check = app.add_subcommand("check", "Verify MANIFEST hashes in the output directory");
  bool rerun = false;
  check->add_flag("--rerun", rerun, "Also rerun the recorded command and require byte-identical outputs");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  if (!reversed.empty()) reversed.pop_back();  // argv[0]
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (threads > 0) omp_set_num_threads(threads);
    RunConfig config = config_path.empty() ? RunConfig{} : load_config(config_path);
    if (seed) config.seed = *seed;
    if (!kernel_cache.empty()) config.kernel_cache = kernel_cache;
    if (config.kernel_cache.empty())
      if (const char* env = std::getenv("CPS_KERNEL_CACHE")) config.kernel_cache = env;
    if (!out_dir.empty()) config.out = out_dir;
    const fs::path out = config.out.empty() ? fs::path("out") : fs::path(config.out);
    const fs::path cache = config.kernel_cache;

    if (check->parsed()) return cmd_check(out, rerun, cache);

    std::string command;
    if (analytic->parsed()) command = "analytic";
    if (kernel->parsed()) command = "kernel";
    if (simulate_cmd->parsed()) command = "simulate";
    if (estimate->parsed()) {
      command = "estimate";
      if (!dataset_path.empty()) config.dataset = dataset_path;
      if (!reference.empty()) config.reference = reference;
    }
    if (compare_cmd->parsed()) {
      command = "compare";
      if (!file_a.empty()) config.compare_a = file_a;
      if (!file_b.empty()) config.compare_b = file_b;
    }
    return run_command(command, config, out, cache);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e.kind());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitIo;
  }
}

}  // namespace cps::cli
