#include "cps/homodyne.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <limits>
#include <fstream>
#include <istream>
#include <numbers>
#include <ostream>
#include <random>
#include <sstream>

#include "cps/digest.hpp"
#include "cps/error.hpp"

namespace cps {

namespace {

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Written out instead of std::normal_distribution, whose algorithm is
// implementation-defined.
class NormalStream {
public:
  explicit NormalStream(std::uint64_t seed) : engine_(seed) {}

  double next() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform_open();
    const double u2 = uniform_open();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  // (0, 1), 53 bits.
  double uniform_open() { return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53; }

private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

void write_number(std::ostream& out, double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  out << buf;
}

}  // namespace

QuadratureSampler::QuadratureSampler(const DensityMatrix& rho, double varphi) {
  const auto moments = quadrature_moments(rho, varphi);
  const double sigma = std::sqrt(std::max(moments.variance, 1e-12));
  const double lo = moments.mean - kCdfSpanSigmas * sigma;
  const double hi = moments.mean + kCdfSpanSigmas * sigma;
  const QuadratureDistribution dist(rho, varphi, 0.0);
  x_.resize(kCdfPoints);
  cdf_.resize(kCdfPoints);
  const double h = (hi - lo) / (kCdfPoints - 1);
  double prev = 0.0;
  for (int i = 0; i < kCdfPoints; ++i) {
    x_[i] = lo + i * h;
    const double p = dist.ideal_pdf_x(x_[i]);
    cdf_[i] = i == 0 ? 0.0 : cdf_[i - 1] + 0.5 * h * (prev + p);
    prev = p;
  }
  const double total = cdf_.back();
  if (!(std::abs(total - 1.0) < 1e-6))
    throw Error(ErrorKind::SamplerNotConverged, "tabulated quadrature CDF integrates to " + std::to_string(total));
  for (double& c : cdf_) c /= total;
}

double QuadratureSampler::quantile(double u) const {
  const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
  const auto i = static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(it - cdf_.begin(), 1, kCdfPoints - 1));
  const double span = cdf_[i] - cdf_[i - 1];
  const double t = span > 0.0 ? (u - cdf_[i - 1]) / span : 0.5;
  return x_[i - 1] + t * (x_[i] - x_[i - 1]);
}

double QuadratureSampler::cdf(double x) const {
  if (x <= x_.front()) return 0.0;
  if (x >= x_.back()) return 1.0;
  const auto it = std::upper_bound(x_.begin(), x_.end(), x);
  const auto i = static_cast<std::size_t>(it - x_.begin());
  const double t = (x - x_[i - 1]) / (x_[i] - x_[i - 1]);
  return cdf_[i - 1] + t * (cdf_[i] - cdf_[i - 1]);
}

std::size_t HomodyneDataset::total_events() const {
  std::size_t n = 0;
  for (const auto& e : events) n += e.size();
  return n;
}

void require_admissible_eta(double eta) {
  if (!(eta > 0.5 && eta <= 1.0))
    throw Error(ErrorKind::EfficiencyTooLow, "detection efficiency must lie in (1/2, 1], got " + std::to_string(eta));
}

void HomodyneDataset::validate() const {
  require_admissible_eta(eta);
  if (phases.empty()) throw Error(ErrorKind::InvalidState, "dataset has no phases");
  if (events.size() != phases.size()) throw Error(ErrorKind::InvalidState, "one event list per phase required");
  for (std::size_t k = 0; k < phases.size(); ++k) {
    if (!(phases[k] >= 0.0 && phases[k] < std::numbers::pi))
      throw Error(ErrorKind::InvalidState, "LO phase outside [0, pi)");
    if (k > 0 && !(phases[k] > phases[k - 1])) throw Error(ErrorKind::InvalidState, "LO phases must increase");
    if (events[k].empty()) throw Error(ErrorKind::InvalidState, "phase " + std::to_string(k) + " has no events");
  }
  if (!(f_abs > 0.0)) throw Error(ErrorKind::InvalidState, "|F| must be positive");
}

std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t phase_index, std::uint64_t stream) {
  std::uint64_t state = seed;
  std::uint64_t h = splitmix64(state);
  state = h ^ (phase_index + 0x632be59bd9b4e019ULL);
  h = splitmix64(state);
  state = h ^ (stream + 0x8cb92ba72f3d8dd7ULL);
  return splitmix64(state);
}

HomodyneDataset simulate(const DensityMatrix& rho, int n_phases, int events_per_phase, double eta,
                         std::uint64_t seed, std::string state_tag, double f_abs) {
  require_admissible_eta(eta);
  if (n_phases < 1) throw Error(ErrorKind::InvalidState, "n_phases must be >= 1");
  if (events_per_phase < 1) throw Error(ErrorKind::InvalidState, "events_per_phase must be >= 1");
  if (!(f_abs > 0.0)) throw Error(ErrorKind::InvalidState, "|F| must be positive");

  HomodyneDataset ds;
  ds.eta = eta;
  ds.f_abs = f_abs;
  ds.seed = seed;
  ds.state_tag = std::move(state_tag);
  ds.phases.resize(static_cast<std::size_t>(n_phases));
  ds.events.resize(static_cast<std::size_t>(n_phases));
  for (int k = 0; k < n_phases; ++k) ds.phases[static_cast<std::size_t>(k)] = (k + 0.5) * std::numbers::pi / n_phases;

  const double s = ds.s();
  const double noise_sigma = std::sqrt(-s / 2.0);  // |s||F|^2 in field units
  const double to_field = std::numbers::sqrt2 * f_abs;
  const bool gaussian = rho.is_gaussian();

  // Exceptions must not escape an OpenMP region; collect and rethrow.
  std::vector<std::exception_ptr> failures(static_cast<std::size_t>(n_phases));
#pragma omp parallel for schedule(dynamic, 1)
  for (int k = 0; k < n_phases; ++k) {
    const auto ku = static_cast<std::size_t>(k);
    try {
      const double varphi = ds.phases[ku];
      NormalStream ideal(stream_seed(seed, ku, 0));
      NormalStream noise(stream_seed(seed, ku, 1));
      auto& out = ds.events[ku];
      out.resize(static_cast<std::size_t>(events_per_phase));
      if (gaussian) {
        const auto m = quadrature_moments(rho, varphi);
        const double sd = std::sqrt(std::max(m.variance, 0.0));
        for (auto& v : out) v = m.mean + sd * ideal.next();
      } else {
        const QuadratureSampler sampler(rho, varphi);
        for (auto& v : out) v = sampler.quantile(ideal.uniform_open());
      }
      if (s < 0.0)
        for (auto& v : out) v += noise_sigma * noise.next();
      for (auto& v : out) v *= to_field;
    } catch (...) {
      failures[ku] = std::current_exception();
    }
  }
  for (const auto& f : failures)
    if (f) std::rethrow_exception(f);
  return ds;
}

Histogram histogram(const HomodyneDataset& dataset, int phase_index, int n_bins) {
  if (phase_index < 0 || static_cast<std::size_t>(phase_index) >= dataset.phases.size())
    throw Error(ErrorKind::IndexOutOfRange, "phase index " + std::to_string(phase_index) + " out of range");
  if (n_bins < 2) throw Error(ErrorKind::InvalidState, "histogram needs at least 2 bins");
  const auto& ev = dataset.events[static_cast<std::size_t>(phase_index)];
  if (ev.empty()) throw Error(ErrorKind::InvalidState, "phase has no events");
  const auto [mn, mx] = std::minmax_element(ev.begin(), ev.end());
  double lo = *mn;
  double hi = *mx;
  if (hi == lo) {
    lo -= 0.5;
    hi += 0.5;
  }
  Histogram h;
  h.phase = dataset.phases[static_cast<std::size_t>(phase_index)];
  h.bin_edges.resize(static_cast<std::size_t>(n_bins) + 1);
  for (int i = 0; i <= n_bins; ++i) h.bin_edges[static_cast<std::size_t>(i)] = lo + (hi - lo) * i / n_bins;
  h.bin_edges.back() = hi;
  h.counts.assign(static_cast<std::size_t>(n_bins), 0);
  const double width = (hi - lo) / n_bins;
  for (double v : ev) {
    auto b = static_cast<std::ptrdiff_t>(std::floor((v - lo) / width));
    b = std::clamp<std::ptrdiff_t>(b, 0, n_bins - 1);  // max lands in the last bin
    ++h.counts[static_cast<std::size_t>(b)];
  }
  return h;
}

// --- text formats ---------------------------------------------------------------

void write_dataset(std::ostream& out, const HomodyneDataset& ds) {
  ds.validate();
  out << "#version " << kDatasetVersion << '\n';
  out << "#eta ";
  write_number(out, ds.eta);
  out << "\n#f_abs ";
  write_number(out, ds.f_abs);
  out << "\n#seed " << ds.seed << '\n';
  out << "#rng " << ds.rng << '\n';
  out << "#state_tag " << ds.state_tag << '\n';
  out << "#phases " << ds.phases.size() << '\n';
  for (std::size_t k = 0; k < ds.phases.size(); ++k) {
    out << "#phase " << k << ' ';
    write_number(out, ds.phases[k]);
    out << ' ' << ds.events[k].size() << '\n';
  }
  for (std::size_t k = 0; k < ds.phases.size(); ++k)
    for (double v : ds.events[k]) {
      out << k << ',';
      write_number(out, v);
      out << '\n';
    }
}

HomodyneDataset read_dataset(std::istream& in) {
  HomodyneDataset ds;
  ds.rng.clear();
  std::string line;
  std::size_t n_phases = 0;
  bool have_version = false, have_eta = false, have_phases = false;
  std::vector<std::size_t> declared;
  std::size_t line_no = 0;
  const auto fail = [&](const std::string& why) {
    throw Error(ErrorKind::Io, "dataset line " + std::to_string(line_no) + ": " + why);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream hs(line.substr(1));
      std::string key;
      hs >> key;
      if (key == "version") {
        int v = 0;
        if (!(hs >> v) || v != kDatasetVersion) fail("unsupported version");
        have_version = true;
      } else if (key == "eta") {
        if (!(hs >> ds.eta)) fail("bad eta");
        have_eta = true;
      } else if (key == "f_abs") {
        if (!(hs >> ds.f_abs)) fail("bad f_abs");
      } else if (key == "seed") {
        if (!(hs >> ds.seed)) fail("bad seed");
      } else if (key == "rng") {
        std::getline(hs >> std::ws, ds.rng);
      } else if (key == "state_tag") {
        std::getline(hs >> std::ws, ds.state_tag);
      } else if (key == "phases") {
        if (!(hs >> n_phases) || n_phases == 0) fail("bad phase count");
        ds.phases.assign(n_phases, std::numeric_limits<double>::quiet_NaN());
        ds.events.assign(n_phases, {});
        declared.assign(n_phases, 0);
        have_phases = true;
      } else if (key == "phase") {
        std::size_t k = 0;
        double phi = 0.0;
        std::size_t count = 0;
        if (!have_phases || !(hs >> k >> phi >> count) || k >= n_phases) fail("bad phase line");
        ds.phases[k] = phi;
        declared[k] = count;
        ds.events[k].reserve(count);
      }
      continue;
    }
    if (!have_phases) fail("event row before #phases");
    const auto comma = line.find(',');
    if (comma == std::string::npos) fail("expected phase_index,F");
    char* end = nullptr;
    const unsigned long k = std::strtoul(line.c_str(), &end, 10);
    if (end != line.c_str() + comma || k >= n_phases) fail("bad phase index");
    const double v = std::strtod(line.c_str() + comma + 1, &end);
    if (end == line.c_str() + comma + 1) fail("bad field value");
    ds.events[k].push_back(v);
  }
  if (!have_version || !have_eta || !have_phases) throw Error(ErrorKind::Io, "dataset header incomplete");
  for (std::size_t k = 0; k < n_phases; ++k)
    if (declared[k] != ds.events[k].size())
      throw Error(ErrorKind::Io, "phase " + std::to_string(k) + " event count does not match its header");
  try {
    ds.validate();
  } catch (const Error& e) {
    throw Error(ErrorKind::Io, std::string("invalid dataset: ") + e.what());
  }
  return ds;
}

void write_dataset(const std::filesystem::path& path, const HomodyneDataset& dataset) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot open " + path.string() + " for writing");
  write_dataset(out, dataset);
  if (!out) throw Error(ErrorKind::Io, "write failed for " + path.string());
}

HomodyneDataset read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  return read_dataset(in);
}

std::string dataset_hash(const HomodyneDataset& dataset) {
  std::ostringstream os;
  write_dataset(os, dataset);
  return sha256_hex(os.str());
}

void write_histogram_csv(std::ostream& out, const Histogram& h) {
  out << "bin_left,bin_right,count\n";
  for (std::size_t i = 0; i < h.counts.size(); ++i) {
    write_number(out, h.bin_edges[i]);
    out << ',';
    write_number(out, h.bin_edges[i + 1]);
    out << ',' << h.counts[i] << '\n';
  }
}

}  // namespace cps
