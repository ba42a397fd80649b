#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "cps/fock.hpp"

namespace cps {

inline constexpr int kDatasetVersion = 1;
/// Generator recorded in dataset files; see stream_engine().
inline constexpr const char* kRngName = "mt19937_64/splitmix64-streams/box-muller";

/// CDF resolution of the general-state sampler.
inline constexpr int kCdfPoints = 4096;
inline constexpr double kCdfSpanSigmas = 8.0;

/// Phase-tagged quadrature readings in field-strength units.
struct HomodyneDataset {
  std::vector<double> phases;               // LO phases in [0, pi), increasing
  std::vector<std::vector<double>> events;  // events[k] taken at phases[k]
  double eta = 1.0;
  double f_abs = kDefaultFieldScale;
  std::uint64_t seed = 0;
  std::string rng = kRngName;
  std::string state_tag;

  /// s = 1 - 1/eta.
  double s() const { return 1.0 - 1.0 / eta; }
  std::size_t total_events() const;
  /// Throws InvalidState / EfficiencyTooLow on a broken invariant.
  void validate() const;
};

struct Histogram {
  std::vector<double> bin_edges;
  std::vector<std::uint64_t> counts;
  double phase = 0.0;
};

/// Inverse-CDF sampler of the ideal quadrature density at one LO phase, in x
/// units: kCdfPoints trapezoid-integrated points over mean +/- kCdfSpanSigmas
/// standard deviations, linear between them. Throws SamplerNotConverged if the
/// tabulated density misses unit mass by more than 1e-6.
class QuadratureSampler {
public:
  QuadratureSampler(const DensityMatrix& rho, double varphi);

  /// u in (0, 1).
  double quantile(double u) const;
  /// Tabulated CDF, 0 / 1 outside the table.
  double cdf(double x) const;

private:
  std::vector<double> x_;
  std::vector<double> cdf_;
};

/// Throws EfficiencyTooLow unless 1/2 < eta <= 1.
void require_admissible_eta(double eta);

/// Mixes (seed, phase index, stream) into an engine seed. Stream 0 drives the
/// ideal quadrature draws, stream 1 the efficiency noise.
std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t phase_index, std::uint64_t stream);

/// Phases (k + 1/2) pi / n_phases. Events are drawn from the ideal quadrature
/// distribution (exactly Gaussian for states marked Gaussian, inverse CDF
/// otherwise) plus Gaussian noise of variance |s| |F|^2. Bit-reproducible for
/// a given seed regardless of the thread count.
/// Throws EfficiencyTooLow, SamplerNotConverged, InvalidState.
HomodyneDataset simulate(const DensityMatrix& rho, int n_phases, int events_per_phase, double eta,
                         std::uint64_t seed, std::string state_tag = {}, double f_abs = kDefaultFieldScale);

/// Uniform bins over [min, max] of the events at one phase.
/// Throws IndexOutOfRange, InvalidState (n_bins < 2).
Histogram histogram(const HomodyneDataset& dataset, int phase_index, int n_bins);

// --- text formats ---------------------------------------------------------------

void write_dataset(std::ostream& out, const HomodyneDataset& dataset);
HomodyneDataset read_dataset(std::istream& in);
void write_dataset(const std::filesystem::path& path, const HomodyneDataset& dataset);
HomodyneDataset read_dataset(const std::filesystem::path& path);
/// SHA-256 of the serialized dataset.
std::string dataset_hash(const HomodyneDataset& dataset);

/// CSV bin_left,bin_right,count.
void write_histogram_csv(std::ostream& out, const Histogram& histogram);

}  // namespace cps
