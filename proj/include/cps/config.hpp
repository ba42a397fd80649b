#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "cps/fock.hpp"
#include "cps/kernel.hpp"

namespace cps {

struct StateSpec {
  std::string kind = "squeezed_vacuum";  // vacuum | coherent | squeezed_vacuum | fock
  double mean_n = 1.0;                   // squeezed_vacuum
  double alpha_re = 1.0;  // coherent
  double alpha_im = 0.0;
  int photon_number = 0;  // fock
  int n_max = 0;          // 0: smallest truncation meeting the tail limit
  double rotation = 0.0;  // phase rotation applied after construction

  bool operator==(const StateSpec&) const = default;
};

struct KernelPair {
  double epsilon = 0.1;
  double eta = 1.0;

  bool operator==(const KernelPair&) const = default;
};

/// Everything a CLI run needs. The file form is flat "key = value" lines
/// grouped under [section] headers; '#' starts a comment.
struct RunConfig {
  StateSpec state;

  // [run]
  std::uint64_t seed = 1;
  std::string out;           // empty: the CLI default
  std::string kernel_cache;  // empty: $CPS_KERNEL_CACHE or no cache
  std::vector<double> epsilons{0.8, 0.3, 0.1};
  int phi_points = 128;

  // [simulate]
  int n_phases = 30;
  int events_per_phase = 10000;
  double eta = 1.0;
  int histogram_bins = 0;

  // [grid] x grid of the kernel tables
  XGridSpec x_grid;
  Interpolation interpolation = Interpolation::Cubic;

  // [kernel]
  std::vector<KernelPair> kernel_pairs{{0.1, 1.0}, {0.3, 1.0}, {0.8, 1.0}, {0.1, 0.8}};
  double field_min = -6.0;
  double field_max = 6.0;
  int field_points = 121;
  int sum_phase_points = 128;
  double tol = 1e-6;

  // [estimate]
  std::string dataset;    // empty: <out>/dataset.txt
  std::string reference = "analytic";  // analytic | none | path to a distribution CSV
  bool normalize = true;
  int density_n_max = 0;  // > 0 also estimates the density matrix

  // [compare]
  std::string compare_a;
  std::string compare_b;

  bool operator==(const RunConfig&) const = default;

  /// Throws Config naming the offending field.
  void validate() const;
};

/// Throws Config with the line number and key on malformed input.
RunConfig parse_config(std::istream& in);
RunConfig load_config(const std::filesystem::path& path);
/// Canonical form; parse_config(serialize_config(c)) == c.
std::string serialize_config(const RunConfig& config);

/// Builds the configured state; the tag records how it was made.
DensityMatrix build_state(const StateSpec& spec, std::string* tag = nullptr);

std::string to_string(Interpolation interpolation);

}  // namespace cps
