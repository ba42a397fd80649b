#include "cps/kernel.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numbers>
#include <string>

#include "cps/error.hpp"

namespace cps {

namespace {

constexpr char kCacheMagic[8] = {'C', 'P', 'S', 'K', 'T', 'B', 'L', '1'};
constexpr std::uint32_t kCacheVersion = 1;

void validate_grid(const std::vector<double>& x_grid) {
  if (x_grid.empty()) throw Error(ErrorKind::EmptyGrid, "x grid has no points");
  for (std::size_t i = 1; i < x_grid.size(); ++i)
    if (!(x_grid[i] > x_grid[i - 1])) throw Error(ErrorKind::InvalidState, "x grid must be strictly increasing");
}

template <class T>
void put(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::ifstream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  return v;
}

}  // namespace

std::vector<double> pattern_row(double x, int n_max, double s) {
  require_admissible_s(s);
  if (s == 0.0) return pattern_row_fast(x, n_max);
  return pattern_table_quadrature({x}, n_max, s);
}

int max_kernel_order(double s) { return s < 0.0 ? kMaxKernelOrderLossy : kMaxKernelOrderIdeal; }

std::vector<double> XGridSpec::points() const {
  if (!(spacing > 0.0) || !(x_max >= x_min))
    throw Error(ErrorKind::Config, "x grid needs spacing > 0 and x_max >= x_min");
  const auto count = static_cast<std::size_t>(std::llround((x_max - x_min) / spacing)) + 1;
  std::vector<double> xs(count);
  for (std::size_t i = 0; i < count; ++i) xs[i] = x_min + static_cast<double>(i) * spacing;
  return xs;
}

std::uint64_t hash_grid(std::span<const double> x_grid) {
  // FNV-1a over the raw doubles.
  std::uint64_t h = 1469598103934665603ULL;
  for (double x : x_grid) {
    unsigned char bytes[sizeof(double)];
    std::memcpy(bytes, &x, sizeof(double));
    for (unsigned char b : bytes) {
      h ^= b;
      h *= 1099511628211ULL;
    }
  }
  return h;
}

// --- KernelTable ----------------------------------------------------------------

KernelTable::KernelTable(int n_max, double s, std::vector<double> x_grid, std::vector<double> values,
                         Interpolation interpolation)
    : n_max_(n_max), s_(s), x_grid_(std::move(x_grid)), values_(std::move(values)), interpolation_(interpolation) {
  if (n_max_ < 0) throw Error(ErrorKind::InvalidState, "kernel table order must be >= 0");
  validate_grid(x_grid_);
  if (values_.size() != pair_count(n_max_) * x_grid_.size())
    throw Error(ErrorKind::InvalidState, "kernel table value count does not match n_max and grid");
  for (double v : values_) {
    if (!std::isfinite(v)) throw Error(ErrorKind::QuadratureNotConverged, "non-finite pattern function value");
    sup_abs_ = std::max(sup_abs_, std::abs(v));
  }
  if (x_grid_.size() >= 2) {
    spacing_ = (x_grid_.back() - x_grid_.front()) / static_cast<double>(x_grid_.size() - 1);
    uniform_ = true;
    for (std::size_t i = 1; i < x_grid_.size(); ++i)
      if (std::abs(x_grid_[i] - x_grid_[i - 1] - spacing_) > 1e-9 * spacing_) {
        uniform_ = false;
        break;
      }
  }
}

KernelTable KernelTable::with_interpolation(Interpolation interpolation) const {
  KernelTable copy = *this;
  copy.interpolation_ = interpolation;
  return copy;
}

std::span<const double> KernelTable::pair_values(int n, int m) const {
  if (n < 0 || m < 0 || n > n_max_ || m > n_max_)
    throw Error(ErrorKind::IndexOutOfRange, "pair (" + std::to_string(n) + "," + std::to_string(m) +
                                                ") outside table of order " + std::to_string(n_max_));
  const std::size_t nx = x_grid_.size();
  return std::span<const double>(values_).subspan(pair_index(n, m) * nx, nx);
}

std::uint64_t KernelTable::grid_hash() const { return hash_grid(x_grid_); }

KernelTable::Stencil KernelTable::stencil(double x) const {
  Stencil st{};
  const std::size_t nx = x_grid_.size();
  if (nx == 1) {
    st.index[0] = 0;
    st.weight[0] = 1.0;
    st.size = 1;
    return st;
  }
  std::size_t i;
  if (uniform_) {
    const double u = (x - x_grid_.front()) / spacing_;
    i = static_cast<std::size_t>(std::clamp(std::floor(u), 0.0, static_cast<double>(nx - 2)));
  } else {
    const auto it = std::upper_bound(x_grid_.begin(), x_grid_.end(), x);
    i = std::min<std::size_t>(static_cast<std::size_t>(std::max<std::ptrdiff_t>(it - x_grid_.begin() - 1, 0)), nx - 2);
  }
  if (interpolation_ == Interpolation::Linear || nx < 4) {
    const double t = (x - x_grid_[i]) / (x_grid_[i + 1] - x_grid_[i]);
    st.index[0] = i;
    st.index[1] = i + 1;
    st.weight[0] = 1.0 - t;
    st.weight[1] = t;
    st.size = 2;
    return st;
  }
  // Four-point Lagrange on i-1..i+2, shifted inward at the ends.
  const std::size_t j0 = std::min<std::size_t>(i == 0 ? 0 : i - 1, nx - 4);
  for (int a = 0; a < 4; ++a) {
    double w = 1.0;
    const double xa = x_grid_[j0 + a];
    for (int b = 0; b < 4; ++b)
      if (b != a) w *= (x - x_grid_[j0 + b]) / (xa - x_grid_[j0 + b]);
    st.index[a] = j0 + a;
    st.weight[a] = w;
  }
  st.size = 4;
  return st;
}

double KernelTable::value(int n, int m, double x) const {
  const auto row = pair_values(n, m);
  if (!covers(x)) return s_ == 0.0 ? pattern_function_fast(n, m, x) : pattern_function(n, m, x, s_);
  const Stencil st = stencil(x);
  double v = 0.0;
  for (int k = 0; k < st.size; ++k) v += st.weight[k] * row[st.index[k]];
  return v;
}

KernelTable build_kernel_table(int n_max, const std::vector<double>& x_grid, double s, Interpolation interpolation) {
  require_admissible_s(s);
  if (n_max < 0) throw Error(ErrorKind::InvalidState, "kernel table order must be >= 0");
  if (n_max > max_kernel_order(s))
    throw Error(ErrorKind::TruncationInsufficient, "kernel order " + std::to_string(n_max) +
                                                       " exceeds the supported maximum " +
                                                       std::to_string(max_kernel_order(s)) + " for s = " +
                                                       std::to_string(s));
  validate_grid(x_grid);

  const std::size_t nx = x_grid.size();
  const std::size_t pairs = pair_count(n_max);
  std::vector<double> values;
  if (s == 0.0) {
    values.assign(pairs * nx, 0.0);
    const auto n = static_cast<std::ptrdiff_t>(nx);
#pragma omp parallel for schedule(dynamic, 4)
    for (std::ptrdiff_t ix = 0; ix < n; ++ix) {
      const auto row = pattern_row_fast(x_grid[static_cast<std::size_t>(ix)], n_max);
      for (std::size_t p = 0; p < pairs; ++p) values[p * nx + static_cast<std::size_t>(ix)] = row[p];
    }
  } else {
    values = pattern_table_quadrature(x_grid, n_max, s);
  }
  return KernelTable(n_max, s, x_grid, std::move(values), interpolation);
}

// --- truncation -------------------------------------------------------------

double kernel_tail_bound(double epsilon, int order, double bound) {
  // (1 - q^2) [sum_{n,m >= 0} - sum_{n,m <= N}] q^{n+m}
  //   = (1 + q)/(1 - q) * (1 - (1 - q^{N+1})^2)
  const double one_minus_q = -std::expm1(-epsilon);
  const double q = 1.0 - one_minus_q;
  const double a = std::exp(-epsilon * (order + 1));
  return bound * (1.0 + q) / one_minus_q * a * (2.0 - a);
}

int kernel_truncation(double epsilon, double tol, double bound) {
  if (!(epsilon > 0.0)) throw Error(ErrorKind::EpsilonNonPositive, "epsilon must be > 0");
  if (!(tol > 0.0 && tol < 1.0)) throw Error(ErrorKind::InvalidState, "truncation tolerance must lie in (0, 1)");
  if (!(bound > 0.0)) return 0;
  // Start from the closed-form estimate a < tol (1-q) / (2 B (1+q)) and walk to
  // the exact minimum.
  const double one_minus_q = -std::expm1(-epsilon);
  const double target = tol * one_minus_q / (2.0 * bound * (2.0 - one_minus_q));
  int n = std::max(0, static_cast<int>(std::floor(-std::log(target) / epsilon)) - 2);
  while (n > 0 && kernel_tail_bound(epsilon, n - 1, bound) < tol) --n;
  while (kernel_tail_bound(epsilon, n, bound) >= tol) ++n;
  return n;
}

// --- kernel evaluation ------------------------------------------------------

void KernelQuery::validate() const {
  if (!(epsilon > 0.0)) throw Error(ErrorKind::EpsilonNonPositive, "epsilon must be > 0");
  if (!(varphi >= 0.0 && varphi < std::numbers::pi))
    throw Error(ErrorKind::InvalidState, "LO phase must lie in [0, pi)");
  require_admissible_s(s);
  if (!std::isfinite(phi) || !std::isfinite(field)) throw Error(ErrorKind::InvalidState, "non-finite kernel argument");
}

double sampling_kernel(const KernelQuery& query, const KernelTable& table, double tol, double field_scale) {
  query.validate();
  if (table.s() != query.s) throw Error(ErrorKind::InvalidState, "kernel table built for a different s");
  const int order = kernel_truncation(query.epsilon, tol, table.sup_abs());
  if (order > table.n_max())
    throw Error(ErrorKind::TruncationInsufficient, "kernel needs order " + std::to_string(order) +
                                                       ", table has " + std::to_string(table.n_max()));
  const double x = query.field / (std::numbers::sqrt2 * field_scale);
  const double sigma = query.phi + query.varphi;

  std::vector<double> direct;
  KernelTable::Stencil st{};
  const bool inside = table.covers(x);
  if (inside)
    st = table.stencil(x);
  else
    direct = pattern_row(x, order, table.s());

  const double q = std::exp(-query.epsilon);
  double sum = 0.0;
  for (int hi = 0; hi <= order; ++hi) {
    for (int lo = 0; lo <= hi; ++lo) {
      double f = 0.0;
      if (inside) {
        const auto row = table.pair_values(lo, hi);
        for (int k = 0; k < st.size; ++k) f += st.weight[k] * row[st.index[k]];
      } else {
        f = direct[pair_index(lo, hi)];
      }
      const int d = hi - lo;
      const double w = (d == 0 ? 1.0 : 2.0) * std::pow(q, lo + hi);
      sum += w * f * std::cos(d * sigma);
    }
  }
  return -std::expm1(-2.0 * query.epsilon) * sum;
}

SamplingKernel::SamplingKernel(const KernelTable& table, double epsilon, int order)
    : table_(&table), epsilon_(epsilon), order_(order), width_(static_cast<std::size_t>(order) + 1) {
  if (!(epsilon > 0.0)) throw Error(ErrorKind::EpsilonNonPositive, "epsilon must be > 0");
  if (order < 0 || order > table.n_max())
    throw Error(ErrorKind::TruncationInsufficient, "kernel needs order " + std::to_string(order) + ", table has " +
                                                       std::to_string(table.n_max()));
  const std::size_t nx = table.x_grid().size();
  const double q = std::exp(-epsilon);
  const double scale = -std::expm1(-2.0 * epsilon);
  grid_harmonics_.assign(nx * width_, 0.0);
  for (int hi = 0; hi <= order; ++hi) {
    for (int lo = 0; lo <= hi; ++lo) {
      const int d = hi - lo;
      const double w = scale * (d == 0 ? 1.0 : 2.0) * std::pow(q, lo + hi);
      const auto row = table.pair_values(lo, hi);
      for (std::size_t ix = 0; ix < nx; ++ix) grid_harmonics_[ix * width_ + static_cast<std::size_t>(d)] += w * row[ix];
    }
  }
}

void SamplingKernel::harmonics(double x, std::span<double> out) const {
  if (out.size() != width_) throw Error(ErrorKind::InvalidState, "harmonics buffer has the wrong size");
  if (table_->covers(x)) {
    const auto st = table_->stencil(x);
    std::fill(out.begin(), out.end(), 0.0);
    for (int k = 0; k < st.size; ++k) {
      const double* h = grid_harmonics_.data() + st.index[k] * width_;
      for (std::size_t d = 0; d < width_; ++d) out[d] += st.weight[k] * h[d];
    }
    return;
  }
  const auto row = pattern_row(x, order_, table_->s());
  const double q = std::exp(-epsilon_);
  const double scale = -std::expm1(-2.0 * epsilon_);
  std::fill(out.begin(), out.end(), 0.0);
  for (int hi = 0; hi <= order_; ++hi)
    for (int lo = 0; lo <= hi; ++lo) {
      const int d = hi - lo;
      out[static_cast<std::size_t>(d)] += scale * (d == 0 ? 1.0 : 2.0) * std::pow(q, lo + hi) * row[pair_index(lo, hi)];
    }
}

double SamplingKernel::operator()(double sum_phase, double x) const {
  std::vector<double> h(width_);
  harmonics(x, h);
  double k = 0.0;
  for (std::size_t d = 0; d < width_; ++d) k += h[d] * std::cos(static_cast<double>(d) * sum_phase);
  return k;
}

// --- cache ------------------------------------------------------------------

void write_kernel_table(const std::filesystem::path& path, const KernelTable& table) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot open " + path.string() + " for writing");
  out.write(kCacheMagic, sizeof(kCacheMagic));
  put(out, kCacheVersion);
  put(out, static_cast<std::int32_t>(table.n_max()));
  put(out, table.s());
  put(out, static_cast<std::int32_t>(table.interpolation()));
  put(out, table.grid_hash());
  put(out, static_cast<std::uint64_t>(table.x_grid().size()));
  out.write(reinterpret_cast<const char*>(table.x_grid().data()),
            static_cast<std::streamsize>(table.x_grid().size() * sizeof(double)));
  out.write(reinterpret_cast<const char*>(table.values().data()),
            static_cast<std::streamsize>(table.values().size() * sizeof(double)));
  if (!out) throw Error(ErrorKind::Io, "write failed for " + path.string());
}

KernelTable read_kernel_table(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kCacheMagic, sizeof(magic)) != 0)
    throw Error(ErrorKind::Io, path.string() + " is not a kernel table file");
  const auto version = get<std::uint32_t>(in);
  if (version != kCacheVersion) throw Error(ErrorKind::Io, "unsupported kernel table version " + std::to_string(version));
  const auto n_max = get<std::int32_t>(in);
  const auto s = get<double>(in);
  const auto interp = get<std::int32_t>(in);
  const auto hash = get<std::uint64_t>(in);
  const auto nx = get<std::uint64_t>(in);
  if (!in || n_max < 0 || n_max > kMaxKernelOrderIdeal || nx == 0 || nx > (1ULL << 24) || interp < 0 || interp > 1)
    throw Error(ErrorKind::Io, "corrupt kernel table header in " + path.string());
  std::vector<double> xs(nx);
  in.read(reinterpret_cast<char*>(xs.data()), static_cast<std::streamsize>(nx * sizeof(double)));
  std::vector<double> values(pair_count(n_max) * nx);
  in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(double)));
  if (!in) throw Error(ErrorKind::Io, "truncated kernel table " + path.string());
  if (hash_grid(xs) != hash) throw Error(ErrorKind::Io, "grid hash mismatch in " + path.string());
  return KernelTable(n_max, s, std::move(xs), std::move(values), static_cast<Interpolation>(interp));
}

std::filesystem::path kernel_cache_file(const std::filesystem::path& cache_dir, int n_max, double s,
                                        std::uint64_t grid_hash) {
  char name[96];
  std::snprintf(name, sizeof(name), "kernel_n%d_s%.17g_g%016llx.bin", n_max, s,
                static_cast<unsigned long long>(grid_hash));
  return cache_dir / name;
}

KernelTable load_or_build_kernel_table(const std::filesystem::path& cache_dir, int n_max,
                                       const std::vector<double>& x_grid, double s, Interpolation interpolation) {
  if (cache_dir.empty()) return build_kernel_table(n_max, x_grid, s, interpolation);
  const auto file = kernel_cache_file(cache_dir, n_max, s, hash_grid(x_grid));
  std::error_code ec;
  if (std::filesystem::exists(file, ec)) {
    auto table = read_kernel_table(file);
    if (table.n_max() == n_max && table.s() == s && table.x_grid().size() == x_grid.size())
      return table.with_interpolation(interpolation);
  }
  auto table = build_kernel_table(n_max, x_grid, s, interpolation);
  std::filesystem::create_directories(cache_dir, ec);
  if (ec) throw Error(ErrorKind::Io, "cannot create kernel cache directory " + cache_dir.string());
  // Write then rename so a concurrent reader never sees a partial file.
  auto tmp = file;
  tmp += ".tmp";
  write_kernel_table(tmp, table);
  std::filesystem::rename(tmp, file, ec);
  if (ec) throw Error(ErrorKind::Io, "cannot move kernel table into " + file.string());
  return table;
}

}  // namespace cps
