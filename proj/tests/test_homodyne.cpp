#include <gtest/gtest.h>

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>

#include "cps/error.hpp"
#include "cps/fock.hpp"
#include "cps/homodyne.hpp"

using namespace cps;

namespace {

constexpr double kPi = std::numbers::pi;

template <class F>
void expect_error(ErrorKind kind, F&& f) {
  try {
    f();
    ADD_FAILURE() << "expected " << to_string(kind);
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), kind) << e.what();
  }
}

struct Moments {
  double mean = 0.0;
  double variance = 0.0;
  double variance_stderr = 0.0;
};

Moments moments(const std::vector<double>& v) {
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
  // Large-sample standard error of the sample variance from the fourth moment.
  const double stderr_var = std::sqrt((m4 / n - var * var) / n);
  return {mean, var, stderr_var};
}

double squeezed_variance(double r, double phi) {
  const double c = std::cos(phi), s = std::sin(phi);
  return (std::exp(2.0 * r) * c * c + std::exp(-2.0 * r) * s * s) / 2.0;
}

const double kR = std::asinh(1.0);

}  // namespace

TEST(Simulate, PhasesAndShape) {
  const auto d = simulate(pure_to_density(coherent_state(0.0, 2)), 30, 100, 1.0, 1);
  ASSERT_EQ(d.phases.size(), 30u);
  for (int k = 0; k < 30; ++k) EXPECT_DOUBLE_EQ(d.phases[k], (k + 0.5) * kPi / 30);
  EXPECT_EQ(d.total_events(), 3000u);
  EXPECT_EQ(d.rng, kRngName);
}

TEST(Simulate, VacuumVariance) {
  const auto d = simulate(pure_to_density(coherent_state(0.0, 2)), 10, 20000, 1.0, 11);
  for (const auto& ev : d.events) {
    const auto m = moments(ev);
    EXPECT_NEAR(m.variance, 0.5, 4.0 * m.variance_stderr);
    EXPECT_NEAR(m.mean, 0.0, 4.0 * std::sqrt(0.5 / ev.size()));
  }
}

TEST(Simulate, SqueezedVarianceTracksPhase) {
  const auto d = simulate(pure_to_density(squeezed_vacuum(1.0)), 30, 10000, 1.0, 2024);
  for (std::size_t k = 0; k < d.phases.size(); ++k) {
    const auto m = moments(d.events[k]);
    EXPECT_NEAR(m.variance, squeezed_variance(kR, d.phases[k]), 4.0 * m.variance_stderr) << "phase " << k;
  }
}

TEST(Simulate, WidthRatio) {
  // Phases 0 and pi/2 are hit exactly by a single-phase run at pi/2 and by the
  // anti-squeezed quadrature of the state rotated by pi/2.
  const auto rho = pure_to_density(squeezed_vacuum(1.0));
  const auto narrow = simulate(rho, 1, 50000, 1.0, 5);
  const auto wide = simulate(rho.phase_rotated(kPi / 2), 1, 50000, 1.0, 6);
  const auto a = moments(wide.events[0]), b = moments(narrow.events[0]);
  const double ratio = std::sqrt(a.variance / b.variance);
  const double rel = 0.5 * std::hypot(a.variance_stderr / a.variance, b.variance_stderr / b.variance);
  EXPECT_NEAR(ratio, std::exp(2.0 * kR), 4.0 * rel * ratio);
}

TEST(Simulate, ChiSquaredGoodnessOfFit) {
  const auto d = simulate(pure_to_density(squeezed_vacuum(1.0)), 30, 10000, 1.0, 99);
  const int bins = 40;
  double worst = 1.0;
  for (std::size_t k = 0; k < d.phases.size(); ++k) {
    const boost::math::normal_distribution<double> exact(0.0, std::sqrt(squeezed_variance(kR, d.phases[k])));
    std::vector<int> counts(bins);
    for (double x : d.events[k]) counts[std::min(bins - 1, static_cast<int>(boost::math::cdf(exact, x) * bins))]++;
    const double expected = static_cast<double>(d.events[k].size()) / bins;
    double chi2 = 0.0;
    for (int c : counts) chi2 += (c - expected) * (c - expected) / expected;
    const double p = boost::math::cdf(boost::math::complement(boost::math::chi_squared_distribution<double>(bins - 1), chi2));
    worst = std::min(worst, p);
  }
  // Bonferroni over 30 phases at an overall 0.3% level.
  EXPECT_GT(worst, 1e-4);
}

TEST(Simulate, EfficiencyNoiseVariance) {
  // Matched seeds share the ideal draws, so lossy minus ideal is the noise alone.
  const auto rho = pure_to_density(squeezed_vacuum(1.0));
  const auto ideal = simulate(rho, 30, 10000, 1.0, 77);
  const auto lossy = simulate(rho, 30, 10000, 0.8, 77);
  const double s = 1.0 - 1.0 / 0.8;
  const double excess = -s * 0.5;  // |s||F|^2
  EXPECT_NEAR(excess, 0.125, 1e-15);
  for (std::size_t k = 0; k < ideal.phases.size(); ++k) {
    std::vector<double> diff(ideal.events[k].size());
    for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = lossy.events[k][i] - ideal.events[k][i];
    const auto noise = moments(diff);
    EXPECT_NEAR(noise.variance, excess, 4.0 * noise.variance_stderr);
    const auto l = moments(lossy.events[k]);
    EXPECT_NEAR(l.variance - squeezed_variance(kR, ideal.phases[k]), excess, 4.0 * l.variance_stderr);
  }
}

TEST(Simulate, IndependentOfThreadCount) {
  const auto rho = pure_to_density(squeezed_vacuum(1.0));
  const int saved = omp_get_max_threads();
  omp_set_num_threads(1);
  const auto a = simulate(rho, 8, 2000, 0.8, 3);
  omp_set_num_threads(4);
  const auto b = simulate(rho, 8, 2000, 0.8, 3);
  omp_set_num_threads(saved);
  EXPECT_EQ(a.events, b.events);
  EXPECT_EQ(dataset_hash(a), dataset_hash(b));
  EXPECT_NE(dataset_hash(a), dataset_hash(simulate(rho, 8, 2000, 0.8, 4)));
}

TEST(Simulate, FieldScale) {
  const auto rho = pure_to_density(coherent_state(0.0, 2));
  const auto x = simulate(rho, 2, 500, 1.0, 8);
  const auto f = simulate(rho, 2, 500, 1.0, 8, "", 2.0);
  for (std::size_t i = 0; i < 500; ++i) EXPECT_NEAR(f.events[1][i], x.events[1][i] * std::sqrt(2.0) * 2.0, 1e-12);
}

TEST(Simulate, NumberStateUsesInverseCdf) {
  const auto rho = pure_to_density(fock_number_state(1, 3));
  ASSERT_FALSE(rho.is_gaussian());
  const auto d = simulate(rho, 4, 20000, 1.0, 12);
  for (const auto& ev : d.events) {
    const auto m = moments(ev);
    EXPECT_NEAR(m.variance, 1.5, 4.0 * m.variance_stderr);
    EXPECT_NEAR(m.mean, 0.0, 4.0 * std::sqrt(1.5 / ev.size()));
  }
}

TEST(Simulate, Errors) {
  const auto rho = pure_to_density(coherent_state(0.0, 2));
  expect_error(ErrorKind::EfficiencyTooLow, [&] { simulate(rho, 2, 10, 0.5, 1); });
  expect_error(ErrorKind::EfficiencyTooLow, [&] { simulate(rho, 2, 10, 1.2, 1); });
  expect_error(ErrorKind::InvalidState, [&] { simulate(rho, 0, 10, 1.0, 1); });
}

TEST(QuadratureSampler, CdfMatchesExactGaussian) {
  const auto rho = pure_to_density(squeezed_vacuum(1.0));
  for (double varphi : {0.0, 0.7, kPi / 2}) {
    const QuadratureSampler sampler(rho, varphi);
    const boost::math::normal_distribution<double> exact(0.0, std::sqrt(squeezed_variance(kR, varphi)));
    double ks = 0.0;
    for (double x = -8.0; x <= 8.0; x += 0.0137) ks = std::max(ks, std::abs(sampler.cdf(x) - boost::math::cdf(exact, x)));
    EXPECT_LT(ks, 1e-4) << "varphi=" << varphi;
    for (double u : {1e-6, 0.01, 0.3, 0.5, 0.9, 0.999}) EXPECT_NEAR(sampler.cdf(sampler.quantile(u)), u, 1e-9);
  }
}

TEST(Histogram, CountsEveryEvent) {
  const auto d = simulate(pure_to_density(squeezed_vacuum(1.0)), 3, 1000, 1.0, 1);
  const auto h = histogram(d, 1, 25);
  ASSERT_EQ(h.counts.size(), 25u);
  ASSERT_EQ(h.bin_edges.size(), 26u);
  std::uint64_t total = 0;
  for (auto c : h.counts) total += c;
  EXPECT_EQ(total, 1000u);
  EXPECT_EQ(h.phase, d.phases[1]);
  expect_error(ErrorKind::IndexOutOfRange, [&] { histogram(d, 3, 10); });
  expect_error(ErrorKind::InvalidState, [&] { histogram(d, 0, 1); });
}

TEST(Histogram, KnownLayout) {
  HomodyneDataset d;
  d.phases = {0.5};
  d.events = {{0.0, 0.1, 0.3, 0.35, 0.5, 0.55, 0.7, 0.75, 0.9, 1.0}};
  const auto h = histogram(d, 0, 5);
  EXPECT_EQ(h.counts, (std::vector<std::uint64_t>{2, 2, 2, 2, 2}));
  EXPECT_DOUBLE_EQ(h.bin_edges.front(), 0.0);
  EXPECT_DOUBLE_EQ(h.bin_edges.back(), 1.0);
}

TEST(Histogram, VacuumChiSquared) {
  const auto d = simulate(pure_to_density(coherent_state(0.0, 2)), 1, 100000, 1.0, 31);
  const auto h = histogram(d, 0, 61);
  const boost::math::normal_distribution<double> exact(0.0, std::sqrt(0.5));
  double chi2 = 0.0;
  int dof = 0;
  for (std::size_t b = 0; b < h.counts.size(); ++b) {
    const double expected =
        1e5 * (boost::math::cdf(exact, h.bin_edges[b + 1]) - boost::math::cdf(exact, h.bin_edges[b]));
    if (expected < 5.0) continue;  // sparse tail bins
    chi2 += (h.counts[b] - expected) * (h.counts[b] - expected) / expected;
    ++dof;
  }
  const double p =
      boost::math::cdf(boost::math::complement(boost::math::chi_squared_distribution<double>(dof - 1), chi2));
  EXPECT_GT(p, 1e-3);
}

TEST(DatasetFormat, RoundTripIsExact) {
  const auto d = simulate(pure_to_density(squeezed_vacuum(1.0)), 5, 300, 0.8, 42, "squeezed_vacuum(1)");
  std::stringstream ss;
  write_dataset(ss, d);
  const auto back = read_dataset(ss);
  EXPECT_EQ(back.phases, d.phases);
  EXPECT_EQ(back.events, d.events);
  EXPECT_EQ(back.eta, d.eta);
  EXPECT_EQ(back.f_abs, d.f_abs);
  EXPECT_EQ(back.seed, d.seed);
  EXPECT_EQ(back.rng, d.rng);
  EXPECT_EQ(back.state_tag, d.state_tag);
  EXPECT_EQ(dataset_hash(back), dataset_hash(d));
}

TEST(DatasetFormat, RejectsBrokenInput) {
  const auto d = simulate(pure_to_density(coherent_state(0.0, 2)), 2, 5, 1.0, 1);
  std::stringstream ss;
  write_dataset(ss, d);
  std::string text = ss.str();
  std::istringstream truncated(text.substr(0, text.size() - 30));
  expect_error(ErrorKind::Io, [&] { read_dataset(truncated); });
  std::istringstream garbage("hello\n");
  expect_error(ErrorKind::Io, [&] { read_dataset(garbage); });
  expect_error(ErrorKind::Io, [&] { read_dataset(std::filesystem::path("/nonexistent/dataset.txt")); });
}
