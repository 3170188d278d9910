#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>
#include <vector>

#include "jules/error.hpp"
#include "jules/filters.hpp"
#include "jules/noise_sim.hpp"

#include "oracles.hpp"

using namespace jules;
using namespace jules::oracle;

namespace {

double sample_autocov(const std::vector<double>& x, std::size_t lag) {
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
  double s = 0.0;
  for (std::size_t i = 0; i + lag < x.size(); ++i) s += (x[i] - mean) * (x[i + lag] - mean);
  return s / static_cast<double>(x.size());
}

}  // namespace

TEST_CASE("MA(1) covariance inverts to its invertible coefficients") {
  const auto theta = ma_coefficients(std::vector<double>{1.25, 0.5});
  REQUIRE(theta.size() == 2);
  CHECK(std::abs(theta[0] - 1.0) < 1e-8);
  CHECK(std::abs(theta[1] - 0.5) < 1e-8);
  CHECK(ma_coefficients(std::vector<double>{4.0}) == std::vector<double>{2.0});
}

TEST_CASE("MA coefficients reproduce the filter autocorrelation") {
  const auto acf = gA().acf();
  const auto theta = ma_coefficients(acf);
  const auto back = autocov_of_coefficients(theta);
  for (std::size_t j = 0; j < acf.size(); ++j) CHECK(std::abs(back[j] - acf[j]) < 1e-8);
}

TEST_CASE("invalid covariances are rejected") {
  CHECK_THROWS_AS(ma_coefficients(std::vector<double>{1.0, 0.8}), NumericalError);
  CHECK_THROWS_AS(ma_coefficients(std::vector<double>{0.0, 0.0}), NumericalError);
}

TEST_CASE("simulated noise has the filter's autocovariance") {
  const double sigma0 = 1.4;
  const std::size_t n = 1'000'000;
  const auto theta = ma_coefficients(gA().acf());
  const auto eps = ma_noise(theta, n, sigma0, 2024);
  const auto acf = gA().acf();
  auto a = [&](long long j) {
    j = std::abs(j);
    return j < static_cast<long long>(acf.size()) ? sigma0 * sigma0 * acf[static_cast<std::size_t>(j)] : 0.0;
  };
  const long long m = gA().m();
  for (long long j = 0; j <= m + 3; ++j) {
    // Bartlett variance of the sample autocovariance of a linear process.
    double var = 0.0;
    for (long long k = -2 * m - 2; k <= 2 * m + 2; ++k) var += a(k) * a(k) + a(k + j) * a(k - j);
    const double se = std::sqrt(var / static_cast<double>(n));
    CAPTURE(j);
    CHECK(std::abs(sample_autocov(eps, static_cast<std::size_t>(j)) - a(j)) < 3.0 * se);
  }
}

TEST_CASE("noiseless simulation is the exact convolution") {
  const StepSignal s({0.01, 0.0103}, {40, 20, 40}, 0.05);
  NoiseModel noise;
  noise.sigma0 = 0.0;
  const Trace t = simulate_trace(s, gA(), noise, 500, 7);
  const auto y = convolve_samples(s, gA(), 500);
  for (std::size_t i = 0; i < y.size(); ++i) CHECK(t[i] == y[i]);
}

TEST_CASE("simulation is reproducible per seed") {
  const StepSignal s = StepSignal::constant(0.0, 1.0);
  for (auto kind : {NoiseKind::filtered_white, NoiseKind::violet_mix, NoiseKind::pink_mix, NoiseKind::heterogeneous}) {
    NoiseModel noise;
    noise.kind = kind;
    const Trace a = simulate_trace(s, gA(), noise, 2000, 11);
    const Trace b = simulate_trace(s, gA(), noise, 2000, 11);
    const Trace c = simulate_trace(s, gA(), noise, 2000, 12);
    CAPTURE(to_string(kind));
    CHECK(std::equal(a.values().begin(), a.values().end(), b.values().begin()));
    CHECK_FALSE(std::equal(a.values().begin(), a.values().end(), c.values().begin()));
  }
}

TEST_CASE("every noise kind keeps the marginal standard deviation") {
  const StepSignal s = StepSignal::constant(0.0, 20.0);
  for (auto kind : {NoiseKind::filtered_white, NoiseKind::violet_mix, NoiseKind::pink_mix, NoiseKind::heterogeneous}) {
    NoiseModel noise;
    noise.kind = kind;
    const Trace t = simulate_trace(s, gA(), noise, 200000, 3);
    std::vector<double> v(t.values().begin(), t.values().end());
    CAPTURE(to_string(kind));
    // Pink noise has long memory, so its sample variance converges slowly.
    const double tol = kind == NoiseKind::pink_mix ? 0.1 : 0.02;
    CHECK(std::abs(std::sqrt(sample_autocov(v, 0)) / 1.4 - 1.0) < tol);
  }
}

TEST_CASE("heterogeneous noise is louder inside events") {
  const StepSignal s({0.5}, {40, 20}, 1.0);
  NoiseModel noise;
  noise.kind = NoiseKind::heterogeneous;
  const Trace t = simulate_trace(s, gA(), noise, 10000, 5);
  std::vector<double> before, after;
  const auto y = convolve_samples(s, gA(), 10000);
  for (std::size_t i = 0; i < 4900; ++i) before.push_back(t[i] - y[i]);
  for (std::size_t i = 5100; i < 10000; ++i) after.push_back(t[i] - y[i]);
  CHECK(std::abs(std::sqrt(sample_autocov(before, 0)) - 1.4) < 0.1);
  CHECK(std::abs(std::sqrt(sample_autocov(after, 0)) - 2.8) < 0.2);
}

TEST_CASE("noise parameters are validated") {
  NoiseModel noise;
  noise.sigma0 = -1.0;
  CHECK_THROWS_AS(noise.validate(), InvalidArgument);
  noise = NoiseModel{};
  noise.mix_fraction = 1.5;
  CHECK_THROWS_AS(noise.validate(), InvalidArgument);
  CHECK_THROWS_AS(parse_noise_kind("brown"), InvalidArgument);
  CHECK(parse_noise_kind("1/f") == NoiseKind::pink_mix);
}

TEST_CASE("a single-state chain stays constant") {
  HmmSpec spec;
  spec.levels = {7.0};
  spec.exit_rates = {1.0};
  spec.transition_probs = {{0.0}};
  const StepSignal s = simulate_hmm(spec, 10.0, 1);
  CHECK(s.change_count() == 0);
  CHECK(s.levels()[0] == 7.0);
}

TEST_CASE("flicker chain dwell means match the rates") {
  const StepSignal s = simulate_hmm(HmmSpec::flicker(3.0), 45000.0, 99);
  double open_sum = 0.0, closed_sum = 0.0;
  std::size_t open_n = 0, closed_n = 0, delta_n = 0;
  // The first and the last sojourn are censored.
  for (std::size_t k = 1; k + 1 < s.segment_count(); ++k) {
    const double d = s.segment_end(k) - s.segment_start(k);
    if (s.levels()[k] == 40.0) {
      open_sum += d;
      ++open_n;
    } else {
      closed_sum += d;
      ++closed_n;
      if (s.levels()[k] == 23.0) ++delta_n;
    }
  }
  REQUIRE(open_n > 100000);
  CHECK(std::abs(open_sum / open_n / 0.4 - 1.0) < 0.01);
  CHECK(std::abs(closed_sum / closed_n / (1.0 / 800.0) - 1.0) < 0.01);
  CHECK(std::abs(static_cast<double>(delta_n) / closed_n - 0.5) < 0.01);
}

TEST_CASE("malformed chains are rejected") {
  HmmSpec spec = HmmSpec::flicker(2.0);
  spec.transition_probs[0] = {0.0, 0.7, 0.7};
  CHECK_THROWS_AS(spec.validate(), InvalidArgument);
  spec = HmmSpec::flicker(2.0);
  spec.exit_rates[1] = 0.0;
  CHECK_THROWS_AS(simulate_hmm(spec, 1.0, 1), InvalidArgument);
}
