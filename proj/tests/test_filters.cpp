#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include <Eigen/Eigenvalues>

#include "jules/error.hpp"
#include "jules/filters.hpp"

#include "oracles.hpp"

using namespace jules;
using namespace jules::oracle;

TEST_CASE("reverse Bessel polynomials match the tabulated ones") {
  CHECK(reverse_bessel_polynomial(2) == std::vector<double>{3, 3, 1});
  CHECK(reverse_bessel_polynomial(3) == std::vector<double>{15, 15, 6, 1});
  CHECK(reverse_bessel_polynomial(4) == std::vector<double>{105, 105, 45, 10, 1});
}

TEST_CASE("every supported filter is stable, real and -3 dB at the cutoff") {
  for (int poles = 2; poles <= 10; ++poles) {
    const AnalogFilter f = bessel_filter(poles, 1000.0, 10000.0);
    CAPTURE(poles);
    for (auto p : f.poles()) CHECK(p.real() < 0.0);
    CHECK(std::abs(f.response(0.0)) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::abs(std::abs(f.response(2.0 * std::numbers::pi * 1000.0)) - 1.0 / std::sqrt(2.0)) < 1e-6);
    for (double t : {0.0, 1e-5, 1e-4, 7e-4, 3e-3}) {
      // Conjugate pairs cancel; measure the leftover against the size of the terms.
      std::complex<double> h = 0.0;
      double scale = 0.0;
      for (std::size_t k = 0; k < f.poles().size(); ++k) {
        const auto term = f.residues()[k] * std::exp(f.poles()[k] * t);
        h += term;
        scale += std::abs(term);
      }
      CHECK(std::abs(h.imag()) < 1e-12 * scale);
    }
  }
}

TEST_CASE("invalid filter requests are rejected") {
  CHECK_THROWS_AS(bessel_filter(1, 1000, 10000), InvalidArgument);
  CHECK_THROWS_AS(bessel_filter(11, 1000, 10000), InvalidArgument);
  CHECK_THROWS_AS(bessel_filter(4, 0, 10000), InvalidArgument);
  CHECK_THROWS_AS(bessel_filter(4, 5000, 10000), InvalidArgument);
  const AnalogFilter f = bessel_filter(4, 1000, 10000);
  CHECK_THROWS_AS(truncate(f, 0.0), InvalidArgument);
  CHECK_THROWS_AS(truncate(f, 1.0), InvalidArgument);
  CHECK_THROWS_AS(truncate(f, 1e-12, 20), InvalidArgument);
}

TEST_CASE("the gA filter truncates at m = 11") {
  const TruncatedFilter f = truncate(bessel_filter(4, 1000, 10000), 1e-3);
  CHECK(f.m() == 11);
  CHECK(f.acf().size() == 12);
}

TEST_CASE("step response agrees with RK4 integration of the state-space model") {
  for (int poles : {2, 4, 6, 8}) {
    CAPTURE(poles);
    const AnalogFilter f = bessel_filter(poles, 1000.0, 10000.0);
    const StateSpaceBessel ode(poles, 1000.0);
    const auto ref = ode.step(1e-4, 12, 2000);
    for (int k = 0; k < 12; ++k) CHECK(std::abs(f.step(k * 1e-4) - ref[static_cast<std::size_t>(k)]) < 1e-8);
  }
}

TEST_CASE("impulse response agrees with the integrated state derivative") {
  for (int poles : {2, 4, 7, 10}) {
    CAPTURE(poles);
    const AnalogFilter f = bessel_filter(poles, 1000.0, 10000.0);
    const auto ref = StateSpaceBessel(poles, 1000.0).impulse(1e-4, 12, 2000);
    const double peak = *std::max_element(ref.begin(), ref.end());
    for (int k = 0; k < 12; ++k) CHECK(std::abs(f.impulse(k * 1e-4) - ref[static_cast<std::size_t>(k)]) < 1e-8 * peak);
  }
}

TEST_CASE("impulse response is the derivative of the step response") {
  const AnalogFilter f = bessel_filter(4, 1000.0, 10000.0);
  const double h = 1e-7;
  for (double t : {5e-5, 2e-4, 4e-4, 9e-4})
    CHECK(std::abs(f.impulse(t) - (f.step(t + h) - f.step(t - h)) / (2 * h)) < 1e-5 * 3000.0);
}

TEST_CASE("autocorrelation agrees with adaptive quadrature") {
  const AnalogFilter f = bessel_filter(4, 1000.0, 10000.0);
  const TruncatedFilter tf = truncate(f, 1e-3);
  auto corr = [&](double lag) { return acf_by_quadrature(f, lag); };
  const double c0 = corr(0.0);
  CHECK(std::abs(f.autocorrelation(0.0) - c0) < 1e-8 * c0);
  for (int j = 0; j <= tf.m(); ++j) {
    CAPTURE(j);
    CHECK(std::abs(tf.acf()[static_cast<std::size_t>(j)] - corr(j * 1e-4) / c0) < 1e-8);
  }
}

TEST_CASE("truncated kernel has unit mass and a monotone start") {
  const TruncatedFilter f = FilterSpec{}.build();
  CHECK(f.step(0.0) == 0.0);
  CHECK(std::abs(f.step(f.length()) - 1.0) < 1e-10);
  CHECK(f.step(2 * f.length()) == 1.0);
  CHECK(f.step(-1.0) == 0.0);
  // Midpoint integral of the kernel.
  double mass = 0.0;
  const int cells = 200000;
  for (int i = 0; i < cells; ++i) mass += f.kernel((i + 0.5) * f.length() / cells) * f.length() / cells;
  CHECK(std::abs(mass - 1.0) < 1e-8);
  double prev = 0.0;
  for (int i = 1; i <= 1000; ++i) {
    const double t = i * f.length() / 1000;
    if (f.kernel(t) >= 0.0) CHECK(f.step(t) >= prev - 1e-15);
    prev = f.step(t);
  }
}

TEST_CASE("truncation lag is monotone in the threshold and idempotent") {
  const AnalogFilter f = bessel_filter(4, 1000.0, 10000.0);
  int prev = 0;
  for (double th : {0.999, 0.5, 0.1, 1e-2, 1e-3, 1e-4, 1e-5}) {
    const TruncatedFilter tf = truncate(f, th);
    CHECK(tf.m() >= prev);
    prev = tf.m();
    CHECK(truncate(tf.analog(), th).m() == tf.m());
  }
  // 0.999: the first lag whose normalized acf drops below 0.999 is lag 1.
  CHECK(truncate(f, 0.999).m() == 1);
}

TEST_CASE("truncation_lag uses the tail rule") {
  const std::vector<double> acf{1.0, 0.5, 1e-4, 0.01, 1e-5, 0.0};
  CHECK(truncation_lag(acf, 1e-3) == 4);
  CHECK(truncation_lag(acf, 0.02) == 2);
  CHECK(truncation_lag(std::vector<double>{1.0, 0.9}, 1e-3) == 2);
}

TEST_CASE("truncated acf is a positive semidefinite Toeplitz sequence") {
  for (int poles : {2, 4, 6}) {
    const TruncatedFilter f = truncate(bessel_filter(poles, 1000.0, 10000.0), 1e-3);
    const auto acf = f.acf();
    const auto n = static_cast<Eigen::Index>(acf.size());
    Eigen::MatrixXd t(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j) t(i, j) = acf[static_cast<std::size_t>(std::abs(i - j))];
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(t);
    CAPTURE(poles);
    CHECK(es.eigenvalues().minCoeff() >= -1e-10);
  }
}

TEST_CASE("filter identifiers distinguish configurations") {
  const TruncatedFilter a = FilterSpec{}.build();
  const TruncatedFilter b = FilterSpec{4, 900.0, 10000.0, 1e-3}.build();
  CHECK(a.id() == FilterSpec{}.build().id());
  CHECK(a.id() != b.id());
}
