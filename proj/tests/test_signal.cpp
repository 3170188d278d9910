#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "jules/error.hpp"
#include "jules/filters.hpp"
#include "jules/signal.hpp"

using namespace jules;

namespace {

const TruncatedFilter& gA() {
  static const TruncatedFilter f = FilterSpec{}.build();
  return f;
}

}  // namespace

TEST_CASE("step signals validate their invariants") {
  CHECK_NOTHROW(StepSignal({0.1, 0.2}, {1, 2, 3}, 1.0));
  CHECK_THROWS_AS(StepSignal({0.2, 0.1}, {1, 2, 3}, 1.0), InvalidArgument);
  CHECK_THROWS_AS(StepSignal({0.1, 0.1}, {1, 2, 3}, 1.0), InvalidArgument);
  CHECK_THROWS_AS(StepSignal({0.1}, {1, 2, 3}, 1.0), InvalidArgument);
  CHECK_THROWS_AS(StepSignal({0.1}, {1, 2}, 0.1), InvalidArgument);
  CHECK_THROWS_AS(StepSignal({}, {}, 1.0), InvalidArgument);

  const StepSignal s = StepSignal::merged({0.1, 0.2, 0.3}, {1, 2, 2, 5}, 1.0);
  CHECK(s.change_count() == 2);
  CHECK(s.levels()[1] == 2);
  CHECK(s.change_times()[1] == 0.3);
  CHECK(s.value_at(-5.0) == 1);
  CHECK(s.value_at(0.1) == 2);
  CHECK(s.value_at(0.2999) == 2);
  CHECK(s.value_at(0.3) == 5);
}

TEST_CASE("a constant signal convolves to itself") {
  const auto y = convolve_samples(StepSignal::constant(17.5, 1.0), gA(), 1000);
  for (double v : y) CHECK(v == 17.5);
}

TEST_CASE("convolution saturates m samples after the last change") {
  const StepSignal s({0.02, 0.0203}, {40, 20, 40}, 0.1);
  const auto y = convolve_samples(s, gA(), 1000);
  for (std::size_t i = 1; i <= 1000; ++i) {
    const double t = i / 10000.0;
    if (t > 0.0203 + gA().length() + 1e-9) CHECK(y[i - 1] == 40.0);
    if (t <= 0.02) CHECK(y[i - 1] == 40.0);
  }
  // The peak dips, but never below the closed level.
  double lowest = 40.0;
  for (double v : y) lowest = std::min(lowest, v);
  CHECK(lowest < 40.0);
  CHECK(lowest > 20.0);
}

TEST_CASE("convolution agrees with a midpoint Riemann sum") {
  const TruncatedFilter& f = gA();
  const double fs = f.sampling_rate();
  const StepSignal s({2000 / fs, 2005 / fs}, {40, 20, 40}, 0.4);
  const int per_sample = 10000;
  const std::size_t cells = static_cast<std::size_t>(f.m() * per_sample);
  const double d = 1.0 / (fs * per_sample);
  std::vector<double> kernel(cells);
  for (std::size_t k = 0; k < cells; ++k) kernel[k] = f.kernel((k + 0.5) * d);

  std::vector<double> times;
  for (int i = 1995; i <= 2020; ++i) times.push_back(i / fs);
  const auto y = convolve(s, f, times);
  // Change times fall on cell boundaries, so the midpoint rule stays second order.
  for (std::size_t i = 0; i < times.size(); ++i) {
    double ref = 0.0;
    for (std::size_t k = 0; k < cells; ++k) ref += kernel[k] * s.value_at(times[i] - (k + 0.5) * d) * d;
    CAPTURE(times[i]);
    CHECK(std::abs(y[i] - ref) < 1e-6);
  }
}

TEST_CASE("convolution is affine in the levels and shift equivariant") {
  const double fs = 10000.0;
  const StepSignal a({100.4 / fs, 103.1 / fs, 180 / fs}, {3, -1, 4, 2}, 0.05);
  const StepSignal b({100.4 / fs, 103.1 / fs, 180 / fs}, {2 * 3 + 5, 2 * -1 + 5, 2 * 4 + 5, 2 * 2 + 5}, 0.05);
  const auto ya = convolve_samples(a, gA(), 400);
  const auto yb = convolve_samples(b, gA(), 400);
  for (std::size_t i = 0; i < ya.size(); ++i) CHECK(std::abs(yb[i] - (2 * ya[i] + 5)) < 1e-12);

  const StepSignal shifted({110.4 / fs, 113.1 / fs, 190 / fs}, {3, -1, 4, 2}, 0.05);
  const auto ys = convolve_samples(shifted, gA(), 400);
  for (std::size_t i = 10; i < ya.size(); ++i) CHECK(std::abs(ys[i] - ya[i - 10]) < 1e-12);
}

TEST_CASE("convolution rejects times outside the signal domain") {
  const StepSignal s = StepSignal::constant(1.0, 0.01);
  CHECK_THROWS_AS(convolve(s, gA(), std::vector<double>{-1e-3}), InvalidArgument);
  CHECK_THROWS_AS(convolve(s, gA(), std::vector<double>{0.02}), InvalidArgument);
  CHECK_THROWS_AS(convolve_samples(s, gA(), 101), InvalidArgument);
}

TEST_CASE("traces validate their input") {
  CHECK_THROWS_AS(Trace({1.0, 2.0}, 0.0), InvalidArgument);
  CHECK_THROWS_AS(Trace({1.0, NAN}, 10.0), InvalidArgument);
  const Trace t({1.0, 2.0, 3.0}, 10.0);
  CHECK(t.duration() == doctest::Approx(0.3));
}
