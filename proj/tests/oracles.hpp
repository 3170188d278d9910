#pragma once

// Independent reference computations shared by the unit tests and the
// acceptance binary. None of them reuse the closed forms they check.

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <random>
#include <utility>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "jules/detect.hpp"
#include "jules/filters.hpp"
#include "jules/noise_sim.hpp"
#include "jules/signal.hpp"

namespace jules::oracle {

// Independent model of the Bessel filter: H(s) = c_0 / theta(s / w0) with w0
// found by bisection on |H(i 2 pi f_c)| = 1/sqrt(2), then integrated in
// controllable canonical form with classic RK4.
struct StateSpaceBessel {
  std::vector<double> a;  // monic denominator coefficients a_0..a_{n-1} in s
  double gain;            // numerator constant (= a_0 for unit DC gain)

  StateSpaceBessel(int n, double cutoff_hz) {
    const auto c = reverse_bessel_polynomial(n);
    auto mag = [&](double w0) {
      std::complex<double> s(0.0, 2.0 * std::numbers::pi * cutoff_hz / w0), p = 0.0;
      for (int k = n; k >= 0; --k) p = p * s + c[static_cast<std::size_t>(k)];
      return std::abs(c[0] / p);
    };
    double lo = 1.0, hi = 1e6;
    for (int it = 0; it < 200; ++it) {
      const double mid = std::sqrt(lo * hi);
      (mag(mid) < 1.0 / std::sqrt(2.0) ? lo : hi) = mid;
    }
    const double w0 = std::sqrt(lo * hi);
    // theta(s / w0) / c_n * w0^n is monic in s.
    a.resize(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k)
      a[static_cast<std::size_t>(k)] = c[static_cast<std::size_t>(k)] / c[static_cast<std::size_t>(n)] *
                                       std::pow(w0, n - k);
    gain = a[0];
  }

  // x' = A x + b u with output y = gain * x_0.
  std::vector<double> deriv(const std::vector<double>& x, double u) const {
    const std::size_t n = a.size();
    std::vector<double> dx(n);
    for (std::size_t i = 0; i + 1 < n; ++i) dx[i] = x[i + 1];
    double last = u;
    for (std::size_t i = 0; i < n; ++i) last -= a[i] * x[i];
    dx[n - 1] = last;
    return dx;
  }

  // Step response (component 0) or impulse response (component 1) sampled at
  // times k * dt_out, k = 0..count-1. The impulse response is the derivative
  // of the step response, gain * x_1.
  std::vector<double> integrate(double dt_out, int count, int substeps, std::size_t component) const {
    std::vector<double> x(a.size(), 0.0), out{0.0};
    const double h = dt_out / substeps;
    auto axpy = [](const std::vector<double>& x, const std::vector<double>& d, double s) {
      std::vector<double> r(x);
      for (std::size_t i = 0; i < r.size(); ++i) r[i] += s * d[i];
      return r;
    };
    for (int k = 1; k < count; ++k) {
      for (int j = 0; j < substeps; ++j) {
        const auto k1 = deriv(x, 1.0);
        const auto k2 = deriv(axpy(x, k1, h / 2), 1.0);
        const auto k3 = deriv(axpy(x, k2, h / 2), 1.0);
        const auto k4 = deriv(axpy(x, k3, h), 1.0);
        for (std::size_t i = 0; i < x.size(); ++i) x[i] += h / 6 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]);
      }
      out.push_back(gain * x[component]);
    }
    return out;
  }

  std::vector<double> step(double dt_out, int count, int substeps) const {
    return integrate(dt_out, count, substeps, 0);
  }
  std::vector<double> impulse(double dt_out, int count, int substeps) const {
    return integrate(dt_out, count, substeps, 1);
  }
};

// Unnormalized (h * h)(lag) by Gauss-Kronrod quadrature of the impulse response.
inline double acf_by_quadrature(const AnalogFilter& f, double lag) {
  auto integrand = [&](double s) { return f.impulse(s) * f.impulse(s + lag); };
  double err = 0.0, v = 0.0;
  // The kernel decays like exp(-2700 t) for the gA filter; 0.05 s is far into the tail.
  for (double a = 0.0; a < 0.05; a += 5e-4)
    v += boost::math::quadrature::gauss_kronrod<double, 61>::integrate(integrand, a, a + 5e-4, 5, 1e-13, &err);
  return v;
}

inline std::vector<double> autocov_of_coefficients(const std::vector<double>& theta) {
  std::vector<double> out(theta.size(), 0.0);
  for (std::size_t j = 0; j < theta.size(); ++j)
    for (std::size_t k = 0; k + j < theta.size(); ++k) out[j] += theta[k] * theta[k + j];
  return out;
}

// Minimizer of a quadratic in one variable by Newton steps on central differences.
template <class F>
double newton_minimize(F f, double x, double h) {
  for (int it = 0; it < 3; ++it) {
    const double fp = f(x + h), f0 = f(x), fm = f(x - h);
    x -= (fp - fm) / (2 * h) / ((fp - 2 * f0 + fm) / (h * h));
  }
  return x;
}

inline const TruncatedFilter& gA() {
  static const TruncatedFilter f = FilterSpec{}.build();
  return f;
}

// Noise plus a random step signal with up to `max_jumps` grid-aligned changes.
inline Trace random_trace(std::size_t n, int max_jumps, double sigma, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> jumps(0, max_jumps);
  std::uniform_int_distribution<std::size_t> where(2, n);
  std::uniform_real_distribution<double> height(-8.0, 8.0);
  std::vector<std::size_t> at;
  for (int j = jumps(rng); j > 0; --j) at.push_back(where(rng));
  std::sort(at.begin(), at.end());
  at.erase(std::unique(at.begin(), at.end()), at.end());
  std::vector<double> times, levels{0.0};
  for (std::size_t s : at) {
    times.push_back(static_cast<double>(s) / 10000.0);
    levels.push_back(levels.back() + height(rng));
  }
  const StepSignal sig(times, levels, static_cast<double>(n) / 10000.0 + 1e-9);
  auto y = convolve_samples(sig, gA(), n);
  const auto eps = ma_noise(ma_coefficients(gA().acf()), n, sigma, rng());
  for (std::size_t i = 0; i < n; ++i) y[i] += eps[i];
  return Trace(std::move(y), 10000.0);
}

// Feasible band of a constant level on 0-based samples [a, b], straight from
// the definition: every dyadic interval inside the segment.
inline std::pair<double, double> naive_band(const std::vector<double>& y, std::size_t a, std::size_t b, double sigma,
                                     double q) {
  const std::size_t n = y.size();
  std::vector<double> prefix(n + 1, 0.0);
  for (std::size_t k = 0; k < n; ++k) prefix[k + 1] = prefix[k] + y[k];
  double lo = -std::numeric_limits<double>::infinity(), hi = std::numeric_limits<double>::infinity();
  for (std::size_t len = 1; len <= n; len *= 2) {
    const double bound = sigma * partial_sum_sd(len, gA().acf()) * (q + penalty(len, n));
    for (std::size_t i = a; i + len <= b + 1; ++i) {
      const double s = prefix[i + len] - prefix[i];
      lo = std::max(lo, (s - bound) / static_cast<double>(len));
      hi = std::min(hi, (s + bound) / static_cast<double>(len));
    }
  }
  return {lo, hi};
}

struct Brute {
  std::size_t changes = 0;
  double rss = std::numeric_limits<double>::infinity();
};

// Exhaustive search over segmentations with at most three changes.
inline Brute brute_force(const std::vector<double>& y, double sigma, double q) {
  const std::size_t n = y.size();
  std::vector<std::vector<std::pair<double, double>>> seg_cost(n, std::vector<std::pair<double, double>>(n));
  const double inf = std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = a; b < n; ++b) {
      const auto [lo, hi] = naive_band(y, a, b, sigma, q);
      if (lo > hi) {
        seg_cost[a][b] = {inf, 0.0};
        continue;
      }
      double mean = 0.0;
      for (std::size_t k = a; k <= b; ++k) mean += y[k];
      mean /= static_cast<double>(b - a + 1);
      const double c = std::clamp(mean, lo, hi);
      double rss = 0.0;
      for (std::size_t k = a; k <= b; ++k) rss += (y[k] - c) * (y[k] - c);
      seg_cost[a][b] = {rss, c};
    }
  }
  Brute best;
  auto consider = [&](double rss) { best.rss = std::min(best.rss, rss); };
  for (std::size_t k = 0; k <= 3 && best.rss == inf; ++k) {
    best.changes = k;
    if (k == 0) consider(seg_cost[0][n - 1].first);
    for (std::size_t s1 = 1; k >= 1 && s1 < n; ++s1) {
      if (k == 1) {
        consider(seg_cost[0][s1 - 1].first + seg_cost[s1][n - 1].first);
        continue;
      }
      for (std::size_t s2 = s1 + 1; s2 < n; ++s2) {
        const double head = seg_cost[0][s1 - 1].first + seg_cost[s1][s2 - 1].first;
        if (k == 2) {
          consider(head + seg_cost[s2][n - 1].first);
          continue;
        }
        for (std::size_t s3 = s2 + 1; s3 < n; ++s3)
          consider(head + seg_cost[s2][s3 - 1].first + seg_cost[s3][n - 1].first);
      }
    }
  }
  return best;
}

inline double rss_of(const Trace& t, const StepSignal& s) {
  double rss = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double r = t[i] - s.value_at(static_cast<double>(i + 1) / t.sampling_rate());
    rss += r * r;
  }
  return rss;
}

}  // namespace jules::oracle
