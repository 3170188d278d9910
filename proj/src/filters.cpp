#include "jules/filters.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include <Eigen/Eigenvalues>
#include <boost/math/tools/roots.hpp>

#include "jules/error.hpp"

namespace jules {

namespace {

using cplx = std::complex<double>;

cplx eval_poly(std::span<const double> coeffs, cplx s) {
  cplx acc = 0.0;
  for (auto it = coeffs.rbegin(); it != coeffs.rend(); ++it) acc = acc * s + *it;
  return acc;
}

cplx eval_poly_derivative(std::span<const double> coeffs, cplx s) {
  cplx acc = 0.0;
  for (std::size_t k = coeffs.size() - 1; k >= 1; --k) acc = acc * s + static_cast<double>(k) * coeffs[k];
  return acc;
}

std::vector<cplx> polynomial_roots(std::span<const double> coeffs) {
  const int n = static_cast<int>(coeffs.size()) - 1;
  Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(n, n);
  for (int i = 1; i < n; ++i) companion(i, i - 1) = 1.0;
  for (int i = 0; i < n; ++i) companion(i, n - 1) = -coeffs[i] / coeffs[n];
  Eigen::EigenSolver<Eigen::MatrixXd> solver(companion, false);
  if (solver.info() != Eigen::Success) throw NumericalError("companion eigen-decomposition failed");

  std::vector<cplx> roots(n);
  for (int i = 0; i < n; ++i) {
    cplx z = solver.eigenvalues()[i];
    // Newton polish against the original polynomial.
    for (int it = 0; it < 50; ++it) {
      const cplx step = eval_poly(coeffs, z) / eval_poly_derivative(coeffs, z);
      z -= step;
      if (std::abs(step) <= 1e-16 * std::abs(z)) break;
    }
    roots[i] = z;
  }
  std::sort(roots.begin(), roots.end(), [](cplx a, cplx b) {
    return a.imag() != b.imag() ? a.imag() < b.imag() : a.real() < b.real();
  });
  return roots;
}

}  // namespace

AnalogFilter::AnalogFilter(int pole_count, double cutoff_hz, double sampling_rate_hz,
                           std::vector<cplx> poles, std::vector<cplx> residues)
    : pole_count_(pole_count), cutoff_(cutoff_hz), sampling_rate_(sampling_rate_hz),
      poles_(std::move(poles)), residues_(std::move(residues)) {
  require(poles_.size() == residues_.size() && !poles_.empty(), "poles and residues must match");
  for (cplx p : poles_) require(p.real() < 0.0, "filter pole in the right half plane");
  // (h * h)(tau) = sum_l w_l exp(p_l tau),  w_l = r_l sum_k r_k / -(p_k + p_l)
  acf_weights_.resize(poles_.size());
  for (std::size_t l = 0; l < poles_.size(); ++l) {
    cplx acc = 0.0;
    for (std::size_t k = 0; k < poles_.size(); ++k) acc += residues_[k] / -(poles_[k] + poles_[l]);
    acf_weights_[l] = residues_[l] * acc;
  }
}

double AnalogFilter::impulse(double t) const {
  if (t < 0.0) return 0.0;
  cplx acc = 0.0;
  for (std::size_t k = 0; k < poles_.size(); ++k) acc += residues_[k] * std::exp(poles_[k] * t);
  return acc.real();
}

double AnalogFilter::step(double t) const {
  if (t <= 0.0) return 0.0;
  cplx acc = 0.0;
  for (std::size_t k = 0; k < poles_.size(); ++k) {
    const cplx pt = poles_[k] * t;
    // (exp(pt) - 1) / p without cancellation for small t
    acc += residues_[k] * t * (std::abs(pt) < 1e-5 ? 1.0 + pt / 2.0 + pt * pt / 6.0 : (std::exp(pt) - 1.0) / pt);
  }
  return acc.real();
}

double AnalogFilter::autocorrelation(double lag) const {
  lag = std::abs(lag);
  cplx acc = 0.0;
  for (std::size_t l = 0; l < poles_.size(); ++l) acc += acf_weights_[l] * std::exp(poles_[l] * lag);
  return acc.real();
}

cplx AnalogFilter::response(double omega) const {
  cplx acc = 0.0;
  const cplx s(0.0, omega);
  for (std::size_t k = 0; k < poles_.size(); ++k) acc += residues_[k] / (s - poles_[k]);
  return acc;
}

std::vector<double> reverse_bessel_polynomial(int order) {
  require(order >= 1, "Bessel order must be positive");
  // c_k = (2n - k)! / (2^(n-k) k! (n-k)!), built by the ratio c_{k+1}/c_k.
  std::vector<double> c(order + 1);
  double v = 1.0;
  for (int i = order + 1; i <= 2 * order; ++i) v *= i;
  v /= std::pow(2.0, order);
  c[0] = v;
  for (int k = 0; k < order; ++k) {
    c[k + 1] = c[k] * 2.0 * (order - k) / (static_cast<double>(2 * order - k) * (k + 1));
  }
  return c;
}

AnalogFilter bessel_filter(int pole_count, double cutoff_hz, double sampling_rate_hz) {
  if (pole_count < 2 || pole_count > 10) throw InvalidArgument("unsupported Bessel pole count (2..10)");
  if (!(sampling_rate_hz > 0.0) || !(cutoff_hz > 0.0) || !(cutoff_hz < sampling_rate_hz / 2.0))
    throw InvalidArgument("cutoff must lie in (0, sampling_rate / 2)");

  const auto coeffs = reverse_bessel_polynomial(pole_count);
  const auto unit_roots = polynomial_roots(coeffs);

  // -3 dB frequency of theta(0) / theta(s); the magnitude is monotone.
  auto gain_gap = [&](double w) {
    return coeffs[0] / std::abs(eval_poly(coeffs, cplx(0.0, w))) - 1.0 / std::numbers::sqrt2;
  };
  double lo = 1.0, hi = 1.0;
  while (gain_gap(hi) > 0.0) hi *= 2.0;
  while (gain_gap(lo) < 0.0) lo /= 2.0;
  boost::uintmax_t iters = 200;
  const auto bracket = boost::math::tools::toms748_solve(
      gain_gap, lo, hi, boost::math::tools::eps_tolerance<double>(52), iters);
  const double w3 = 0.5 * (bracket.first + bracket.second);
  const double scale = 2.0 * std::numbers::pi * cutoff_hz / w3;

  std::vector<cplx> poles(unit_roots.size());
  std::transform(unit_roots.begin(), unit_roots.end(), poles.begin(), [&](cplx r) { return r * scale; });
  cplx gain = 1.0;
  for (cplx p : poles) gain *= -p;
  std::vector<cplx> residues(poles.size());
  for (std::size_t k = 0; k < poles.size(); ++k) {
    cplx denom = 1.0;
    for (std::size_t j = 0; j < poles.size(); ++j)
      if (j != k) denom *= poles[k] - poles[j];
    residues[k] = gain / denom;
  }
  return AnalogFilter(pole_count, cutoff_hz, sampling_rate_hz, std::move(poles), std::move(residues));
}

int truncation_lag(std::span<const double> acf, double threshold) {
  require(!acf.empty() && acf[0] > 0.0, "autocorrelation must start with a positive value");
  int m = static_cast<int>(acf.size());
  while (m > 0 && std::abs(acf[m - 1] / acf[0]) < threshold) --m;
  return m;
}

double TruncatedFilter::kernel(double t) const {
  if (t < 0.0 || t > length()) return 0.0;
  return analog_.impulse(t) / mass_;
}

double TruncatedFilter::step(double t) const {
  if (t <= 0.0) return 0.0;
  if (t >= length()) return 1.0;
  return analog_.step(t) / mass_;
}

std::string TruncatedFilter::id() const {
  char buf[160];
  std::snprintf(buf, sizeof buf, "bessel-p%d-fc%.17g-fs%.17g-th%.17g-m%d", analog_.pole_count(),
                analog_.cutoff(), analog_.sampling_rate(), threshold_, m_);
  return buf;
}

TruncatedFilter truncate(const AnalogFilter& filter, double threshold, int max_lag) {
  if (!(threshold > 0.0 && threshold < 1.0)) throw InvalidArgument("truncation threshold must lie in (0, 1)");
  require(max_lag >= 1, "max_lag must be positive");
  const double fs = filter.sampling_rate();
  // Scan twice the cap so that a tail rising above threshold past the cap is seen.
  std::vector<double> full(2 * max_lag + 2);
  for (std::size_t j = 0; j < full.size(); ++j) full[j] = filter.autocorrelation(j / fs);
  const int m = truncation_lag(full, threshold);
  if (m > max_lag) throw InvalidArgument("truncation lag exceeds the configured cap; raise the threshold");
  if (m < 1) throw InvalidArgument("truncation lag collapsed to zero");

  std::vector<double> acf(full.begin(), full.begin() + m + 1);
  const double acf0 = acf[0];
  for (double& a : acf) a /= acf0;
  const double mass = filter.step(m / fs);
  return TruncatedFilter(filter, threshold, m, mass, std::move(acf), acf0);
}

}  // namespace jules
