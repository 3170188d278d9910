#include "jules/noise_sim.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <mutex>
#include <numeric>

#include "jules/error.hpp"
#include "jules/random.hpp"

namespace jules {

std::string to_string(NoiseKind kind) {
  switch (kind) {
    case NoiseKind::filtered_white: return "white";
    case NoiseKind::violet_mix: return "violet";
    case NoiseKind::pink_mix: return "pink";
    case NoiseKind::heterogeneous: return "heterogeneous";
  }
  return "unknown";
}

NoiseKind parse_noise_kind(const std::string& name) {
  if (name == "white" || name == "filtered_white") return NoiseKind::filtered_white;
  if (name == "violet" || name == "violet_mix" || name == "f2") return NoiseKind::violet_mix;
  if (name == "pink" || name == "pink_mix" || name == "1/f") return NoiseKind::pink_mix;
  if (name == "heterogeneous") return NoiseKind::heterogeneous;
  throw InvalidArgument("unknown noise kind '" + name + "'");
}

void NoiseModel::validate() const {
  require(std::isfinite(sigma0) && sigma0 >= 0.0, "sigma0 must be non-negative");
  require(mix_fraction >= 0.0 && mix_fraction <= 1.0, "mix_fraction must lie in [0, 1]");
  require(oversampling >= 1, "oversampling must be at least 1");
  require(std::isfinite(event_sigma) && event_sigma >= 0.0, "event_sigma must be non-negative");
}

std::vector<double> ma_coefficients(std::span<const double> acf) {
  require(!acf.empty(), "empty autocovariance");
  if (!(acf[0] > 0.0)) throw NumericalError("autocovariance is not positive-semidefinite (a_0 <= 0)");
  const std::size_t q = acf.size() - 1;
  if (q == 0) return {std::sqrt(acf[0])};

  // Innovations recursion for an MA(q) covariance: only theta_{n,1..q} are
  // non-zero, so rows and innovation variances are kept in rings of q + 1.
  const std::size_t ring = q + 1;
  std::vector<std::vector<double>> theta(ring, std::vector<double>(q + 1, 0.0));
  std::vector<double> v(ring, 0.0);
  v[0] = acf[0];
  auto a = [&](std::size_t h) { return h <= q ? acf[h] : 0.0; };

  const std::size_t min_iter = 4 * (q + 1);
  const std::size_t max_iter = 1'000'000;
  std::vector<double> prev(q + 1, 0.0);
  for (std::size_t n = 1; n <= max_iter; ++n) {
    auto& row = theta[n % ring];
    std::fill(row.begin(), row.end(), 0.0);
    const std::size_t k0 = n > q ? n - q : 0;
    for (std::size_t k = k0; k < n; ++k) {
      double s = a(n - k);
      const auto& row_k = theta[k % ring];
      for (std::size_t j = k0; j < k; ++j) {
        if (k - j <= q) s -= row_k[k - j] * row[n - j] * v[j % ring];
      }
      row[n - k] = s / v[k % ring];
    }
    double vn = acf[0];
    for (std::size_t j = k0; j < n; ++j) vn -= row[n - j] * row[n - j] * v[j % ring];
    if (!(vn > 0.0) || !std::isfinite(vn))
      throw NumericalError("autocovariance is not positive-semidefinite (innovation variance <= 0)");
    const double v_prev = v[(n - 1) % ring];
    v[n % ring] = vn;

    double coeff_change = 0.0;
    for (std::size_t j = 1; j <= q; ++j) coeff_change = std::max(coeff_change, std::abs(row[j] - prev[j]));
    std::copy(row.begin(), row.end(), prev.begin());
    if (n >= min_iter && std::abs(vn - v_prev) < 1e-12 * vn && coeff_change < 1e-12) {
      std::vector<double> out(q + 1);
      const double scale = std::sqrt(vn);
      out[0] = scale;
      for (std::size_t j = 1; j <= q; ++j) out[j] = row[j] * scale;
      return out;
    }
  }
  throw NumericalError("innovations recursion did not converge");
}

namespace {

const std::vector<double>& cached_ma(const TruncatedFilter& filter) {
  static std::mutex mutex;
  static std::map<std::string, std::vector<double>> cache;
  std::lock_guard lock(mutex);
  auto [it, inserted] = cache.try_emplace(filter.id());
  if (inserted) it->second = ma_coefficients(filter.acf());
  return it->second;
}

void add_ma_noise(std::span<double> out, std::span<const double> theta, double scale, Rng& rng) {
  std::normal_distribution<double> normal;
  const std::size_t q = theta.size() - 1;
  std::vector<double> z(out.size() + q);
  for (double& x : z) x = normal(rng);
  for (std::size_t i = 0; i < out.size(); ++i) {
    double e = 0.0;
    // eps_i = sum_k theta_k Z_{i-k}; z is offset by q.
    for (std::size_t k = 0; k <= q; ++k) e += theta[k] * z[i + q - k];
    out[i] += scale * e;
  }
}

void add_heterogeneous_noise(std::span<double> out, const StepSignal& signal, const TruncatedFilter& filter,
                             const NoiseModel& noise, Rng& rng) {
  const std::size_t os = static_cast<std::size_t>(noise.oversampling);
  const double fine_rate = filter.sampling_rate() * static_cast<double>(os);
  const std::size_t taps = static_cast<std::size_t>(filter.m()) * os + 1;
  std::vector<double> w(taps);
  for (std::size_t k = 0; k < taps; ++k) w[k] = filter.kernel(k / fine_rate);
  const double norm = std::sqrt(std::inner_product(w.begin(), w.end(), w.begin(), 0.0));
  for (double& x : w) x /= norm;

  const double baseline = noise.baseline_level.value_or(signal.levels()[0]);
  // Fine-grid indices I = first .. n*os, time I / fine_rate.
  const long long last = static_cast<long long>(out.size() * os);
  const long long first = static_cast<long long>(os) - static_cast<long long>(taps) + 1;
  std::vector<double> z(static_cast<std::size_t>(last - first + 1));
  std::normal_distribution<double> normal;
  for (std::size_t idx = 0; idx < z.size(); ++idx) {
    const double t = static_cast<double>(first + static_cast<long long>(idx)) / fine_rate;
    const double sd = signal.value_at(t) == baseline ? noise.sigma0 : noise.event_sigma;
    z[idx] = sd * normal(rng);
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    const std::size_t centre = static_cast<std::size_t>(static_cast<long long>((i + 1) * os) - first);
    double e = 0.0;
    for (std::size_t k = 0; k < taps; ++k) e += w[k] * z[centre - k];
    out[i] += e;
  }
}

}  // namespace

std::vector<double> ma_noise(std::span<const double> theta, std::size_t n, double sigma0, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> out(n, 0.0);
  add_ma_noise(out, theta, sigma0, rng);
  return out;
}

Trace simulate_trace(const StepSignal& signal, const TruncatedFilter& filter, const NoiseModel& noise, std::size_t n,
                     std::uint64_t seed) {
  noise.validate();
  require(n >= 1, "trace length must be positive");
  const double fs = filter.sampling_rate();
  if (signal.end_time() < static_cast<double>(n) / fs * (1.0 - 1e-12))
    throw InvalidArgument("signal is shorter than the requested number of samples");

  std::vector<double> y = convolve_samples(signal, filter, n);
  if (noise.sigma0 == 0.0 && (noise.kind != NoiseKind::heterogeneous || noise.event_sigma == 0.0))
    return Trace(std::move(y), fs);

  Rng rng(seed);
  const auto& theta = cached_ma(filter);
  switch (noise.kind) {
    case NoiseKind::filtered_white:
      add_ma_noise(y, theta, noise.sigma0, rng);
      break;
    case NoiseKind::violet_mix: {
      add_ma_noise(y, theta, noise.sigma0 * std::sqrt(1.0 - noise.mix_fraction), rng);
      // MA(1) with coefficients 0.8, -0.6 has unit variance.
      const std::array<double, 2> violet{0.8, -0.6};
      add_ma_noise(y, violet, noise.sigma0 * std::sqrt(noise.mix_fraction), rng);
      break;
    }
    case NoiseKind::pink_mix: {
      add_ma_noise(y, theta, noise.sigma0 * std::sqrt(1.0 - noise.mix_fraction), rng);
      PinkNoise pink;
      std::normal_distribution<double> normal;
      pink.reset(rng, normal);
      const double scale = noise.sigma0 * std::sqrt(noise.mix_fraction);
      for (double& v : y) v += scale * pink.next(rng, normal);
      break;
    }
    case NoiseKind::heterogeneous:
      add_heterogeneous_noise(y, signal, filter, noise, rng);
      break;
  }
  return Trace(std::move(y), fs);
}

void HmmSpec::validate() const {
  const std::size_t k = levels.size();
  require(k >= 1, "HMM needs at least one state");
  require(exit_rates.size() == k && transition_probs.size() == k, "HMM dimensions disagree");
  require(initial_state < k, "initial state out of range");
  for (std::size_t s = 0; s < k; ++s) {
    require(std::isfinite(levels[s]), "HMM levels must be finite");
    require(exit_rates[s] > 0.0 && std::isfinite(exit_rates[s]), "HMM exit rates must be positive");
    require(transition_probs[s].size() == k, "transition matrix must be square");
    if (k == 1) continue;
    require(transition_probs[s][s] == 0.0, "transition matrix must have a zero diagonal");
    double sum = 0.0;
    for (double p : transition_probs[s]) {
      require(p >= 0.0, "transition probabilities must be non-negative");
      sum += p;
    }
    require(std::abs(sum - 1.0) < 1e-9, "transition matrix rows must sum to one");
  }
}

HmmSpec HmmSpec::flicker(double delta, double open_level, double closed_level, double open_rate, double closed_rate) {
  HmmSpec spec;
  spec.levels = {open_level, closed_level, closed_level + delta};
  spec.exit_rates = {open_rate, closed_rate, closed_rate};
  spec.transition_probs = {{0.0, 0.5, 0.5}, {1.0, 0.0, 0.0}, {1.0, 0.0, 0.0}};
  return spec;
}

StepSignal simulate_hmm(const HmmSpec& spec, double duration, std::uint64_t seed) {
  spec.validate();
  require(duration > 0.0 && std::isfinite(duration), "duration must be positive");
  Rng rng(seed);
  std::size_t state = spec.initial_state;
  std::vector<double> times;
  std::vector<double> levels{spec.levels[state]};
  if (spec.levels.size() == 1) return StepSignal::constant(levels[0], duration);

  std::vector<std::discrete_distribution<std::size_t>> jumps;
  for (const auto& row : spec.transition_probs) jumps.emplace_back(row.begin(), row.end());
  double t = 0.0;
  while (true) {
    t += std::exponential_distribution<double>(spec.exit_rates[state])(rng);
    if (t >= duration) break;
    state = jumps[state](rng);
    if (spec.levels[state] == levels.back()) continue;
    times.push_back(t);
    levels.push_back(spec.levels[state]);
  }
  return StepSignal(std::move(times), std::move(levels), duration);
}

}  // namespace jules
