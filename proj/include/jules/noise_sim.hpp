#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "jules/filters.hpp"
#include "jules/signal.hpp"

namespace jules {

enum class NoiseKind { filtered_white, violet_mix, pink_mix, heterogeneous };

std::string to_string(NoiseKind kind);
NoiseKind parse_noise_kind(const std::string& name);

struct NoiseModel {
  NoiseKind kind = NoiseKind::filtered_white;
  /// Marginal standard deviation of a single observation's error.
  double sigma0 = 1.4;
  /// Variance share of the violet / pink component.
  double mix_fraction = 0.5;
  /// Standard deviation inside events (heterogeneous only).
  double event_sigma = 2.8;
  /// Oversampling factor of the heterogeneous generator.
  int oversampling = 100;
  /// Level regarded as baseline for heterogeneous noise; defaults to the first level.
  std::optional<double> baseline_level;

  void validate() const;
};

/// Moving-average coefficients theta_0..theta_m with sum_k theta_k theta_{k+j} = acf_j,
/// obtained from the innovations recursion run to convergence.
/// Throws NumericalError if the sequence is not a valid covariance.
std::vector<double> ma_coefficients(std::span<const double> acf);

/// Voss-McCartney pink noise with `rows` octave generators plus a white row,
/// unit marginal variance.
class PinkNoise {
 public:
  explicit PinkNoise(int rows = 16) : rows_(rows), values_(static_cast<std::size_t>(rows), 0.0) {}

  template <class Rng, class Normal>
  void reset(Rng& rng, Normal& normal) {
    counter_ = 0;
    sum_ = 0.0;
    for (double& v : values_) {
      v = normal(rng);
      sum_ += v;
    }
  }

  template <class Rng, class Normal>
  double next(Rng& rng, Normal& normal) {
    ++counter_;
    // Row k is refreshed every 2^k samples: pick it from the trailing zeros.
    const int row = std::countr_zero(counter_);
    if (row < rows_) {
      sum_ -= values_[row];
      values_[row] = normal(rng);
      sum_ += values_[row];
    }
    return (sum_ + normal(rng)) / std::sqrt(rows_ + 1.0);
  }

 private:
  int rows_;
  std::vector<double> values_;
  std::uint64_t counter_ = 0;
  double sum_ = 0.0;
};

/// Observations Y_i = (F_m * f)(i / f_s) + eps_i for i = 1..n. Deterministic in `seed`.
Trace simulate_trace(const StepSignal& signal, const TruncatedFilter& filter, const NoiseModel& noise, std::size_t n,
                     std::uint64_t seed);

/// Only the noise part of simulate_trace for filtered white noise; theta from ma_coefficients.
std::vector<double> ma_noise(std::span<const double> theta, std::size_t n, double sigma0, std::uint64_t seed);

/// Continuous-time hidden Markov gating model.
struct HmmSpec {
  std::vector<double> levels;
  std::vector<double> exit_rates;
  /// Row-stochastic jump matrix with zero diagonal.
  std::vector<std::vector<double>> transition_probs;
  std::size_t initial_state = 0;

  void validate() const;

  /// One open state at `open_level` (exit rate `open_rate`) and two closed states at
  /// `closed_level` and `closed_level + delta`, both entered with probability 1/2 and
  /// left at `closed_rate`.
  static HmmSpec flicker(double delta, double open_level = 40.0, double closed_level = 20.0, double open_rate = 2.5,
                         double closed_rate = 800.0);
};

/// Markov jump path on (0, duration]; equal-level neighbouring sojourns are merged.
StepSignal simulate_hmm(const HmmSpec& spec, double duration, std::uint64_t seed);

}  // namespace jules
