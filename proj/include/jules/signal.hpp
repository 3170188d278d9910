#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "jules/filters.hpp"

namespace jules {

/// Piecewise-constant signal on (-inf, end_time]: level l_0 before the first
/// change time, l_j on [tau_j, tau_{j+1}).
class StepSignal {
 public:
  StepSignal(std::vector<double> change_times, std::vector<double> levels, double end_time);

  static StepSignal constant(double level, double end_time) { return StepSignal({}, {level}, end_time); }

  /// Builds a signal while dropping changes whose neighbouring levels are equal.
  static StepSignal merged(std::vector<double> change_times, std::vector<double> levels, double end_time);

  std::span<const double> change_times() const { return change_times_; }
  std::span<const double> levels() const { return levels_; }
  double end_time() const { return end_time_; }
  std::size_t change_count() const { return change_times_.size(); }
  std::size_t segment_count() const { return levels_.size(); }

  /// Start of segment k; -infinity for k = 0.
  double segment_start(std::size_t k) const;
  /// End of segment k; end_time for the last one.
  double segment_end(std::size_t k) const;
  double value_at(double t) const;

 private:
  std::vector<double> change_times_;
  std::vector<double> levels_;
  double end_time_;
};

/// Equidistant observations Y_1..Y_n taken at t_i = i / sampling_rate.
class Trace {
 public:
  Trace(std::vector<double> values, double sampling_rate);

  std::span<const double> values() const { return values_; }
  double sampling_rate() const { return sampling_rate_; }
  std::size_t size() const { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }
  double duration() const { return values_.size() / sampling_rate_; }

 private:
  std::vector<double> values_;
  double sampling_rate_;
};

/// Exact (F_m * f)(t) at each requested time, computed as
/// l_0 + sum_j (l_j - l_{j-1}) A(t - tau_j). Times must lie in [0, end_time].
std::vector<double> convolve(const StepSignal& signal, const TruncatedFilter& filter, std::span<const double> times);

/// convolve() at the sample times i / f_s, i = 1..n.
std::vector<double> convolve_samples(const StepSignal& signal, const TruncatedFilter& filter, std::size_t n);

}  // namespace jules
