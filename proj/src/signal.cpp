#include "jules/signal.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "jules/error.hpp"

namespace jules {

StepSignal::StepSignal(std::vector<double> change_times, std::vector<double> levels, double end_time)
    : change_times_(std::move(change_times)), levels_(std::move(levels)), end_time_(end_time) {
  require(std::isfinite(end_time_) && end_time_ > 0.0, "signal end time must be positive");
  require(levels_.size() == change_times_.size() + 1, "need exactly one more level than change times");
  for (double l : levels_) require(std::isfinite(l), "signal levels must be finite");
  for (std::size_t j = 0; j < change_times_.size(); ++j) {
    const double t = change_times_[j];
    require(std::isfinite(t) && t > 0.0 && t < end_time_, "change times must lie in (0, end_time)");
    require(j == 0 || change_times_[j - 1] < t, "change times must be strictly increasing");
    require(levels_[j] != levels_[j + 1], "consecutive levels must differ");
  }
}

StepSignal StepSignal::merged(std::vector<double> change_times, std::vector<double> levels, double end_time) {
  std::vector<double> times_out;
  std::vector<double> levels_out{levels.at(0)};
  for (std::size_t j = 0; j < change_times.size(); ++j) {
    if (levels[j + 1] == levels_out.back()) continue;
    times_out.push_back(change_times[j]);
    levels_out.push_back(levels[j + 1]);
  }
  return StepSignal(std::move(times_out), std::move(levels_out), end_time);
}

double StepSignal::segment_start(std::size_t k) const {
  return k == 0 ? -std::numeric_limits<double>::infinity() : change_times_.at(k - 1);
}

double StepSignal::segment_end(std::size_t k) const {
  return k + 1 == levels_.size() ? end_time_ : change_times_.at(k);
}

double StepSignal::value_at(double t) const {
  const auto it = std::upper_bound(change_times_.begin(), change_times_.end(), t);
  return levels_[static_cast<std::size_t>(it - change_times_.begin())];
}

Trace::Trace(std::vector<double> values, double sampling_rate)
    : values_(std::move(values)), sampling_rate_(sampling_rate) {
  require(!values_.empty(), "trace must contain at least one observation");
  require(std::isfinite(sampling_rate_) && sampling_rate_ > 0.0, "sampling rate must be positive");
  for (double v : values_) require(std::isfinite(v), "trace values must be finite");
}

std::vector<double> convolve(const StepSignal& signal, const TruncatedFilter& filter, std::span<const double> times) {
  const auto taus = signal.change_times();
  const auto levels = signal.levels();
  const double support = filter.length();
  const double slack = 1e-12 * std::max(1.0, signal.end_time());
  std::vector<double> out(times.size());
  for (std::size_t i = 0; i < times.size(); ++i) {
    const double t = times[i];
    if (!(t >= 0.0 && t <= signal.end_time() + slack))
      throw InvalidArgument("evaluation time outside [0, end_time]");
    // Only changes in (t - support, t] are still in transition; earlier ones are saturated.
    const auto first_open = std::lower_bound(taus.begin(), taus.end(), t - support);
    const auto past = std::upper_bound(first_open, taus.end(), t);
    const std::size_t k0 = static_cast<std::size_t>(first_open - taus.begin());
    double value = levels[k0];
    for (std::size_t j = k0; j < static_cast<std::size_t>(past - taus.begin()); ++j)
      value += (levels[j + 1] - levels[j]) * filter.step(t - taus[j]);
    out[i] = value;
  }
  return out;
}

std::vector<double> convolve_samples(const StepSignal& signal, const TruncatedFilter& filter, std::size_t n) {
  std::vector<double> times(n);
  const double fs = filter.sampling_rate();
  for (std::size_t i = 0; i < n; ++i) times[i] = static_cast<double>(i + 1) / fs;
  return convolve(signal, filter, times);
}

}  // namespace jules
