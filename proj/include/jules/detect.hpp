#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "jules/filters.hpp"
#include "jules/signal.hpp"

namespace jules {

/// Which interval lengths the multiresolution constraint tests.
enum class IntervalSystem {
  dyadic,  // every start position, lengths 2^l <= n
  all,     // every length 1..n; quadratic cost
};

std::string to_string(IntervalSystem system);
IntervalSystem parse_interval_system(const std::string& name);

/// Interval lengths of `system` for a trace of n observations, ascending.
std::vector<std::size_t> interval_lengths(IntervalSystem system, std::size_t n);

struct DetectionConfig {
  double alpha = 0.05;
  /// Explicit critical value; when set, alpha and mc_reps are ignored.
  std::optional<double> q;
  IntervalSystem intervals = IntervalSystem::dyadic;
  int mc_reps = 10000;
  std::uint64_t seed = 0;
  /// Known noise level; estimated from the data when empty.
  std::optional<double> sigma;
  /// Upper bound on the number of changes; n / 2 when empty.
  std::optional<std::size_t> max_changes;

  void validate() const;
};

/// Robust noise-level estimate from lag-m differences (IQR based), with the
/// autocorrelation normalized to a_0 = 1. Returns 0 for degenerate data.
double estimate_sigma(const Trace& trace, const TruncatedFilter& filter);

/// Scale calibration sqrt(2 log(e n / length)).
double penalty(std::size_t length, std::size_t n);

/// sqrt(length a_0 + 2 sum_k (length - k)_+ a_k): standard deviation of a
/// partial sum of `length` consecutive unit-scale errors.
double partial_sum_sd(std::size_t length, std::span<const double> acf);

/// Everything the multiresolution constraint needs about one trace.
class MultiscaleContext {
 public:
  MultiscaleContext(const Trace& trace, const TruncatedFilter& filter, double sigma,
                    IntervalSystem system = IntervalSystem::dyadic);

  std::size_t n() const { return n_; }
  double sigma() const { return sigma_; }
  double offset() const { return offset_; }
  IntervalSystem system() const { return system_; }
  std::span<const std::size_t> lengths() const { return lengths_; }
  /// sigma_{i,j} for an interval of lengths()[level].
  double scale_sd(std::size_t level) const { return sd_[level]; }
  double penalty_at(std::size_t level) const { return pen_[level]; }

  /// Sum of (Y_k - offset) over 0-based samples [i, i + len).
  double sum(std::size_t i, std::size_t len) const { return prefix_[i + len] - prefix_[i]; }
  double sum_squares(std::size_t i, std::size_t len) const { return prefix_sq_[i + len] - prefix_sq_[i]; }

 private:
  std::size_t n_;
  double sigma_;
  double offset_;
  IntervalSystem system_;
  std::vector<std::size_t> lengths_;
  std::vector<double> sd_;
  std::vector<double> pen_;
  std::vector<double> prefix_;
  std::vector<double> prefix_sq_;
};

/// max over system intervals on which `candidate` is constant of
/// |sum (Y_k - candidate)| / sigma_{i,j} - penalty. The candidate's change
/// times must lie on the sampling grid.
double multiscale_statistic(const Trace& trace, const StepSignal& candidate, const MultiscaleContext& ctx);

/// Null statistic of a zero-mean noise vector with sigma = 1 against the true
/// (zero) signal, using precomputed length-level tables.
double null_statistic(std::span<const double> noise, std::span<const std::size_t> lengths,
                      std::span<const double> sds, std::span<const double> pens);

/// Sorted Monte Carlo draws of the null statistic. Cached in memory and, if
/// JULES_QUANTILE_CACHE names a directory, on disk.
std::vector<double> null_distribution(std::size_t n, const TruncatedFilter& filter, int reps, std::uint64_t seed,
                                      IntervalSystem system = IntervalSystem::dyadic, int threads = 0);

/// Empirical (1 - alpha) quantile of the null statistic.
double multiscale_quantile(std::size_t n, const TruncatedFilter& filter, double alpha, int reps, std::uint64_t seed,
                           IntervalSystem system = IntervalSystem::dyadic, int threads = 0);

/// Inverse-ECDF quantile of sorted draws.
double empirical_quantile(std::span<const double> sorted, double p);

struct SegmentationOptions {
  bool prune = true;
  std::optional<std::size_t> max_changes;
};

/// Grid-aligned step function with the fewest changes that satisfies the
/// multiresolution constraint at level q, least squares among those.
StepSignal fit_segmentation(const Trace& trace, const MultiscaleContext& ctx, double q,
                            const SegmentationOptions& options = {});

/// Merge runs of same-direction changes that start within m / f_s of the
/// run's first change; the run keeps the first start and the last level.
StepSignal postfilter(const StepSignal& seg, const TruncatedFilter& filter);

/// 1-based first sample index of each segment after the first (f_s tau_k).
std::vector<std::size_t> grid_indices(const StepSignal& seg, double sampling_rate);

}  // namespace jules
