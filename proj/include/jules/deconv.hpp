#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "jules/detect.hpp"
#include "jules/filters.hpp"
#include "jules/signal.hpp"

namespace jules {

enum class SegmentLabel { long_segment, short_segment };

/// Long/short labels of a detected segmentation, with the median level of each
/// long segment taken over its filter-free interior.
struct SegmentClass {
  std::vector<SegmentLabel> labels;
  /// Median of the interior for long segments, NaN for short ones.
  std::vector<double> levels;
  /// 1-based inclusive interior sample range [first, last]; empty when last < first.
  std::vector<std::pair<long long, long long>> interior;

  bool is_long(std::size_t k) const { return labels[k] == SegmentLabel::long_segment; }
};

/// Interior observations required for a segment to count as long.
inline constexpr long long kMinLongInterior = 10;

SegmentClass classify_segments(const Trace& trace, const StepSignal& seg, const TruncatedFilter& filter);

enum class Provenance { deconvolved, long_median, detection_only };

std::string to_string(Provenance p);
Provenance parse_provenance(const std::string& name);

struct Idealization {
  StepSignal signal;
  std::vector<Provenance> provenance;
  double sigma_hat = 0.0;
  double q_used = 0.0;
  double gamma2 = 0.0;
  /// Postfiltered detection-step segmentation the estimate was refined from.
  StepSignal detection;
};

/// Cholesky factors of sigma^2 Toeplitz(acf) + gamma2 I, memoized by size.
class RegularizedCovariance {
 public:
  RegularizedCovariance(std::span<const double> acf, double sigma, double gamma2);

  const Eigen::LLT<Eigen::MatrixXd>& factor(std::size_t size);
  Eigen::MatrixXd matrix(std::size_t size) const;

 private:
  std::vector<double> acf_;
  double sigma2_;
  double gamma2_;
  std::map<std::size_t, Eigen::LLT<Eigen::MatrixXd>> cache_;
};

/// Result of the regularized likelihood search for one block.
struct BlockFit {
  std::vector<double> change_samples;  // change locations in samples (t * f_s)
  double level = 0.0;                  // short-segment level (peaks only)
  double objective = 0.0;
  std::vector<double> objective_per_round;  // coarse grid, then each refinement
};

/// Evaluates the regularized Mahalanobis objective for one block window.
class BlockObjective {
 public:
  /// `first_sample` is the 1-based index of the window's first observation.
  BlockObjective(std::span<const double> y_window, long long first_sample, double left_level, double right_level,
                 const TruncatedFilter& filter, RegularizedCovariance& cov);

  /// Objective for a single jump at `tau` (in samples).
  double jump(double tau) const;
  /// Objective for a peak with changes tau1 < tau2 (samples); `level` receives the
  /// closed-form generalized least-squares level.
  double peak(double tau1, double tau2, double* level = nullptr) const;
  /// Objective of the peak at a fixed level.
  double peak_at_level(double tau1, double tau2, double level) const;

 private:
  Eigen::VectorXd whiten(const Eigen::VectorXd& v) const;

  Eigen::VectorXd y_;
  long long first_;
  double left_;
  double right_;
  const TruncatedFilter& filter_;
  const Eigen::LLT<Eigen::MatrixXd>* llt_;
};

/// Grid search for an isolated jump detected at sample `detected`.
BlockFit fit_jump(const BlockObjective& objective, long long detected, int m, int refinements = 2);
/// Joint grid search for a peak detected at samples d1 < d2.
BlockFit fit_peak(const BlockObjective& objective, long long d1, long long d2, int m, int refinements = 2);

/// Local deconvolution of every block between consecutive long segments.
/// `sigma_hat` scales the covariance; gamma2 >= 0 regularizes it.
Idealization local_deconvolve(const Trace& trace, const StepSignal& seg, const SegmentClass& classes,
                              const TruncatedFilter& filter, double gamma2, double sigma_hat);

/// Full pipeline: noise level, critical value, constrained segmentation,
/// postfiltering, classification and local deconvolution.
Idealization jules(const Trace& trace, const DetectionConfig& config, const TruncatedFilter& filter,
                   double gamma2 = 1.0, int threads = 0);

}  // namespace jules
