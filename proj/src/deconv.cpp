#include "jules/deconv.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "jules/error.hpp"

namespace jules {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
// Smallest admissible distance between the two changes of a peak, in samples.
constexpr double kMinGap = 0.01;

double median(std::vector<double> x) {
  const std::size_t h = x.size() / 2;
  std::nth_element(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(h), x.end());
  if (x.size() % 2 == 1) return x[h];
  const double upper = x[h];
  const double lower = *std::max_element(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(h));
  return 0.5 * (lower + upper);
}

// 1-based first sample of every segment.
std::vector<long long> segment_first_samples(const StepSignal& seg, double fs) {
  std::vector<long long> out{1};
  for (std::size_t s : grid_indices(seg, fs)) out.push_back(static_cast<long long>(s));
  return out;
}

std::vector<double> grid_around(double centre, double step, double lo, double hi) {
  std::vector<double> out;
  for (int j = -9; j <= 9; ++j) {
    const double x = centre + j * step;
    if (x >= lo - 1e-12 && x <= hi + 1e-12) out.push_back(std::clamp(x, lo, hi));
  }
  return out;
}

}  // namespace

SegmentClass classify_segments(const Trace& trace, const StepSignal& seg, const TruncatedFilter& filter) {
  const double fs = trace.sampling_rate();
  const long long n = static_cast<long long>(trace.size());
  const long long m = filter.m();
  const auto first = segment_first_samples(seg, fs);
  const std::size_t count = seg.segment_count();

  SegmentClass out;
  out.labels.reserve(count);
  out.levels.reserve(count);
  out.interior.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    // The filter smears every change over m samples after it, and a change may
    // sit up to m samples before its detected position, so both margins are m.
    const long long lo = k == 0 ? 1 : first[k] + m;
    const long long hi = k + 1 == count ? n : first[k + 1] - 1 - m;
    out.interior.emplace_back(lo, hi);
    if (hi - lo + 1 >= kMinLongInterior) {
      const auto y = trace.values();
      out.labels.push_back(SegmentLabel::long_segment);
      out.levels.push_back(median(std::vector<double>(y.begin() + (lo - 1), y.begin() + hi)));
    } else {
      out.labels.push_back(SegmentLabel::short_segment);
      out.levels.push_back(kNaN);
    }
  }
  return out;
}

std::string to_string(Provenance p) {
  switch (p) {
    case Provenance::deconvolved: return "deconvolved";
    case Provenance::long_median: return "long_median";
    case Provenance::detection_only: return "detection_only";
  }
  return "unknown";
}

Provenance parse_provenance(const std::string& name) {
  if (name == "deconvolved") return Provenance::deconvolved;
  if (name == "long_median") return Provenance::long_median;
  if (name == "detection_only") return Provenance::detection_only;
  throw InvalidArgument("unknown provenance '" + name + "'");
}

RegularizedCovariance::RegularizedCovariance(std::span<const double> acf, double sigma, double gamma2)
    : acf_(acf.begin(), acf.end()), sigma2_(sigma * sigma), gamma2_(gamma2) {
  require(!acf_.empty(), "autocorrelation must not be empty");
  require(std::isfinite(sigma) && sigma >= 0.0, "sigma must be non-negative");
  require(std::isfinite(gamma2) && gamma2 >= 0.0, "gamma2 must be non-negative");
}

Eigen::MatrixXd RegularizedCovariance::matrix(std::size_t size) const {
  Eigen::MatrixXd s(static_cast<Eigen::Index>(size), static_cast<Eigen::Index>(size));
  for (std::size_t i = 0; i < size; ++i) {
    for (std::size_t j = 0; j < size; ++j) {
      const std::size_t lag = i > j ? i - j : j - i;
      const double a = lag < acf_.size() ? acf_[lag] : 0.0;
      s(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = sigma2_ * a + (i == j ? gamma2_ : 0.0);
    }
  }
  return s;
}

const Eigen::LLT<Eigen::MatrixXd>& RegularizedCovariance::factor(std::size_t size) {
  auto it = cache_.find(size);
  if (it != cache_.end()) return it->second;
  Eigen::LLT<Eigen::MatrixXd> llt(matrix(size));
  if (llt.info() != Eigen::Success) {
    throw NumericalError("regularized covariance is not positive definite; use gamma2 > 0");
  }
  return cache_.emplace(size, std::move(llt)).first->second;
}

BlockObjective::BlockObjective(std::span<const double> y_window, long long first_sample, double left_level,
                               double right_level, const TruncatedFilter& filter, RegularizedCovariance& cov)
    : y_(Eigen::Map<const Eigen::VectorXd>(y_window.data(), static_cast<Eigen::Index>(y_window.size()))),
      first_(first_sample),
      left_(left_level),
      right_(right_level),
      filter_(filter),
      llt_(&cov.factor(y_window.size())) {
  require(!y_window.empty(), "deconvolution window is empty");
}

Eigen::VectorXd BlockObjective::whiten(const Eigen::VectorXd& v) const { return llt_->matrixL().solve(v); }

double BlockObjective::jump(double tau) const {
  Eigen::VectorXd r(y_.size());
  for (Eigen::Index i = 0; i < y_.size(); ++i) {
    const double x = static_cast<double>(first_ + i) - tau;
    r(i) = y_(i) - (left_ + (right_ - left_) * filter_.step_samples(x));
  }
  return whiten(r).squaredNorm();
}

double BlockObjective::peak(double tau1, double tau2, double* level) const {
  // mean = base + c g, linear in the peak level c.
  Eigen::VectorXd r(y_.size()), g(y_.size());
  for (Eigen::Index i = 0; i < y_.size(); ++i) {
    const double t = static_cast<double>(first_ + i);
    const double a1 = filter_.step_samples(t - tau1);
    const double a2 = filter_.step_samples(t - tau2);
    r(i) = y_(i) - (left_ * (1.0 - a1) + right_ * a2);
    g(i) = a1 - a2;
  }
  const Eigen::VectorXd rw = whiten(r);
  const Eigen::VectorXd gw = whiten(g);
  const double gg = gw.squaredNorm();
  if (!(gg > 0.0)) {
    // The peak is invisible in the window; its level is not identifiable.
    if (level) *level = 0.5 * (left_ + right_);
    return rw.squaredNorm();
  }
  const double gr = gw.dot(rw);
  if (level) *level = gr / gg;
  return std::max(0.0, rw.squaredNorm() - gr * gr / gg);
}

double BlockObjective::peak_at_level(double tau1, double tau2, double level) const {
  Eigen::VectorXd r(y_.size());
  for (Eigen::Index i = 0; i < y_.size(); ++i) {
    const double t = static_cast<double>(first_ + i);
    const double a1 = filter_.step_samples(t - tau1);
    const double a2 = filter_.step_samples(t - tau2);
    r(i) = y_(i) - (left_ * (1.0 - a1) + level * (a1 - a2) + right_ * a2);
  }
  return whiten(r).squaredNorm();
}

BlockFit fit_jump(const BlockObjective& objective, long long detected, int m, int refinements) {
  const double lo = static_cast<double>(detected - m);
  const double hi = static_cast<double>(detected);
  double best_tau = lo;
  double best = std::numeric_limits<double>::infinity();
  for (long long s = detected - m; s <= detected; ++s) {
    const double v = objective.jump(static_cast<double>(s));
    if (v < best) {
      best = v;
      best_tau = static_cast<double>(s);
    }
  }
  BlockFit fit;
  fit.objective_per_round.push_back(best);
  double step = 0.1;
  for (int r = 0; r < refinements; ++r, step /= 10.0) {
    const double centre = best_tau;
    for (double x : grid_around(centre, step, lo, hi)) {
      const double v = objective.jump(x);
      if (v < best) {
        best = v;
        best_tau = x;
      }
    }
    fit.objective_per_round.push_back(best);
  }
  fit.change_samples = {best_tau};
  fit.objective = best;
  return fit;
}

BlockFit fit_peak(const BlockObjective& objective, long long d1, long long d2, int m, int refinements) {
  require(d1 < d2, "peak changes must be ordered");
  const double lo1 = static_cast<double>(d1 - m), hi1 = static_cast<double>(d1);
  const double lo2 = static_cast<double>(d2 - m), hi2 = static_cast<double>(d2);
  double b1 = lo1, b2 = hi2;
  double best = std::numeric_limits<double>::infinity();
  auto consider = [&](double x1, double x2) {
    if (x2 - x1 < kMinGap - 1e-12) return;
    const double v = objective.peak(x1, x2);
    if (v < best) {
      best = v;
      b1 = x1;
      b2 = x2;
    }
  };
  for (long long s1 = d1 - m; s1 <= d1; ++s1)
    for (long long s2 = d2 - m; s2 <= d2; ++s2) consider(static_cast<double>(s1), static_cast<double>(s2));

  BlockFit fit;
  fit.objective_per_round.push_back(best);
  double step = 0.1;
  for (int r = 0; r < refinements; ++r, step /= 10.0) {
    const auto g1 = grid_around(b1, step, lo1, hi1);
    const auto g2 = grid_around(b2, step, lo2, hi2);
    for (double x1 : g1)
      for (double x2 : g2) consider(x1, x2);
    fit.objective_per_round.push_back(best);
  }
  fit.objective = objective.peak(b1, b2, &fit.level);
  fit.change_samples = {b1, b2};
  return fit;
}

Idealization local_deconvolve(const Trace& trace, const StepSignal& seg, const SegmentClass& classes,
                              const TruncatedFilter& filter, double gamma2, double sigma_hat) {
  const std::size_t count = seg.segment_count();
  require(classes.labels.size() == count, "classification does not match the segmentation");
  const double fs = trace.sampling_rate();
  const long long n = static_cast<long long>(trace.size());
  const int m = filter.m();
  const auto first = segment_first_samples(seg, fs);
  const auto y = trace.values();
  RegularizedCovariance cov(filter.acf(), sigma_hat, gamma2);

  std::vector<double> times(seg.change_times().begin(), seg.change_times().end());
  std::vector<double> levels(seg.levels().begin(), seg.levels().end());
  std::vector<Provenance> prov(count, Provenance::detection_only);

  std::vector<std::size_t> longs;
  for (std::size_t k = 0; k < count; ++k) {
    if (classes.is_long(k)) {
      longs.push_back(k);
      levels[k] = classes.levels[k];
      prov[k] = Provenance::long_median;
    }
  }

  auto window = [&](long long from, long long to) {
    from = std::max<long long>(from, 1);
    to = std::min(to, n);
    return std::pair{from, std::span<const double>(y.data() + (from - 1), static_cast<std::size_t>(to - from + 1))};
  };

  for (std::size_t b = 0; b + 1 < longs.size(); ++b) {
    const std::size_t left = longs[b], right = longs[b + 1];
    if (right == left + 1) {
      const long long s = first[right];
      const auto [from, ys] = window(s - m + 1, s + m - 1);
      const BlockObjective obj(ys, from, levels[left], levels[right], filter, cov);
      const BlockFit fit = fit_jump(obj, s, m);
      times[left] = fit.change_samples[0] / fs;
    } else if (right == left + 2) {
      const long long d1 = first[left + 1], d2 = first[right];
      const auto [from, ys] = window(d1 - m + 1, d2 + m - 1);
      const BlockObjective obj(ys, from, levels[left], levels[right], filter, cov);
      const BlockFit fit = fit_peak(obj, d1, d2, m);
      times[left] = fit.change_samples[0] / fs;
      times[left + 1] = fit.change_samples[1] / fs;
      levels[left + 1] = fit.level;
      prov[left + 1] = Provenance::deconvolved;
    }
    // Two or more short segments: the detection-step reconstruction stays.
  }

  // A fitted level can coincide with a neighbour; fold such segments together.
  std::vector<double> times_out;
  std::vector<double> levels_out{levels[0]};
  std::vector<Provenance> prov_out{prov[0]};
  for (std::size_t k = 1; k < count; ++k) {
    if (levels[k] == levels_out.back()) continue;
    times_out.push_back(times[k - 1]);
    levels_out.push_back(levels[k]);
    prov_out.push_back(prov[k]);
  }

  return Idealization{StepSignal(std::move(times_out), std::move(levels_out), seg.end_time()),
                      std::move(prov_out),
                      sigma_hat,
                      0.0,
                      gamma2,
                      seg};
}

Idealization jules(const Trace& trace, const DetectionConfig& config, const TruncatedFilter& filter, double gamma2,
                   int threads) {
  config.validate();
  require(std::isfinite(gamma2) && gamma2 >= 0.0, "gamma2 must be non-negative");
  const double sigma = config.sigma ? *config.sigma : estimate_sigma(trace, filter);
  const double q = config.q ? *config.q
                            : multiscale_quantile(trace.size(), filter, config.alpha, config.mc_reps, config.seed,
                                                  config.intervals, threads);
  const MultiscaleContext ctx(trace, filter, sigma, config.intervals);
  const StepSignal raw = fit_segmentation(trace, ctx, q, {.prune = true, .max_changes = config.max_changes});
  const StepSignal detected = postfilter(raw, filter);
  const SegmentClass classes = classify_segments(trace, detected, filter);
  Idealization out = local_deconvolve(trace, detected, classes, filter, gamma2, sigma);
  out.q_used = q;
  return out;
}

}  // namespace jules
