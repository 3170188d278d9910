#include "jules/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include <boost/math/tools/roots.hpp>

#include "jules/error.hpp"

namespace jules {

std::string to_string(EventClass c) {
  switch (c) {
    case EventClass::flicker: return "flicker";
    case EventClass::slow: return "slow";
    case EventClass::excluded: return "excluded";
  }
  return "unknown";
}

std::vector<double> EventTable::dwells(EventClass kind) const {
  std::vector<double> out;
  for (const auto& e : events)
    if (e.kind == kind) out.push_back(e.dwell);
  return out;
}

std::vector<double> EventTable::amplitudes(EventClass kind) const {
  std::vector<double> out;
  for (const auto& e : events)
    if (e.kind == kind) out.push_back(e.amplitude);
  return out;
}

EventTable extract_events(const StepSignal& signal, const EventThresholds& th) {
  const auto taus = signal.change_times();
  const auto levels = signal.levels();
  EventTable table;
  const Event* last_flicker = nullptr;
  for (std::size_t k = 1; k + 1 < levels.size(); ++k) {
    if (!(levels[k] < levels[k - 1] && levels[k] < levels[k + 1])) continue;
    Event e;
    e.start = taus[k - 1];
    e.dwell = taus[k] - taus[k - 1];
    e.amplitude = levels[k - 1] - levels[k];
    const bool amp_ok = e.amplitude >= th.amp_min && e.amplitude <= th.amp_max;
    if (e.dwell >= th.dwell_min && e.dwell <= th.flicker_max && amp_ok) {
      e.kind = EventClass::flicker;
    } else if (e.dwell > th.slow_min) {
      e.kind = EventClass::slow;
    }
    table.events.push_back(e);
  }
  for (const auto& e : table.events) {
    if (e.kind != EventClass::flicker) continue;
    if (last_flicker) table.distances.push_back(e.start - (last_flicker->start + last_flicker->dwell));
    last_flicker = &e;
  }
  return table;
}

namespace {

// Mean excess over a of an exponential law with rate r truncated to [a, a + w]:
// 1/r - w / (e^{r w} - 1), continuous through r = 0.
double truncated_mean_excess(double r, double w) {
  if (!std::isfinite(w)) return 1.0 / r;
  const double x = r * w;
  if (std::abs(x) < 1e-4) return w * (0.5 - x / 12.0 + x * x * x / 720.0);
  return 1.0 / r - w / std::expm1(x);
}

}  // namespace

double truncated_exponential_score(std::span<const double> samples, double a, double b, double rate) {
  require(!samples.empty(), "score needs samples");
  const double mean = std::accumulate(samples.begin(), samples.end(), 0.0) / static_cast<double>(samples.size());
  return truncated_mean_excess(rate, b - a) - (mean - a);
}

double fit_truncated_exponential(std::span<const double> samples, double a, double b) {
  require(samples.size() >= 2, "need at least two samples for a rate fit");
  require(std::isfinite(a) && a >= 0.0 && b > a, "window must satisfy 0 <= a < b");
  for (double t : samples) require(t >= a && t <= b, "sample outside the fit window");
  const double w = b - a;
  const double excess = std::accumulate(samples.begin(), samples.end(), 0.0) / static_cast<double>(samples.size()) - a;
  if (!(excess > 0.0) || (std::isfinite(w) && !(excess < w))) {
    throw NumericalError("rate is not identifiable: samples sit on a window boundary");
  }
  if (!std::isfinite(b)) return 1.0 / excess;

  // The mean excess decreases strictly in the rate; bracket the root and refine.
  auto f = [&](double r) { return truncated_mean_excess(r, w) - excess; };
  double lo = -1.0 / w, hi = 1.0 / w;
  for (int i = 0; i < 200 && f(lo) < 0.0; ++i) lo *= 2.0;
  for (int i = 0; i < 200 && f(hi) > 0.0; ++i) hi *= 2.0;
  if (f(lo) < 0.0 || f(hi) > 0.0) throw NumericalError("could not bracket the truncated-exponential rate");
  if (f(lo) == 0.0) return lo;
  if (f(hi) == 0.0) return hi;
  std::uintmax_t iters = 200;
  const auto [r0, r1] =
      boost::math::tools::toms748_solve(f, lo, hi, boost::math::tools::eps_tolerance<double>(44), iters);
  return 0.5 * (r0 + r1);
}

double missed_event_correction(double rate, double a, double b, std::optional<double> window_rate) {
  require(rate > 0.0, "rate must be positive");
  require(a >= 0.0 && b > a, "window must satisfy 0 <= a < b");
  const double r = window_rate.value_or(rate);
  require(r > 0.0, "window rate must be positive");
  const double p = std::exp(-r * a) - (std::isfinite(b) ? std::exp(-r * b) : 0.0);
  return rate / p;
}

DensityKind parse_density_kind(const std::string& name) {
  if (name == "histogram") return DensityKind::histogram;
  if (name == "kde" || name == "gaussian_kde") return DensityKind::gaussian_kde;
  throw InvalidArgument("unknown density kind '" + name + "'");
}

DensityCurve density_export(std::span<const double> values, double bandwidth, DensityKind kind, int points) {
  require(!values.empty(), "density needs at least one value");
  require(bandwidth > 0.0 && std::isfinite(bandwidth), "bandwidth must be positive");
  const auto [min_it, max_it] = std::minmax_element(values.begin(), values.end());
  const double lo = *min_it, hi = *max_it;
  const double n = static_cast<double>(values.size());
  DensityCurve curve;

  if (kind == DensityKind::histogram) {
    const std::size_t bins = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil((hi - lo) / bandwidth)));
    curve.count.assign(bins, 0.0);
    for (double v : values) {
      const auto b = std::min(bins - 1, static_cast<std::size_t>((v - lo) / bandwidth));
      curve.count[b] += 1.0;
    }
    for (std::size_t b = 0; b < bins; ++b) {
      curve.x.push_back(lo + (static_cast<double>(b) + 0.5) * bandwidth);
      curve.density.push_back(curve.count[b] / (n * bandwidth));
    }
    return curve;
  }

  require(points >= 2, "a KDE needs at least two grid points");
  const double from = lo - 4.0 * bandwidth, to = hi + 4.0 * bandwidth;
  const double step = (to - from) / (points - 1);
  const double norm = 1.0 / (n * bandwidth * std::sqrt(2.0 * std::numbers::pi));
  for (int i = 0; i < points; ++i) {
    const double x = from + i * step;
    double s = 0.0;
    for (double v : values) {
      const double z = (x - v) / bandwidth;
      s += std::exp(-0.5 * z * z);
    }
    curve.x.push_back(x);
    curve.density.push_back(s * norm);
  }
  return curve;
}

std::vector<double> local_modes(const DensityCurve& curve) {
  const auto& d = curve.density;
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const bool left = i == 0 || d[i] > d[i - 1];
    const bool right = i + 1 == d.size() || d[i] > d[i + 1];
    if (left && right && d[i] > 0.0) idx.push_back(i);
  }
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return d[a] > d[b]; });
  std::vector<double> out;
  for (std::size_t i : idx) out.push_back(curve.x[i]);
  return out;
}

}  // namespace jules
