#pragma once

#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "jules/deconv.hpp"
#include "jules/signal.hpp"

namespace jules {

enum class EventClass { flicker, slow, excluded };

std::string to_string(EventClass c);

struct Event {
  double start = 0.0;      // s
  double dwell = 0.0;      // s
  double amplitude = 0.0;  // preceding level minus event level
  EventClass kind = EventClass::excluded;
};

struct EventThresholds {
  double flicker_max = 2.6e-3;  // s
  double dwell_min = 0.24e-3;   // s
  double slow_min = 10e-3;      // s
  double amp_min = 10.0;
  double amp_max = 30.0;
};

struct EventTable {
  std::vector<Event> events;
  /// Gap between consecutive flicker events: next start minus previous end.
  std::vector<double> distances;

  std::vector<double> dwells(EventClass kind) const;
  std::vector<double> amplitudes(EventClass kind) const;
};

/// Closing events: segments whose level lies below both neighbours.
EventTable extract_events(const StepSignal& signal, const EventThresholds& thresholds = {});
inline EventTable extract_events(const Idealization& ideal, const EventThresholds& thresholds = {}) {
  return extract_events(ideal.signal, thresholds);
}

/// Maximum-likelihood rate of an exponential law truncated to [a, b]
/// (b may be +infinity). Negative rates are admissible when the sample mean
/// exceeds the window midpoint.
double fit_truncated_exponential(std::span<const double> samples, double a,
                                 double b = std::numeric_limits<double>::infinity());

/// Derivative of the truncated-exponential log-likelihood (per sample) at `rate`.
double truncated_exponential_score(std::span<const double> samples, double a, double b, double rate);

/// rate / P(a <= T <= b) for T exponential with `window_rate` (defaults to `rate`).
double missed_event_correction(double rate, double a, double b, std::optional<double> window_rate = std::nullopt);

enum class DensityKind { histogram, gaussian_kde };

DensityKind parse_density_kind(const std::string& name);

struct DensityCurve {
  std::vector<double> x;        // bin centres or grid points
  std::vector<double> count;    // histogram counts; empty for a KDE
  std::vector<double> density;  // unit area
};

/// Histogram with bins of width `bandwidth` covering the data, or a Gaussian
/// KDE on `points` grid points spanning the data plus four bandwidths.
DensityCurve density_export(std::span<const double> values, double bandwidth, DensityKind kind, int points = 512);

/// Positions of strict local maxima of the density, highest first.
std::vector<double> local_modes(const DensityCurve& curve);

}  // namespace jules
