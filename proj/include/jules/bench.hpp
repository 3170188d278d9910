#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "jules/analysis.hpp"
#include "jules/detect.hpp"
#include "jules/filters.hpp"
#include "jules/noise_sim.hpp"

namespace jules {

/// Shared knobs of the simulation studies.
struct StudySettings {
  FilterSpec filter;
  double alpha = 0.05;
  int mc_reps = 10000;
  /// Fixed critical value; calibrated by Monte Carlo for the study's n when empty.
  std::optional<double> q;
  double gamma2 = 1.0;
  std::uint64_t seed = 1;
  int threads = 0;
};

struct PeakExperimentSpec {
  std::vector<double> lengths{2.0, 3.0, 5.0};  // peak length in samples, may be fractional
  double open_level = 40.0;
  double peak_level = 20.0;
  double tau1_samples = 2000.0;
  std::size_t n = 4000;
  int reps = 1000;
  NoiseModel noise;
};

struct ErrorSummary {
  double mse = 0.0;
  double bias = 0.0;
  double sd = 0.0;
  std::size_t count = 0;
};

/// Mean squared error, bias and standard deviation (1/N) of estimates around `truth`.
ErrorSummary summarize_errors(const std::vector<double>& estimates, double truth, double scale = 1.0);

struct DetectionMetrics {
  double length = 0.0;
  int reps = 0;
  double correctly_identified = 0.0;  // percent
  double detected = 0.0;              // percent
  double false_positives = 0.0;       // mean per replication
  /// Detections among detections plus false positives (relative true detections).
  double true_detection_share = 0.0;
  ErrorSummary tau1;  // scaled by f_s^2 (mse) and f_s (bias, sd)
  ErrorSummary tau2;
  ErrorSummary level;
  ErrorSummary level_trimmed;  // estimates within [0, 40] only
  /// Peak windows whose residual RMS is at most 1.2 sigma_0, among detected ones.
  double residual_ok_share = 0.0;
};

/// Outcome of a single replication of the isolated-peak study.
struct PeakScore {
  bool detected = false;
  bool correct = false;
  double false_positives = 0.0;
  double tau1 = 0.0, tau2 = 0.0, level = 0.0;  // estimates when detected
};

/// Scores an idealization against a peak with changes at tau1 < tau2 (seconds).
PeakScore score_peak(const StepSignal& estimate, double tau1, double tau2, int m, double fs);

std::vector<DetectionMetrics> run_isolated_peak(const PeakExperimentSpec& spec, const StudySettings& settings);

enum class SeparationOutcome { perfect, no_deconvolution_separation, no_detection_separation };

std::string to_string(SeparationOutcome o);

struct SeparationRow {
  int distance = 0;
  int reps = 0;
  double perfect = 0.0;                      // frequencies
  double no_deconvolution_separation = 0.0;
  double no_detection_separation = 0.0;
};

std::vector<SeparationRow> run_separation(const std::vector<int>& distances, int reps, const StudySettings& settings,
                                          std::size_t n = 4000);

struct HmmStudyRow {
  double delta = 0.0;
  std::size_t flicker_events = 0;
  std::vector<double> amplitudes;  // flicker-window amplitudes (dwell in [0.24, 2.6] ms)
  std::vector<double> closed_dwells;
  std::vector<double> distances;  // inside the distance window
  double closed_rate = 0.0;       // 1/s
  double open_rate = 0.0;         // 1/s, from distances
  double open_rate_corrected = 0.0;
  /// Correction with the distance-window probability instead of the dwell window.
  double open_rate_corrected_same_window = 0.0;
  std::vector<double> amplitude_modes;  // KDE modes, highest first
};

struct HmmStudySpec {
  std::vector<double> deltas{2.0, 3.0, 4.0};
  int traces = 5;
  std::size_t n = 600000;
  double noise_sigma = 1.4;
  double distance_min = 0.032;  // s
  double distance_max = 1.0;    // s
  double kde_bandwidth = 0.5;
  EventThresholds thresholds;
};

std::vector<HmmStudyRow> run_hmm_study(const HmmStudySpec& spec, const StudySettings& settings);

struct RobustnessRow {
  NoiseKind kind = NoiseKind::filtered_white;
  DetectionMetrics metrics;
};

std::vector<RobustnessRow> run_robustness(const std::vector<NoiseKind>& kinds, const PeakExperimentSpec& spec,
                                          const StudySettings& settings);

}  // namespace jules
