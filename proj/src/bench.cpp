#include "jules/bench.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "jules/deconv.hpp"
#include "jules/error.hpp"
#include "jules/parallel.hpp"
#include "jules/random.hpp"

namespace jules {

namespace {

double critical_value(const StudySettings& s, std::size_t n, const TruncatedFilter& filter) {
  if (s.q) return *s.q;
  return multiscale_quantile(n, filter, s.alpha, s.mc_reps, s.seed, IntervalSystem::dyadic, s.threads);
}

Idealization idealize(const Trace& trace, const TruncatedFilter& filter, double q, double gamma2) {
  DetectionConfig cfg;
  cfg.q = q;
  return jules(trace, cfg, filter, gamma2, 1);
}

// Stream seeds of independent sub-studies, so changing one study's size does
// not reshuffle the noise of another.
std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t study, std::uint64_t cell) {
  return derive_seed(derive_seed(seed, study), cell);
}

double residual_rms(const Trace& trace, const StepSignal& fit, const TruncatedFilter& filter, long long from,
                    long long to) {
  const long long n = static_cast<long long>(trace.size());
  from = std::max<long long>(from, 1);
  to = std::min(to, n);
  std::vector<double> times;
  for (long long i = from; i <= to; ++i) times.push_back(static_cast<double>(i) / trace.sampling_rate());
  const auto mean = convolve(fit, filter, times);
  double ss = 0.0;
  for (std::size_t k = 0; k < times.size(); ++k) {
    const double r = trace[static_cast<std::size_t>(from - 1) + k] - mean[k];
    ss += r * r;
  }
  return std::sqrt(ss / static_cast<double>(times.size()));
}

}  // namespace

ErrorSummary summarize_errors(const std::vector<double>& estimates, double truth, double scale) {
  ErrorSummary s;
  s.count = estimates.size();
  if (estimates.empty()) return s;
  const double n = static_cast<double>(estimates.size());
  for (double x : estimates) {
    const double e = (x - truth) * scale;
    s.mse += e * e;
    s.bias += e;
  }
  s.mse /= n;
  s.bias /= n;
  s.sd = std::sqrt(std::max(0.0, s.mse - s.bias * s.bias));
  return s;
}

PeakScore score_peak(const StepSignal& estimate, double tau1, double tau2, int m, double fs) {
  const auto taus = estimate.change_times();
  const double tol = m / fs;
  PeakScore s;
  const std::size_t k = taus.size();
  for (std::size_t j = 0; j + 1 < k; ++j) {
    if (std::abs(taus[j] - tau1) < tol && std::abs(taus[j + 1] - tau2) < tol) {
      s.detected = true;
      s.tau1 = taus[j];
      s.tau2 = taus[j + 1];
      s.level = estimate.levels()[j + 1];
      break;
    }
  }
  if (s.detected) {
    s.correct = k == 2;
    s.false_positives = static_cast<double>(k - 2);
    return s;
  }
  // A lone change at either end of the peak is a near miss, not a false positive.
  const bool near = std::any_of(taus.begin(), taus.end(), [&](double t) {
    return std::abs(t - tau1) < tol || std::abs(t - tau2) < tol;
  });
  s.false_positives = static_cast<double>(k) - (near ? 1.0 : 0.0);
  return s;
}

std::vector<DetectionMetrics> run_isolated_peak(const PeakExperimentSpec& spec, const StudySettings& settings) {
  require(spec.reps >= 1, "need at least one replication");
  require(spec.tau1_samples > 0 && spec.n > 0, "invalid peak geometry");
  spec.noise.validate();
  const TruncatedFilter filter = settings.filter.build();
  const double fs = filter.sampling_rate();
  const int m = filter.m();
  const double q = critical_value(settings, spec.n, filter);
  const double end = static_cast<double>(spec.n) / fs;

  std::vector<DetectionMetrics> out;
  for (std::size_t li = 0; li < spec.lengths.size(); ++li) {
    const double len = spec.lengths[li];
    require(len >= 0.0, "peak length must be non-negative");
    const double tau1 = spec.tau1_samples / fs;
    const double tau2 = (spec.tau1_samples + len) / fs;
    require(tau2 + filter.length() < end, "peak does not fit into the trace");
    const StepSignal signal = len > 0.0 ? StepSignal({tau1, tau2}, {spec.open_level, spec.peak_level, spec.open_level}, end)
                                        : StepSignal::constant(spec.open_level, end);

    std::vector<PeakScore> scores(static_cast<std::size_t>(spec.reps));
    std::vector<char> residual_ok(scores.size(), 0);
    parallel_for(scores.size(), settings.threads, [&](std::size_t r) {
      const Trace trace = simulate_trace(signal, filter, spec.noise, spec.n, stream_seed(settings.seed, 1 + li, r));
      const Idealization ideal = idealize(trace, filter, q, settings.gamma2);
      scores[r] = score_peak(ideal.signal, tau1, tau2, m, fs);
      if (scores[r].detected) {
        const long long from = static_cast<long long>(std::floor(spec.tau1_samples)) - m + 1;
        const long long to = static_cast<long long>(std::ceil(spec.tau1_samples + len)) + m - 1;
        residual_ok[r] = residual_rms(trace, ideal.signal, filter, from, to) <= 1.2 * spec.noise.sigma0;
      }
    });

    DetectionMetrics mt;
    mt.length = len;
    mt.reps = spec.reps;
    std::vector<double> t1, t2, lv, lv_trim;
    double fp = 0.0, correct = 0.0, ok = 0.0;
    for (std::size_t r = 0; r < scores.size(); ++r) {
      const auto& s = scores[r];
      fp += s.false_positives;
      correct += s.correct ? 1.0 : 0.0;
      if (!s.detected) continue;
      t1.push_back(s.tau1);
      t2.push_back(s.tau2);
      lv.push_back(s.level);
      if (s.level >= 0.0 && s.level <= 40.0) lv_trim.push_back(s.level);
      ok += residual_ok[r];
    }
    const double reps = static_cast<double>(spec.reps);
    const double detected = static_cast<double>(t1.size());
    mt.correctly_identified = 100.0 * correct / reps;
    mt.detected = 100.0 * detected / reps;
    mt.false_positives = fp / reps;
    mt.true_detection_share = detected + fp > 0.0 ? detected / (detected + fp) : 0.0;
    mt.tau1 = summarize_errors(t1, tau1, fs);
    mt.tau2 = summarize_errors(t2, tau2, fs);
    mt.level = summarize_errors(lv, spec.peak_level);
    mt.level_trimmed = summarize_errors(lv_trim, spec.peak_level);
    mt.residual_ok_share = detected > 0.0 ? ok / detected : 0.0;
    out.push_back(mt);
  }
  return out;
}

std::string to_string(SeparationOutcome o) {
  switch (o) {
    case SeparationOutcome::perfect: return "perfect";
    case SeparationOutcome::no_deconvolution_separation: return "no_deconvolution_separation";
    case SeparationOutcome::no_detection_separation: return "no_detection_separation";
  }
  return "unknown";
}

std::vector<SeparationRow> run_separation(const std::vector<int>& distances, int reps, const StudySettings& settings,
                                          std::size_t n) {
  require(reps >= 1, "need at least one replication");
  const TruncatedFilter filter = settings.filter.build();
  const double fs = filter.sampling_rate();
  const int m = filter.m();
  const double q = critical_value(settings, n, filter);
  const double end = static_cast<double>(n) / fs;
  NoiseModel noise;

  std::vector<SeparationRow> out;
  for (std::size_t di = 0; di < distances.size(); ++di) {
    const int d = distances[di];
    require(d >= 1, "peak distance must be at least one sample");
    const std::vector<double> truth{2000.0 / fs, 2005.0 / fs, (2005.0 + d) / fs, (2010.0 + d) / fs};
    require(truth.back() + filter.length() < end, "peaks do not fit into the trace");
    const StepSignal signal(truth, {40.0, 20.0, 40.0, 20.0, 40.0}, end);

    std::vector<SeparationOutcome> outcomes(static_cast<std::size_t>(reps));
    parallel_for(outcomes.size(), settings.threads, [&](std::size_t r) {
      const Trace trace = simulate_trace(signal, filter, noise, n, stream_seed(settings.seed, 100 + di, r));
      const Idealization ideal = idealize(trace, filter, q, settings.gamma2);
      const auto taus = ideal.detection.change_times();
      const double tol = m / fs;
      outcomes[r] = SeparationOutcome::no_detection_separation;
      for (std::size_t j = 0; j + 3 < taus.size(); ++j) {
        bool match = true;
        for (std::size_t i = 0; i < 4; ++i) match = match && std::abs(taus[j + i] - truth[i]) < tol;
        if (!match) continue;
        const SegmentClass cls = classify_segments(trace, ideal.detection, filter);
        const bool separated = cls.is_long(j) && !cls.is_long(j + 1) && cls.is_long(j + 2) && !cls.is_long(j + 3) &&
                               cls.is_long(j + 4);
        outcomes[r] = separated ? SeparationOutcome::perfect : SeparationOutcome::no_deconvolution_separation;
        break;
      }
    });

    SeparationRow row;
    row.distance = d;
    row.reps = reps;
    for (auto o : outcomes) {
      if (o == SeparationOutcome::perfect) row.perfect += 1.0;
      if (o == SeparationOutcome::no_deconvolution_separation) row.no_deconvolution_separation += 1.0;
      if (o == SeparationOutcome::no_detection_separation) row.no_detection_separation += 1.0;
    }
    row.perfect /= reps;
    row.no_deconvolution_separation /= reps;
    row.no_detection_separation /= reps;
    out.push_back(row);
  }
  return out;
}

std::vector<HmmStudyRow> run_hmm_study(const HmmStudySpec& spec, const StudySettings& settings) {
  require(spec.traces >= 1 && spec.n > 0, "need at least one non-empty trace");
  const TruncatedFilter filter = settings.filter.build();
  const double fs = filter.sampling_rate();
  const double q = critical_value(settings, spec.n, filter);
  const auto& th = spec.thresholds;
  NoiseModel noise;
  noise.sigma0 = spec.noise_sigma;

  std::vector<HmmStudyRow> out;
  for (std::size_t di = 0; di < spec.deltas.size(); ++di) {
    const double delta = spec.deltas[di];
    require(delta >= 0.0, "delta must be non-negative");
    const HmmSpec hmm = HmmSpec::flicker(delta);
    std::vector<EventTable> tables(static_cast<std::size_t>(spec.traces));
    parallel_for(tables.size(), settings.threads, [&](std::size_t t) {
      const std::uint64_t s = stream_seed(settings.seed, 200 + di, t);
      const StepSignal truth = simulate_hmm(hmm, static_cast<double>(spec.n) / fs, derive_seed(s, 0));
      const Trace trace = simulate_trace(truth, filter, noise, spec.n, derive_seed(s, 1));
      tables[t] = extract_events(idealize(trace, filter, q, settings.gamma2), th);
    });

    HmmStudyRow row;
    row.delta = delta;
    for (const auto& table : tables) {
      for (const auto& e : table.events) {
        // Amplitude histograms use every short closing event, whatever its size.
        if (e.dwell >= th.dwell_min && e.dwell <= th.flicker_max) row.amplitudes.push_back(e.amplitude);
        if (e.kind == EventClass::flicker) {
          row.closed_dwells.push_back(e.dwell);
          ++row.flicker_events;
        }
      }
      for (double d : table.distances)
        if (d >= spec.distance_min && d <= spec.distance_max) row.distances.push_back(d);
    }
    if (row.closed_dwells.size() >= 2) {
      row.closed_rate = fit_truncated_exponential(row.closed_dwells, th.dwell_min, th.flicker_max);
    }
    if (row.distances.size() >= 2) {
      row.open_rate = fit_truncated_exponential(row.distances, spec.distance_min, spec.distance_max);
      if (row.open_rate > 0.0) {
        row.open_rate_corrected_same_window =
            missed_event_correction(row.open_rate, spec.distance_min, spec.distance_max);
        if (row.closed_rate > 0.0) {
          row.open_rate_corrected =
              missed_event_correction(row.open_rate, th.dwell_min, th.flicker_max, row.closed_rate);
        }
      }
    }
    if (!row.amplitudes.empty()) {
      row.amplitude_modes = local_modes(density_export(row.amplitudes, spec.kde_bandwidth, DensityKind::gaussian_kde));
    }
    out.push_back(std::move(row));
  }
  return out;
}

std::vector<RobustnessRow> run_robustness(const std::vector<NoiseKind>& kinds, const PeakExperimentSpec& spec,
                                          const StudySettings& settings) {
  std::vector<RobustnessRow> out;
  for (NoiseKind kind : kinds) {
    PeakExperimentSpec s = spec;
    s.noise.kind = kind;
    // Each noise model gets its own replicate streams.
    StudySettings st = settings;
    st.seed = derive_seed(settings.seed, 300 + static_cast<std::uint64_t>(kind));
    if (!st.q) st.q = critical_value(settings, spec.n, settings.filter.build());
    for (auto& m : run_isolated_peak(s, st)) out.push_back({kind, m});
  }
  return out;
}

}  // namespace jules
