// Command-line front end: simulate, quantile, detect, idealize, analyze, bench.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "jules/analysis.hpp"
#include "jules/bench.hpp"
#include "jules/deconv.hpp"
#include "jules/detect.hpp"
#include "jules/error.hpp"
#include "jules/io.hpp"
#include "jules/noise_sim.hpp"
#include "jules/random.hpp"

using json = nlohmann::ordered_json;
using namespace jules;

namespace {

struct Common {
  FilterSpec filter;
  int threads = 0;
  bool json = false;
  std::uint64_t seed = 1;
};

void add_filter_options(CLI::App& app, Common& c) {
  app.add_option("--poles", c.filter.poles, "Bessel filter pole count")->capture_default_str();
  app.add_option("--cutoff", c.filter.cutoff_hz, "filter cutoff (Hz, -3 dB)")->capture_default_str();
  app.add_option("--sample-hz", c.filter.sample_hz, "sampling rate (Hz)")->capture_default_str();
  app.add_option("--trunc-threshold", c.filter.trunc_threshold, "autocorrelation truncation threshold")
      ->capture_default_str();
}

void add_detection_options(CLI::App& app, DetectionConfig& d, std::string& intervals) {
  app.add_option("--alpha", d.alpha, "error level of the multiresolution test")->capture_default_str();
  app.add_option("--q", d.q, "explicit critical value (skips Monte Carlo)");
  app.add_option("--reps", d.mc_reps, "Monte Carlo repetitions for the critical value")->capture_default_str();
  app.add_option("--sigma", d.sigma, "known noise level (estimated when absent)");
  app.add_option("--max-changes", d.max_changes, "upper bound on the number of changes");
  app.add_option("--intervals", intervals, "interval system: dyadic or all")->capture_default_str();
}

json filter_json(const TruncatedFilter& f, const FilterSpec& spec) {
  return {{"type", "bessel"},          {"poles", spec.poles},
          {"cutoff_hz", spec.cutoff_hz}, {"sample_hz", spec.sample_hz},
          {"trunc_threshold", spec.trunc_threshold}, {"m", f.m()}};
}

json metrics_json(const DetectionMetrics& m) {
  auto err = [](const ErrorSummary& e) { return json{{"mse", e.mse}, {"bias", e.bias}, {"sd", e.sd}, {"n", e.count}}; };
  return {{"length", m.length},
          {"reps", m.reps},
          {"correctly_identified_pct", m.correctly_identified},
          {"detected_pct", m.detected},
          {"false_positives_mean", m.false_positives},
          {"true_detection_share", m.true_detection_share},
          {"tau1", err(m.tau1)},
          {"tau2", err(m.tau2)},
          {"level", err(m.level)},
          {"level_trimmed", err(m.level_trimmed)}};
}

void write_metrics_csv(std::ostream& out, const std::vector<DetectionMetrics>& rows, const std::string& prefix_col = "",
                       const std::vector<std::string>& prefix = {}) {
  if (!prefix_col.empty()) out << prefix_col << ',';
  out << "length,correctly_identified_pct,detected_pct,false_positives_mean,true_detection_share,"
         "tau1_mse_fs2,tau1_bias_fs,tau1_sd_fs,tau2_mse_fs2,tau2_bias_fs,tau2_sd_fs,"
         "level_mse,level_bias,level_sd,level_trim_mse,level_trim_bias,level_trim_sd\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& m = rows[i];
    if (!prefix_col.empty()) out << prefix[i] << ',';
    out << m.length << ',' << m.correctly_identified << ',' << m.detected << ',' << m.false_positives << ','
        << m.true_detection_share << ',' << m.tau1.mse << ',' << m.tau1.bias << ',' << m.tau1.sd << ',' << m.tau2.mse
        << ',' << m.tau2.bias << ',' << m.tau2.sd << ',' << m.level.mse << ',' << m.level.bias << ',' << m.level.sd
        << ',' << m.level_trimmed.mse << ',' << m.level_trimmed.bias << ',' << m.level_trimmed.sd << '\n';
  }
}

// Writes to `path`, or stdout when the path is empty or "-".
template <class Fn>
void with_output(const std::string& path, Fn&& fn) {
  if (path.empty() || path == "-") {
    fn(std::cout);
    return;
  }
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  fn(out);
  if (!out) throw IoError("failed writing '" + path + "'");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Idealization of filtered piecewise-constant recordings (JULES)"};
  app.require_subcommand(1);
  app.set_config("--config", "", "read options from a TOML/INI file; flags override it");
  Common c;
  app.add_option("--threads", c.threads, "worker threads (0 = all cores)")->capture_default_str();
  app.add_flag("--json", c.json, "print a machine-readable summary to stdout");
  app.add_option("--seed", c.seed, "random seed")->capture_default_str();
  add_filter_options(app, c);

  // simulate
  auto* sim = app.add_subcommand("simulate", "simulate a filtered, noisy trace");
  std::string sim_out, sim_truth, sim_signal, sim_noise = "white", sim_format;
  std::size_t sim_n = 4000;
  std::optional<double> sim_peak, sim_hmm;
  NoiseModel noise;
  sim->add_option("--out", sim_out, "trace output (.csv, or .bin for binary)")->required();
  sim->add_option("--truth", sim_truth, "write the true signal as StepSignal CSV");
  sim->add_option("--n", sim_n, "number of samples")->capture_default_str();
  sim->add_option("--signal", sim_signal, "StepSignal CSV to simulate from");
  sim->add_option("--peak", sim_peak, "isolated 40/20/40 peak of this many samples at sample 2000");
  sim->add_option("--hmm", sim_hmm, "flicker HMM with this closed-level difference (pS)");
  sim->add_option("--noise", sim_noise, "white, violet, pink or heterogeneous")->capture_default_str();
  sim->add_option("--sigma0", noise.sigma0, "marginal noise SD")->capture_default_str();
  sim->add_option("--mix-fraction", noise.mix_fraction, "variance share of violet/pink noise")->capture_default_str();
  sim->add_option("--event-sigma", noise.event_sigma, "noise SD inside events (heterogeneous)")->capture_default_str();
  sim->add_option("--format", sim_format, "csv or binary (default from extension)");

  // quantile
  auto* qua = app.add_subcommand("quantile", "Monte Carlo critical value of the multiresolution test");
  std::size_t q_n = 4000;
  double q_alpha = 0.05;
  int q_reps = 10000;
  std::string q_intervals = "dyadic";
  qua->add_option("--n", q_n, "number of observations")->capture_default_str();
  qua->add_option("--alpha", q_alpha, "error level")->capture_default_str();
  qua->add_option("--reps", q_reps, "Monte Carlo repetitions")->capture_default_str();
  qua->add_option("--intervals", q_intervals, "dyadic or all")->capture_default_str();

  // detect / idealize share their options
  DetectionConfig det_cfg;
  std::string det_in, det_out, det_intervals = "dyadic";
  double gamma2 = 1.0;
  double fallback_rate = 0.0;
  auto* det = app.add_subcommand("detect", "detection step only: segmentation plus postfilter");
  det->add_option("trace", det_in, "trace file (CSV or binary)")->required();
  det->add_option("--out", det_out, "segmentation CSV (stdout if absent)");
  add_detection_options(*det, det_cfg, det_intervals);
  auto* ide = app.add_subcommand("idealize", "full pipeline: detection plus local deconvolution");
  ide->add_option("trace", det_in, "trace file (CSV or binary)")->required();
  ide->add_option("--out", det_out, "idealization CSV (stdout if absent)");
  ide->add_option("--gamma2", gamma2, "Tikhonov regularization of the covariance")->capture_default_str();
  add_detection_options(*ide, det_cfg, det_intervals);
  for (auto* sub : {det, ide})
    sub->add_option("--input-rate", fallback_rate, "sampling rate for CSV traces without a sample_hz comment");

  // analyze
  auto* ana = app.add_subcommand("analyze", "events, dwell-time fits and densities of an idealization");
  std::string ana_in, ana_events, ana_density, ana_density_kind = "gaussian_kde";
  EventThresholds th;
  double ana_bandwidth = 2.0, dist_min = 0.032, dist_max = 1.0;
  ana->add_option("idealization", ana_in, "idealization CSV")->required();
  ana->add_option("--events", ana_events, "events CSV output");
  ana->add_option("--density", ana_density, "amplitude density CSV output (flicker events)");
  ana->add_option("--density-kind", ana_density_kind, "histogram or gaussian_kde")->capture_default_str();
  ana->add_option("--bandwidth", ana_bandwidth, "bin width or KDE bandwidth (pS)")->capture_default_str();
  ana->add_option("--flicker-max", th.flicker_max, "longest flicker dwell (s)")->capture_default_str();
  ana->add_option("--dwell-min", th.dwell_min, "shortest reliably detected dwell (s)")->capture_default_str();
  ana->add_option("--slow-min", th.slow_min, "dwell above which events are slow (s)")->capture_default_str();
  ana->add_option("--amp-min", th.amp_min, "smallest flicker amplitude")->capture_default_str();
  ana->add_option("--amp-max", th.amp_max, "largest flicker amplitude")->capture_default_str();
  ana->add_option("--distance-min", dist_min, "lower end of the distance fit window (s)")->capture_default_str();
  ana->add_option("--distance-max", dist_max, "upper end of the distance fit window (s)")->capture_default_str();

  // bench
  auto* ben = app.add_subcommand("bench", "simulation studies");
  std::string experiment, ben_out;
  int ben_reps = 1000;
  std::vector<double> ben_lengths{2.0, 3.0, 5.0};
  std::vector<int> ben_distances;
  std::vector<double> ben_deltas{2.0, 3.0, 4.0};
  std::vector<std::string> ben_kinds{"violet", "pink", "heterogeneous"};
  std::size_t ben_n = 0;
  int ben_traces = 5;
  double ben_gamma2 = 1.0;
  std::optional<double> ben_q;
  int ben_mc = 10000;
  ben->add_option("experiment", experiment, "isolated-peak, separation, hmm or robustness")
      ->required()
      ->check(CLI::IsMember({"isolated-peak", "separation", "hmm", "robustness"}));
  ben->add_option("--reps", ben_reps, "replications per cell")->capture_default_str();
  ben->add_option("--lengths", ben_lengths, "peak lengths in samples");
  ben->add_option("--distances", ben_distances, "peak distances in samples (separation; default 1..43)");
  ben->add_option("--deltas", ben_deltas, "closed-level differences (hmm)");
  ben->add_option("--kinds", ben_kinds, "noise kinds (robustness)");
  ben->add_option("--n", ben_n, "samples per trace (default 4000, hmm 600000)");
  ben->add_option("--traces", ben_traces, "traces per delta (hmm)")->capture_default_str();
  ben->add_option("--gamma2", ben_gamma2, "Tikhonov regularization")->capture_default_str();
  ben->add_option("--q", ben_q, "fixed critical value");
  ben->add_option("--mc-reps", ben_mc, "Monte Carlo repetitions for the critical value")->capture_default_str();
  ben->add_option("--out", ben_out, "table CSV (stdout if absent)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    const TruncatedFilter filter = c.filter.build();
    json summary;
    summary["command"] = app.get_subcommands().front()->get_name();

    if (*sim) {
      const double fs = filter.sampling_rate();
      const double end = static_cast<double>(sim_n) / fs;
      const int sources = (sim_signal.empty() ? 0 : 1) + (sim_peak ? 1 : 0) + (sim_hmm ? 1 : 0);
      if (sources > 1) throw InvalidArgument("use only one of --signal, --peak, --hmm");
      StepSignal truth = StepSignal::constant(40.0, end);
      if (!sim_signal.empty()) truth = read_step_signal(sim_signal);
      if (sim_peak) truth = StepSignal({2000.0 / fs, (2000.0 + *sim_peak) / fs}, {40.0, 20.0, 40.0}, end);
      if (sim_hmm) truth = simulate_hmm(HmmSpec::flicker(*sim_hmm), end, derive_seed(c.seed, 0));
      noise.kind = parse_noise_kind(sim_noise);
      const Trace trace = simulate_trace(truth, filter, noise, sim_n, c.seed);
      const TraceFormat fmt = sim_format.empty() ? guess_trace_format(sim_out)
                              : sim_format == "binary"  ? TraceFormat::binary
                              : sim_format == "csv"     ? TraceFormat::csv
                                                        : throw InvalidArgument("format must be csv or binary");
      write_trace(sim_out, trace, fmt);
      if (!sim_truth.empty()) write_step_signal(sim_truth, truth);
      summary["n"] = sim_n;
      summary["changes"] = truth.change_count();
      summary["noise"] = to_string(noise.kind);
      summary["out"] = sim_out;
    } else if (*qua) {
      const auto system = parse_interval_system(q_intervals);
      const double q = multiscale_quantile(q_n, filter, q_alpha, q_reps, c.seed, system, c.threads);
      summary["n"] = q_n;
      summary["alpha"] = q_alpha;
      summary["reps"] = q_reps;
      summary["q"] = q;
      if (!c.json) std::printf("%.10g\n", q);
    } else if (*det || *ide) {
      const Trace trace = read_trace(det_in, guess_trace_format(det_in), fallback_rate);
      det_cfg.seed = c.seed;
      det_cfg.intervals = parse_interval_system(det_intervals);
      det_cfg.validate();
      Idealization ideal = [&] {
        if (*ide) return jules::jules(trace, det_cfg, filter, gamma2, c.threads);
        // Detection only: same stages up to the postfilter.
        const double sigma = det_cfg.sigma ? *det_cfg.sigma : estimate_sigma(trace, filter);
        const double q = det_cfg.q ? *det_cfg.q
                                   : multiscale_quantile(trace.size(), filter, det_cfg.alpha, det_cfg.mc_reps,
                                                         c.seed, det_cfg.intervals, c.threads);
        const MultiscaleContext ctx(trace, filter, sigma, det_cfg.intervals);
        const StepSignal seg =
            postfilter(fit_segmentation(trace, ctx, q, {.prune = true, .max_changes = det_cfg.max_changes}), filter);
        return Idealization{seg, std::vector<Provenance>(seg.segment_count(), Provenance::detection_only), sigma, q,
                            0.0, seg};
      }();
      if (det_out.empty() || det_out == "-") {
        if (!c.json) {
          std::printf("segment_start_s,level,provenance\n");
          for (std::size_t k = 0; k < ideal.signal.segment_count(); ++k) {
            std::printf("%.17g,%.17g,%s\n", k == 0 ? 0.0 : ideal.signal.change_times()[k - 1],
                        ideal.signal.levels()[k], to_string(ideal.provenance[k]).c_str());
          }
        }
      } else {
        write_idealization(det_out, ideal, trace.sampling_rate());
      }
      summary["n"] = trace.size();
      summary["segments"] = ideal.signal.segment_count();
      summary["sigma_hat"] = ideal.sigma_hat;
      summary["q"] = ideal.q_used;
      if (*ide) summary["gamma2"] = ideal.gamma2;
      summary["filter"] = filter_json(filter, c.filter);
    } else if (*ana) {
      const Idealization ideal = read_idealization(ana_in);
      const EventTable table = extract_events(ideal, th);
      if (!ana_events.empty()) {
        with_output(ana_events, [&](std::ostream& out) {
          out << "start_s,dwell_s,amplitude,class\n";
          out.precision(17);
          for (const auto& e : table.events)
            out << e.start << ',' << e.dwell << ',' << e.amplitude << ',' << to_string(e.kind) << '\n';
        });
      }
      const auto dwells = table.dwells(EventClass::flicker);
      std::vector<double> distances;
      for (double d : table.distances)
        if (d >= dist_min && d <= dist_max) distances.push_back(d);
      json fits;
      fits["flicker_events"] = dwells.size();
      fits["slow_events"] = table.dwells(EventClass::slow).size();
      fits["events"] = table.events.size();
      std::optional<double> closed_rate;
      if (dwells.size() >= 2) {
        closed_rate = fit_truncated_exponential(dwells, th.dwell_min, th.flicker_max);
        fits["closed_rate_per_s"] = *closed_rate;
      }
      fits["distances_in_window"] = distances.size();
      if (distances.size() >= 2) {
        const double open = fit_truncated_exponential(distances, dist_min, dist_max);
        fits["open_rate_per_s"] = open;
        if (open > 0.0) {
          fits["open_rate_corrected_same_window"] = missed_event_correction(open, dist_min, dist_max);
          if (closed_rate && *closed_rate > 0.0)
            fits["open_rate_corrected"] = missed_event_correction(open, th.dwell_min, th.flicker_max, *closed_rate);
        }
      }
      if (!ana_density.empty()) {
        const auto amps = table.amplitudes(EventClass::flicker);
        if (amps.empty()) throw InvalidArgument("no flicker events to estimate a density from");
        const DensityCurve curve = density_export(amps, ana_bandwidth, parse_density_kind(ana_density_kind));
        with_output(ana_density, [&](std::ostream& out) {
          out << (curve.count.empty() ? "x,density\n" : "x,count,density\n");
          for (std::size_t i = 0; i < curve.x.size(); ++i) {
            out << curve.x[i] << ',';
            if (!curve.count.empty()) out << curve.count[i] << ',';
            out << curve.density[i] << '\n';
          }
        });
      }
      summary["fits"] = fits;
      if (!c.json) std::cout << fits.dump(2) << '\n';
    } else if (*ben) {
      StudySettings st;
      st.filter = c.filter;
      st.seed = c.seed;
      st.threads = c.threads;
      st.gamma2 = ben_gamma2;
      st.q = ben_q;
      st.mc_reps = ben_mc;
      PeakExperimentSpec peak;
      peak.reps = ben_reps;
      peak.lengths = ben_lengths;
      if (ben_n > 0) peak.n = ben_n;
      json rows = json::array();
      if (experiment == "isolated-peak") {
        const auto res = run_isolated_peak(peak, st);
        with_output(ben_out, [&](std::ostream& out) {
          if (!c.json || !ben_out.empty()) write_metrics_csv(out, res);
        });
        for (const auto& m : res) rows.push_back(metrics_json(m));
      } else if (experiment == "robustness") {
        std::vector<NoiseKind> kinds;
        for (const auto& k : ben_kinds) kinds.push_back(parse_noise_kind(k));
        const auto res = run_robustness(kinds, peak, st);
        std::vector<DetectionMetrics> ms;
        std::vector<std::string> names;
        for (const auto& r : res) {
          ms.push_back(r.metrics);
          names.push_back(to_string(r.kind));
          auto j = metrics_json(r.metrics);
          j["noise"] = to_string(r.kind);
          rows.push_back(j);
        }
        with_output(ben_out, [&](std::ostream& out) {
          if (!c.json || !ben_out.empty()) write_metrics_csv(out, ms, "noise", names);
        });
      } else if (experiment == "separation") {
        if (ben_distances.empty())
          for (int d = 1; d <= 43; ++d) ben_distances.push_back(d);
        const auto res = run_separation(ben_distances, ben_reps, st, ben_n > 0 ? ben_n : 4000);
        with_output(ben_out, [&](std::ostream& out) {
          if (c.json && ben_out.empty()) return;
          out << "distance,perfect,no_deconvolution_separation,no_detection_separation\n";
          for (const auto& r : res)
            out << r.distance << ',' << r.perfect << ',' << r.no_deconvolution_separation << ','
                << r.no_detection_separation << '\n';
        });
        for (const auto& r : res)
          rows.push_back({{"distance", r.distance},
                          {"perfect", r.perfect},
                          {"no_deconvolution_separation", r.no_deconvolution_separation},
                          {"no_detection_separation", r.no_detection_separation}});
      } else {
        HmmStudySpec hs;
        hs.deltas = ben_deltas;
        hs.traces = ben_traces;
        if (ben_n > 0) hs.n = ben_n;
        const auto res = run_hmm_study(hs, st);
        with_output(ben_out, [&](std::ostream& out) {
          if (c.json && ben_out.empty()) return;
          out << "delta,flicker_events,closed_rate_per_ms,open_rate_per_s,open_rate_corrected_per_s,"
                 "open_rate_corrected_same_window_per_s,mode1,mode2\n";
          for (const auto& r : res) {
            out << r.delta << ',' << r.flicker_events << ',' << r.closed_rate / 1000.0 << ',' << r.open_rate << ','
                << r.open_rate_corrected << ',' << r.open_rate_corrected_same_window << ','
                << (r.amplitude_modes.size() > 0 ? r.amplitude_modes[0] : 0.0) << ','
                << (r.amplitude_modes.size() > 1 ? r.amplitude_modes[1] : 0.0) << '\n';
          }
        });
        for (const auto& r : res)
          rows.push_back({{"delta", r.delta},
                          {"flicker_events", r.flicker_events},
                          {"closed_rate_per_ms", r.closed_rate / 1000.0},
                          {"open_rate_per_s", r.open_rate},
                          {"open_rate_corrected_per_s", r.open_rate_corrected},
                          {"amplitude_modes", r.amplitude_modes}});
      }
      summary["experiment"] = experiment;
      summary["rows"] = rows;
    }

    if (c.json) std::cout << summary.dump(2) << '\n';
    return 0;
  } catch (const InvalidArgument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const IoError& e) {
    std::fprintf(stderr, "I/O error: %s\n", e.what());
    return 3;
  } catch (const NumericalError& e) {
    std::fprintf(stderr, "numerical error: %s\n", e.what());
    return 4;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
