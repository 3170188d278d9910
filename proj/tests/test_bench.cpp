#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "jules/bench.hpp"
#include "jules/error.hpp"

using namespace jules;

namespace {

constexpr double kFs = 10000.0;

StepSignal steps(std::vector<double> samples) {
  std::vector<double> times, levels{40.0};
  for (double s : samples) {
    times.push_back(s / kFs);
    levels.push_back(levels.back() == 40.0 ? 20.0 : 40.0);
  }
  return StepSignal(times, levels, 0.4);
}

}  // namespace

TEST_CASE("error summaries") {
  const ErrorSummary s = summarize_errors({1.0, 3.0}, 1.0, 10.0);
  CHECK(s.count == 2);
  CHECK(s.bias == doctest::Approx(10.0));
  CHECK(s.mse == doctest::Approx(200.0));
  CHECK(s.sd == doctest::Approx(10.0));
  CHECK(summarize_errors({}, 0.0).count == 0);
}

TEST_CASE("peak scoring") {
  const double t1 = 2000 / kFs, t2 = 2003 / kFs;
  SUBCASE("exact recovery") {
    const PeakScore s = score_peak(steps({2000.2, 2003.1}), t1, t2, 11, kFs);
    CHECK(s.detected);
    CHECK(s.correct);
    CHECK(s.false_positives == 0.0);
    CHECK(s.level == 20.0);
  }
  SUBCASE("detection plus an extra pair") {
    const PeakScore s = score_peak(steps({500, 520, 2000, 2003}), t1, t2, 11, kFs);
    CHECK(s.detected);
    CHECK_FALSE(s.correct);
    CHECK(s.false_positives == 2.0);
  }
  SUBCASE("a single change next to the peak is a near miss") {
    const PeakScore s = score_peak(steps({2005}), t1, t2, 11, kFs);
    CHECK_FALSE(s.detected);
    CHECK(s.false_positives == 0.0);
  }
  SUBCASE("changes far away are false positives") {
    const PeakScore s = score_peak(steps({100, 3000}), t1, t2, 11, kFs);
    CHECK_FALSE(s.detected);
    CHECK(s.false_positives == 2.0);
  }
  SUBCASE("nothing found") {
    const PeakScore s = score_peak(StepSignal::constant(40.0, 0.4), t1, t2, 11, kFs);
    CHECK_FALSE(s.detected);
    CHECK(s.false_positives == 0.0);
  }
}

TEST_CASE("isolated-peak study is reproducible and independent of threads") {
  PeakExperimentSpec spec;
  spec.lengths = {3.0, 7.5};
  spec.reps = 12;
  StudySettings a;
  a.q = 1.3;
  a.threads = 1;
  StudySettings b = a;
  b.threads = 3;
  const auto ra = run_isolated_peak(spec, a);
  const auto rb = run_isolated_peak(spec, b);
  REQUIRE(ra.size() == 2);
  for (std::size_t i = 0; i < ra.size(); ++i) {
    CHECK(ra[i].correctly_identified == rb[i].correctly_identified);
    CHECK(ra[i].tau1.mse == rb[i].tau1.mse);
    CHECK(ra[i].level.bias == rb[i].level.bias);
  }
  // A long peak is found every time and its level is well determined.
  CHECK(ra[1].detected == 100.0);
  CHECK(ra[1].correctly_identified >= 90.0);
  CHECK(std::abs(ra[1].level.bias) < 1.0);
  CHECK(ra[1].level_trimmed.count <= ra[1].level.count);
}

TEST_CASE("separation study on a wide gap") {
  StudySettings s;
  s.q = 1.3;
  const auto rows = run_separation({60}, 10, s);
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].perfect + rows[0].no_deconvolution_separation + rows[0].no_detection_separation ==
        doctest::Approx(1.0));
  CHECK(rows[0].perfect >= 0.9);
  CHECK(to_string(SeparationOutcome::perfect) == "perfect");
}

TEST_CASE("HMM study produces rates on a short trace") {
  HmmStudySpec spec;
  spec.deltas = {4.0};
  spec.traces = 1;
  spec.n = 200000;
  StudySettings s;
  s.q = 1.3;
  const auto rows = run_hmm_study(spec, s);
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].flicker_events > 20);
  CHECK(rows[0].closed_rate > 400.0);
  CHECK(rows[0].closed_rate < 1600.0);
  CHECK(rows[0].open_rate_corrected >= rows[0].open_rate);
}

TEST_CASE("robustness study covers every requested noise kind") {
  PeakExperimentSpec spec;
  spec.lengths = {5.0};
  spec.reps = 4;
  StudySettings s;
  s.q = 1.3;
  const auto rows = run_robustness({NoiseKind::violet_mix, NoiseKind::heterogeneous}, spec, s);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].kind == NoiseKind::violet_mix);
  CHECK(rows[1].metrics.reps == 4);
}

TEST_CASE("study arguments are validated") {
  PeakExperimentSpec spec;
  spec.reps = 0;
  CHECK_THROWS_AS(run_isolated_peak(spec, StudySettings{}), InvalidArgument);
}
