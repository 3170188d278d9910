#pragma once

#include <complex>
#include <span>
#include <string>
#include <vector>

namespace jules {

/// Analog lowpass filter in pole/residue form:
///   H(s) = sum_k residues_k / (s - poles_k),  h(t) = sum_k residues_k exp(poles_k t).
/// Normalized to unit DC gain. Immutable after construction.
class AnalogFilter {
 public:
  AnalogFilter(int pole_count, double cutoff_hz, double sampling_rate_hz,
               std::vector<std::complex<double>> poles,
               std::vector<std::complex<double>> residues);

  int pole_count() const { return pole_count_; }
  double cutoff() const { return cutoff_; }
  double sampling_rate() const { return sampling_rate_; }
  std::span<const std::complex<double>> poles() const { return poles_; }
  std::span<const std::complex<double>> residues() const { return residues_; }

  /// Impulse response h(t); zero for t < 0.
  double impulse(double t) const;
  /// Step response, the integral of h over [0, t]; zero for t < 0.
  double step(double t) const;
  /// (h * h)(lag) = integral of h(s) h(s + |lag|) ds, closed form via pole pairs.
  double autocorrelation(double lag) const;
  /// Frequency response H(i omega), omega in rad/s.
  std::complex<double> response(double omega) const;

 private:
  int pole_count_;
  double cutoff_;
  double sampling_rate_;
  std::vector<std::complex<double>> poles_;
  std::vector<std::complex<double>> residues_;
  std::vector<std::complex<double>> acf_weights_;
};

/// Coefficients c_0..c_n (ascending powers) of the reverse Bessel polynomial of order n.
std::vector<double> reverse_bessel_polynomial(int order);

/// n-pole Bessel lowpass filter with its -3 dB point at `cutoff_hz`.
/// Supported pole counts are 2..10; 0 < cutoff < sampling_rate / 2.
AnalogFilter bessel_filter(int pole_count, double cutoff_hz, double sampling_rate_hz);

/// Smallest m such that |acf_j / acf_0| < threshold for every j >= m of the
/// given sequence. Returns acf.size() if the tail never drops below.
int truncation_lag(std::span<const double> acf, double threshold);

/// Kernel truncated at m / f_s and rescaled to unit mass, together with the
/// (directly truncated) autocorrelation of the untruncated filter.
class TruncatedFilter {
 public:
  int m() const { return m_; }
  double sampling_rate() const { return analog_.sampling_rate(); }
  double threshold() const { return threshold_; }
  /// Support length m / f_s in seconds.
  double length() const { return m_ / analog_.sampling_rate(); }
  const AnalogFilter& analog() const { return analog_; }

  /// F_m(t), zero outside [0, m / f_s].
  double kernel(double t) const;
  /// A(t) = integral of F_m over [0, t]; 0 for t <= 0 and 1 for t >= m / f_s.
  double step(double t) const;
  /// Same as step(), with the argument in samples (t * f_s).
  double step_samples(double x) const { return step(x / analog_.sampling_rate()); }

  /// Correlation a_0..a_m normalized so that a_0 = 1; zero beyond lag m.
  std::span<const double> acf() const { return acf_; }
  /// Unnormalized (F * F)(0).
  double acf0() const { return acf0_; }

  /// Stable identifier used for cache keys.
  std::string id() const;

 private:
  friend TruncatedFilter truncate(const AnalogFilter&, double, int);
  TruncatedFilter(AnalogFilter analog, double threshold, int m, double mass,
                  std::vector<double> acf, double acf0)
      : analog_(std::move(analog)), threshold_(threshold), m_(m), mass_(mass),
        acf_(std::move(acf)), acf0_(acf0) {}

  AnalogFilter analog_;
  double threshold_;
  int m_;
  double mass_;  // step response of the untruncated filter at m / f_s
  std::vector<double> acf_;
  double acf0_;
};

/// Truncate at the lag where the normalized autocorrelation stays below
/// `threshold` for good. Throws if that lag exceeds `max_lag`.
TruncatedFilter truncate(const AnalogFilter& filter, double threshold, int max_lag = 200);

/// Filter configuration as carried in config files and JSON.
struct FilterSpec {
  int poles = 4;
  double cutoff_hz = 1000.0;
  double sample_hz = 10000.0;
  double trunc_threshold = 1e-3;

  TruncatedFilter build() const {
    return truncate(bessel_filter(poles, cutoff_hz, sample_hz), trunc_threshold);
  }
};

}  // namespace jules
