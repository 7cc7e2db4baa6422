#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace resotube::excitation {

/// Rosenberg glottal-pulse parameters. oq/cq are the opening/closing phases
/// as fractions of the period.
struct RosenbergParams {
  double f0 = 261.6;      // fundamental [Hz]
  double amplitude = 1.0; // peak particle velocity [m/s]
  double oq = 0.40;
  double cq = 0.16;
  double cutoff = 2000.0; // low-pass cutoff [Hz]

  void validate() const;
};

/// One real Fourier coefficient pair: a*cos(k w0 t) + b*sin(k w0 t).
struct Harmonic {
  double a = 0.0;
  double b = 0.0;
};

/// One period of a uniformly sampled periodic signal together with its
/// Fourier-series coefficients. sample() evaluates the trigonometric
/// interpolant, so the same continuous-time signal is seen no matter how
/// the waveform is later resampled. Immutable.
class PeriodicWaveform {
 public:
  /// Coefficients are computed from the samples (full band).
  PeriodicWaveform(double f0, std::vector<double> samples);
  /// Samples are synthesized from the coefficients on an n-point grid.
  /// harmonics[0] is the DC term (in .a); harmonics[k] has frequency k*f0.
  PeriodicWaveform(double f0, std::vector<Harmonic> harmonics, std::size_t n_samples);

  double f0() const { return f0_; }
  double period() const { return 1.0 / f0_; }
  std::size_t size() const { return samples_.size(); }
  std::span<const double> samples() const { return samples_; }
  std::span<const Harmonic> harmonics() const { return harmonics_; }

  /// Trigonometric-interpolant value at time t (periodic in 1/f0).
  double sample(double t) const;

  double max_abs() const;
  double stddev() const;

 private:
  double f0_;
  std::vector<double> samples_;
  std::vector<Harmonic> harmonics_;
};

/// Raw Rosenberg pulse value at time t (no filtering).
double rosenberg_pulse(double t, const RosenbergParams& params);

/// Zero every harmonic with frequency strictly above cutoff; DC is kept.
PeriodicWaveform bandlimit(const PeriodicWaveform& w, double cutoff);

/// One period of the low-passed Rosenberg wave sampled at n points.
PeriodicWaveform make_rosenberg(const RosenbergParams& params, std::size_t n_samples = 8192);

} // namespace resotube::excitation
