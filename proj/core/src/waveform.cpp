#include "resotube/waveform.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace resotube::excitation {

namespace {

constexpr double two_pi = 2.0 * std::numbers::pi;

/// Real DFT of one period. Returns n/2+1 (even n) or (n+1)/2 (odd n)
/// harmonics; [0] is the mean. Uses a shared twiddle table so the O(n^2)
/// sum stays cheap for the ~10^4-sample periods used here.
std::vector<Harmonic> analyze(std::span<const double> v) {
  const std::size_t n = v.size();
  std::vector<double> cos_tab(n), sin_tab(n);
  for (std::size_t j = 0; j < n; ++j) {
    cos_tab[j] = std::cos(two_pi * static_cast<double>(j) / static_cast<double>(n));
    sin_tab[j] = std::sin(two_pi * static_cast<double>(j) / static_cast<double>(n));
  }

  // includes DC; for odd n the highest harmonic is (n-1)/2
  std::vector<Harmonic> h((n % 2 == 0) ? n / 2 + 1 : (n + 1) / 2);

  double mean = 0.0;
  for (double s : v) mean += s;
  h[0] = {mean / static_cast<double>(n), 0.0};

  for (std::size_t k = 1; k < h.size(); ++k) {
    double a = 0.0, b = 0.0;
    std::size_t idx = 0;
    for (std::size_t j = 0; j < n; ++j) {
      a += v[j] * cos_tab[idx];
      b += v[j] * sin_tab[idx];
      idx += k;
      if (idx >= n) idx -= n;
    }
    const bool nyquist = (n % 2 == 0) && (k == n / 2);
    const double scale = nyquist ? 1.0 / static_cast<double>(n) : 2.0 / static_cast<double>(n);
    h[k] = {a * scale, nyquist ? 0.0 : b * scale};
  }
  return h;
}

double synthesize(std::span<const Harmonic> h, double theta) {
  double v = h.empty() ? 0.0 : h[0].a;
  for (std::size_t k = 1; k < h.size(); ++k) {
    const double arg = static_cast<double>(k) * theta;
    v += h[k].a * std::cos(arg) + h[k].b * std::sin(arg);
  }
  return v;
}

} // namespace

void RosenbergParams::validate() const {
  if (!(f0 > 0.0)) throw std::invalid_argument("f0 must be > 0");
  if (!(amplitude > 0.0)) throw std::invalid_argument("amplitude must be > 0");
  if (!(oq > 0.0 && cq > 0.0)) throw std::invalid_argument("oq and cq must be > 0");
  if (!(oq + cq <= 1.0)) throw std::invalid_argument("oq + cq must not exceed 1");
  if (!(cutoff > f0)) throw std::invalid_argument("cutoff must exceed f0");
}

PeriodicWaveform::PeriodicWaveform(double f0, std::vector<double> samples)
    : f0_(f0), samples_(std::move(samples)) {
  if (!(f0_ > 0.0)) throw std::invalid_argument("f0 must be > 0");
  if (samples_.empty()) throw std::invalid_argument("waveform has no samples");
  harmonics_ = analyze(samples_);
}

PeriodicWaveform::PeriodicWaveform(double f0, std::vector<Harmonic> harmonics, std::size_t n_samples)
    : f0_(f0), harmonics_(std::move(harmonics)) {
  if (!(f0_ > 0.0)) throw std::invalid_argument("f0 must be > 0");
  if (harmonics_.empty()) throw std::invalid_argument("waveform has no harmonics");
  if (n_samples == 0) throw std::invalid_argument("waveform needs at least one sample");
  samples_.resize(n_samples);
  for (std::size_t j = 0; j < n_samples; ++j) {
    samples_[j] = synthesize(harmonics_, two_pi * static_cast<double>(j) / static_cast<double>(n_samples));
  }
}

double PeriodicWaveform::sample(double t) const {
  const double T = period();
  double tau = std::fmod(t, T);
  if (tau < 0.0) tau += T;
  return synthesize(harmonics_, two_pi * tau * f0_);
}

double PeriodicWaveform::max_abs() const {
  double m = 0.0;
  for (double s : samples_) m = std::max(m, std::abs(s));
  return m;
}

double PeriodicWaveform::stddev() const {
  double mean = 0.0;
  for (double s : samples_) mean += s;
  mean /= static_cast<double>(samples_.size());
  double var = 0.0;
  for (double s : samples_) var += (s - mean) * (s - mean);
  return std::sqrt(var / static_cast<double>(samples_.size()));
}

double rosenberg_pulse(double t, const RosenbergParams& params) {
  params.validate();
  const double T = 1.0 / params.f0;
  double tau = std::fmod(t, T);
  if (tau < 0.0) tau += T;
  const double Tp = params.oq * T;
  const double Tn = params.cq * T;
  if (tau < Tp) {
    return params.amplitude * 0.5 * (1.0 - std::cos(std::numbers::pi * tau / Tp));
  }
  if (tau < Tp + Tn) {
    return params.amplitude * std::cos(std::numbers::pi * (tau - Tp) / (2.0 * Tn));
  }
  return 0.0;
}

PeriodicWaveform bandlimit(const PeriodicWaveform& w, double cutoff) {
  if (!(cutoff > 0.0)) throw std::invalid_argument("cutoff must be > 0");
  std::vector<Harmonic> kept(w.harmonics().begin(), w.harmonics().end());
  for (std::size_t k = 1; k < kept.size(); ++k) {
    if (static_cast<double>(k) * w.f0() > cutoff) kept[k] = {0.0, 0.0};
  }
  // drop trailing zeroed harmonics so sample() stays cheap for filtered signals
  std::size_t last = kept.size();
  while (last > 1 && kept[last - 1].a == 0.0 && kept[last - 1].b == 0.0) --last;
  kept.resize(last);
  return PeriodicWaveform(w.f0(), std::move(kept), w.size());
}

PeriodicWaveform make_rosenberg(const RosenbergParams& params, std::size_t n_samples) {
  params.validate();
  std::vector<double> v(n_samples);
  const double T = 1.0 / params.f0;
  for (std::size_t j = 0; j < n_samples; ++j) {
    v[j] = rosenberg_pulse(T * static_cast<double>(j) / static_cast<double>(n_samples), params);
  }
  return bandlimit(PeriodicWaveform(params.f0, std::move(v)), params.cutoff);
}

} // namespace resotube::excitation
