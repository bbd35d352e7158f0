#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <vector>

#include "gsw/fft.hpp"
#include "gsw/rng.hpp"
#include "gsw/sde.hpp"

// Measurement chain: spectral bandpass, asymmetric Mach-Zehnder
// interferometer, bandwidth-limited photodiode with electronic noise, and
// an 8-bit digitizer. All stages are pure transformations of traces.

namespace gsw {

struct IntensityTrace {
  std::vector<double> samples;  // non-negative power values
  double dt = 0.0;
  double t0 = 0.0;
};

struct VoltageTrace {
  std::vector<double> samples;
  double dt = 0.0;
  double t0 = 0.0;
};

struct ADCTrace {
  std::vector<uint16_t> codes;
  double sample_rate = 0.0;
  int bits = 8;
  double volts_per_code = 1.0;
  double v_lo = 0.0;   // voltage mapped to code 0
  double t0 = 0.0;
};

// One scalar sample per pulse period, the input to all statistics.
struct PulseSamples {
  std::vector<double> values;
  double rep_rate = 0.0;
  bool quantized = false;
  int bits = 8;
  double lsb = 1.0;
};

struct FullScale {
  double lo = 0.0;
  double hi = 1.0;
};

// --- filter magnitude responses -------------------------------------------

// Super-Gaussian passband of the given order; `bandwidth` is the full -3 dB
// width in power.
inline double supergauss_bandpass_gain(double f, double center, double bandwidth,
                                       int order = 4) {
  const double u = 2.0 * (f - center) / bandwidth;
  double u2n = 1.0;
  for (int k = 0; k < order; ++k) u2n *= u * u;
  return std::exp2(-0.5 * u2n);
}

// 4th-order Bessel low-pass magnitude, -3 dB at f3db. Applied zero-phase.
inline double bessel4_lowpass_gain(double f, double f3db) {
  constexpr double kBessel4Cut = 2.113917675;  // normalized -3 dB frequency
  const double w = kBessel4Cut * std::abs(f) / f3db;
  const double w2 = w * w;
  const double re = (w2 - 45.0) * w2 + 105.0;
  const double im = (105.0 - 10.0 * w2) * w;
  return 105.0 / std::sqrt(re * re + im * im);
}

namespace detail {

// Frequency-domain multiply on a zero-padded copy; output truncated back to
// the input length. Wrap-around transients are confined to roughly the
// filter response time at both ends; callers that stream blocks keep guard
// regions (see pipeline).
template <typename GainFn>
void apply_gain_complex(std::vector<std::complex<double>>& x, double dt, GainFn gain) {
  const size_t n = x.size();
  const size_t nfft = fft::next_pow2(n);
  x.resize(nfft, {0.0, 0.0});
  fft::forward(x);
  for (size_t k = 0; k < nfft; ++k) x[k] *= gain(fft::bin_freq(k, nfft, dt));
  fft::inverse(x);
  x.resize(n);
}

template <typename GainFn>
void apply_gain_real(std::vector<double>& v, double dt, GainFn gain) {
  std::vector<std::complex<double>> x(v.begin(), v.end());
  apply_gain_complex(x, dt, gain);
  for (size_t i = 0; i < v.size(); ++i) v[i] = x[i].real();
}

}  // namespace detail

// --- chain stages ----------------------------------------------------------

// Spectral bandpass: 4th-order Gaussian passband centered at `center_offset`
// relative to the field's rotating frame.
inline FieldTrace bandpass_filter(const FieldTrace& trace, double center_offset,
                                  double bandwidth) {
  if (!(bandwidth > 0)) throw std::invalid_argument("bandpass_filter: bandwidth must be > 0");
  const double nyquist = 0.5 / trace.dt;
  if (0.5 * bandwidth + std::abs(center_offset) >= nyquist)
    throw std::invalid_argument("bandpass_filter: passband exceeds representable band");
  FieldTrace out = trace;
  detail::apply_gain_complex(out.samples, trace.dt, [&](double f) {
    return supergauss_bandpass_gain(f, center_offset, bandwidth);
  });
  return out;
}

// Interfere the trace with a delayed copy of itself:
// I(t) = 1/4 |E(t) + e^{i trim} E(t - delay)|^2. The first `delay` worth of
// samples is dropped. `delay` must land on the sample grid.
inline IntensityTrace amzi_interfere(const FieldTrace& trace, double delay,
                                     double phase_trim = 0.0) {
  const long k = std::lround(delay / trace.dt);
  if (k < 1 || static_cast<size_t>(k) >= trace.samples.size())
    throw std::invalid_argument("amzi_interfere: trace shorter than delay");
  const std::complex<double> rot = std::polar(1.0, phase_trim);
  IntensityTrace out;
  out.dt = trace.dt;
  out.t0 = trace.t0 + static_cast<double>(k) * trace.dt;
  out.samples.resize(trace.samples.size() - static_cast<size_t>(k));
  for (size_t i = 0; i < out.samples.size(); ++i)
    out.samples[i] = 0.25 * std::norm(trace.samples[i + k] + rot * trace.samples[i]);
  return out;
}

// Photodiode: responsivity-scaled intensity through a 4th-order Bessel-like
// low-pass, plus additive white Gaussian electronic noise of the given RMS.
inline VoltageTrace photodiode_detect(const IntensityTrace& trace, double bandwidth,
                                      double noise_rms, NoiseStream& rng,
                                      double responsivity = 1.0) {
  if (!(bandwidth > 0)) throw std::invalid_argument("photodiode_detect: bandwidth must be > 0");
  VoltageTrace out;
  out.dt = trace.dt;
  out.t0 = trace.t0;
  out.samples.resize(trace.samples.size());
  for (size_t i = 0; i < out.samples.size(); ++i)
    out.samples[i] = responsivity * trace.samples[i];
  detail::apply_gain_real(out.samples, trace.dt,
                          [&](double f) { return bessel4_lowpass_gain(f, bandwidth); });
  if (noise_rms > 0)
    for (auto& v : out.samples) v += noise_rms * rng.next_gaussian();
  return out;
}

// Oscilloscope front end: optional low-pass (scope_bandwidth = 0 disables),
// nearest-sample decimation onto the t = j/sample_rate grid, clip to full
// scale and uniform quantization.
inline ADCTrace digitize(const VoltageTrace& trace, double sample_rate, int bits,
                         FullScale full_scale, double scope_bandwidth = 0.0) {
  if (!(sample_rate > 0) || sample_rate > 1.0 / trace.dt * (1.0 + 1e-9))
    throw std::invalid_argument("digitize: sample_rate must be positive and decimating");
  if (bits < 1 || bits > 16) throw std::invalid_argument("digitize: bits must be in [1,16]");
  if (!(full_scale.hi > full_scale.lo))
    throw std::invalid_argument("digitize: full_scale must have hi > lo");

  std::vector<double> v = trace.samples;
  if (scope_bandwidth > 0)
    detail::apply_gain_real(v, trace.dt,
                            [&](double f) { return bessel4_lowpass_gain(f, scope_bandwidth); });

  const int max_code = (1 << bits) - 1;
  const double scale = max_code / (full_scale.hi - full_scale.lo);

  ADCTrace out;
  out.sample_rate = sample_rate;
  out.bits = bits;
  out.v_lo = full_scale.lo;
  out.volts_per_code = 1.0 / scale;

  const long j0 = static_cast<long>(std::ceil(trace.t0 * sample_rate - 1e-9));
  out.t0 = static_cast<double>(j0) / sample_rate;
  for (long j = j0;; ++j) {
    const double tj = static_cast<double>(j) / sample_rate;
    const long idx = std::lround((tj - trace.t0) / trace.dt);
    if (idx < 0) continue;
    if (idx >= static_cast<long>(v.size())) break;
    double q = std::round((v[static_cast<size_t>(idx)] - full_scale.lo) * scale);
    q = std::clamp(q, 0.0, static_cast<double>(max_code));
    out.codes.push_back(static_cast<uint16_t>(q));
  }
  return out;
}

struct SampledPulses {
  PulseSamples samples;
  double offset = 0.0;  // chosen in-period sampling offset (s)
};

// Pick one code per pulse period at t = k/rep_rate + offset. Without an
// explicit offset the in-period phase that maximizes the inter-pulse sample
// variance is chosen (the interference-visibility point).
inline SampledPulses sample_at_pulse_centers(const ADCTrace& adc, double rep_rate,
                                             std::optional<double> offset = std::nullopt) {
  const double period = 1.0 / rep_rate;
  const double per_period = adc.sample_rate * period;
  const long p = std::lround(per_period);
  if (std::abs(per_period - static_cast<double>(p)) > 1e-6 || p < 1)
    throw std::invalid_argument("sample_at_pulse_centers: sample_rate must be an integer multiple of rep_rate");
  const long n_pulses = static_cast<long>(adc.codes.size()) / p;
  if (n_pulses < 2) throw std::invalid_argument("sample_at_pulse_centers: fewer than 2 periods");

  long phase = -1;
  if (offset) {
    if (*offset < 0 || *offset >= period)
      throw std::invalid_argument("sample_at_pulse_centers: offset outside [0, period)");
    phase = std::lround(*offset * adc.sample_rate);
    phase = std::clamp<long>(phase, 0, p - 1);
  } else {
    double best = -1.0;
    for (long q = 0; q < p; ++q) {
      double sum = 0, sum2 = 0;
      for (long k = 0; k < n_pulses; ++k) {
        const double c = adc.codes[static_cast<size_t>(k * p + q)];
        sum += c;
        sum2 += c * c;
      }
      const double var = sum2 / n_pulses - (sum / n_pulses) * (sum / n_pulses);
      if (var > best) {
        best = var;
        phase = q;
      }
    }
  }

  SampledPulses out;
  out.offset = static_cast<double>(phase) / adc.sample_rate;
  out.samples.rep_rate = rep_rate;
  out.samples.quantized = true;
  out.samples.bits = adc.bits;
  out.samples.lsb = 1.0;
  out.samples.values.resize(static_cast<size_t>(n_pulses));
  for (long k = 0; k < n_pulses; ++k)
    out.samples.values[static_cast<size_t>(k)] = adc.codes[static_cast<size_t>(k * p + phase)];
  return out;
}

}  // namespace gsw
