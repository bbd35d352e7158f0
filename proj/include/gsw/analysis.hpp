#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "gsw/fft.hpp"
#include "gsw/model.hpp"
#include "gsw/optics.hpp"
#include "gsw/rng.hpp"
#include "gsw/sde.hpp"

// Statistics over per-pulse samples and field traces: arcsine
// goodness-of-fit, autocorrelation with confidence bounds, optical spectrum
// and comb contrast, timing jitter, conditional min-entropy and Toeplitz
// extraction, plus the simulator-only per-pulse phase oracle.

namespace gsw {

// --- small helpers ----------------------------------------------------------

namespace stats {

inline double mean(std::span<const double> v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

inline double variance(std::span<const double> v) {
  const double m = mean(v);
  double acc = 0;
  for (double x : v) acc += (x - m) * (x - m);
  return acc / static_cast<double>(v.size());
}

// Interpolated quantile of an unsorted copy.
inline double quantile(std::vector<double> v, double p) {
  if (v.empty()) throw std::invalid_argument("quantile: empty input");
  p = std::clamp(p, 0.0, 1.0);
  const double pos = p * static_cast<double>(v.size() - 1);
  const size_t i = static_cast<size_t>(pos);
  std::nth_element(v.begin(), v.begin() + static_cast<long>(i), v.end());
  const double lo = v[i];
  if (i + 1 >= v.size() || pos == static_cast<double>(i)) return lo;
  const double hi = *std::min_element(v.begin() + static_cast<long>(i) + 1, v.end());
  return lo + (pos - static_cast<double>(i)) * (hi - lo);
}

inline double wrap_pi(double x) {
  x = std::fmod(x + kPi, kTwoPi);
  if (x < 0) x += kTwoPi;
  return x - kPi;
}

// Survival function of the Kolmogorov distribution.
inline double kolmogorov_q(double lambda) {
  if (lambda < 0.1) return 1.0;
  double sum = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    sum += (k % 2 == 1 ? term : -term);
    if (term < 1e-14) break;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

// KS statistic of sorted values in [0,1] against their own uniform ranks.
inline double ks_uniform_sorted(const std::vector<double>& u) {
  const double n = static_cast<double>(u.size());
  double d = 0.0;
  for (size_t i = 0; i < u.size(); ++i) {
    d = std::max(d, (static_cast<double>(i) + 1.0) / n - u[i]);
    d = std::max(d, u[i] - static_cast<double>(i) / n);
  }
  return d;
}

// Acklam's inverse normal CDF approximation (~1e-9 relative).
inline double inverse_normal_cdf(double p) {
  if (!(p > 0 && p < 1)) throw std::domain_error("inverse_normal_cdf: p in (0,1) required");
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  const double plow = 0.02425, phigh = 1 - plow;
  double q, r;
  if (p < plow) {
    q = std::sqrt(-2 * std::log(p));
    return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  }
  if (p > phigh) {
    q = std::sqrt(-2 * std::log(1 - p));
    return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  }
  q = p - 0.5;
  r = q * q;
  return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
         (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1);
}

}  // namespace stats

// Arcsine CDF on [0,1].
inline double arcsine_cdf(double x) {
  return (2.0 / kPi) * std::asin(std::sqrt(std::clamp(x, 0.0, 1.0)));
}

// Arcsine quantile on [0,1].
inline double arcsine_quantile(double p) {
  const double s = std::sin(0.5 * kPi * std::clamp(p, 0.0, 1.0));
  return s * s;
}

// --- histogram ---------------------------------------------------------------

struct HistogramResult {
  std::vector<long> counts;
  double lo = 0.0, hi = 0.0;  // edges of the covered range
};

// Bin counts over the ADC range (quantized inputs) or the sample range.
inline HistogramResult histogram(const PulseSamples& s, int n_bins = 256) {
  if (s.values.empty()) throw std::invalid_argument("histogram: empty input");
  if (n_bins < 2) throw std::invalid_argument("histogram: n_bins must be >= 2");
  HistogramResult h;
  if (s.quantized) {
    h.lo = 0.0;
    h.hi = static_cast<double>(1 << s.bits);
  } else {
    auto [mn, mx] = std::minmax_element(s.values.begin(), s.values.end());
    h.lo = *mn;
    h.hi = *mx + 1e-12 * (*mx - *mn + 1.0);
  }
  h.counts.assign(static_cast<size_t>(n_bins), 0);
  const double w = (h.hi - h.lo) / n_bins;
  for (double v : s.values) {
    long b = static_cast<long>((v - h.lo) / w);
    b = std::clamp<long>(b, 0, n_bins - 1);
    ++h.counts[static_cast<size_t>(b)];
  }
  return h;
}

// --- arcsine goodness of fit -------------------------------------------------

enum class GofAnchor { moment_fit, quantile_fit, minmax_trim };

struct GofOptions {
  double trim = 0.001;          // percentile trim for the minmax anchor
  long n_eval = 10000;          // KS evaluated on a deterministic subsample
  bool dither = true;           // add U(-1/2,1/2) LSB to quantized codes
  GofAnchor anchor = GofAnchor::moment_fit;
  uint64_t seed = 0x6a09e667f3bcc908ull;
};

struct GofResult {
  double statistic = 0.0;
  double p_value = 0.0;
  bool pass = false;
  std::string reason;
  double anchor_lo = 0.0, anchor_hi = 0.0;
  long n_used = 0;
};

// Kolmogorov-Smirnov test of the samples against the arcsine law
// F(x) = (2/pi) asin(sqrt(x)) after an affine normalization onto [0,1].
//
// The normalization anchor is estimated from the full sample; the KS
// statistic is evaluated on a deterministic stride subsample of n_eval
// points so the test probes distribution shape at a fixed resolution
// instead of rejecting on micro-distortions at very large n. The
// quantile_fit anchor regresses the sample deciles onto the arcsine
// deciles; minmax_trim uses the trimmed extremes directly.
inline GofResult arcsine_gof_test(const PulseSamples& s, const GofOptions& opt = {}) {
  GofResult res;
  const size_t n = s.values.size();
  if (n < 16) throw std::invalid_argument("arcsine_gof_test: too few samples");

  std::vector<double> x(s.values);
  if (s.quantized && opt.dither) {
    NoiseStream rng(opt.seed, 0);
    for (auto& v : x) v += (rng.next_uniform() - 0.5) * s.lsb;
  }

  const double vmin = *std::min_element(x.begin(), x.end());
  const double vmax = *std::max_element(x.begin(), x.end());
  if (!(vmax > vmin)) {
    res.reason = "degenerate input: zero spread";
    res.pass = false;
    return res;
  }

  double lo, hi;
  if (opt.anchor == GofAnchor::minmax_trim) {
    lo = stats::quantile(x, opt.trim);
    hi = stats::quantile(x, 1.0 - opt.trim);
  } else if (opt.anchor == GofAnchor::moment_fit) {
    // method of moments: arcsine on [lo,hi] has mean (lo+hi)/2 and
    // variance (hi-lo)^2/8
    const double m = stats::mean(x);
    const double sd = std::sqrt(stats::variance(x));
    lo = m - sd * std::sqrt(2.0);
    hi = m + sd * std::sqrt(2.0);
  } else {
    // least-squares fit of deciles q_p = lo + a_p (hi - lo)
    double sa = 0, sq = 0, saa = 0, saq = 0;
    int m = 0;
    for (int k = 1; k <= 9; ++k) {
      const double p = 0.1 * k;
      const double a = arcsine_quantile(p);
      const double q = stats::quantile(x, p);
      sa += a;
      sq += q;
      saa += a * a;
      saq += a * q;
      ++m;
    }
    const double denom = m * saa - sa * sa;
    const double scale = (m * saq - sa * sq) / denom;
    const double loc = (sq - scale * sa) / m;
    lo = loc;
    hi = loc + scale;
  }
  if (!(hi > lo)) {
    res.reason = "degenerate input: anchor collapse";
    res.pass = false;
    return res;
  }
  res.anchor_lo = lo;
  res.anchor_hi = hi;

  const size_t stride = std::max<size_t>(1, n / static_cast<size_t>(opt.n_eval));
  std::vector<double> u;
  u.reserve(std::min<size_t>(n, static_cast<size_t>(opt.n_eval)));
  for (size_t i = 0; i < n && u.size() < static_cast<size_t>(opt.n_eval); i += stride)
    u.push_back(arcsine_cdf((x[i] - lo) / (hi - lo)));
  std::sort(u.begin(), u.end());

  res.n_used = static_cast<long>(u.size());
  res.statistic = stats::ks_uniform_sorted(u);
  const double m = static_cast<double>(u.size());
  const double lambda = (std::sqrt(m) + 0.12 + 0.11 / std::sqrt(m)) * res.statistic;
  res.p_value = stats::kolmogorov_q(lambda);
  res.pass = res.p_value >= 0.01;
  if (!res.pass && res.reason.empty()) res.reason = "KS rejects arcsine law";
  return res;
}

// --- autocorrelation -----------------------------------------------------------

struct AutocorrResult {
  std::vector<double> r;  // r[k-1] is the coefficient at lag k
  double ci99 = 0.0;      // symmetric 99% bound, 2.576/sqrt(n)
  long n = 0;

  double max_abs(int lag_lo, int lag_hi) const {
    double m = 0;
    for (int k = lag_lo; k <= lag_hi && k <= static_cast<int>(r.size()); ++k)
      m = std::max(m, std::abs(r[static_cast<size_t>(k - 1)]));
    return m;
  }
};

// Biased-normalized sample autocorrelation for lags 1..max_lag.
inline AutocorrResult autocorrelation(const PulseSamples& s, int max_lag) {
  const long n = static_cast<long>(s.values.size());
  if (max_lag < 1 || max_lag >= n / 10)
    throw std::invalid_argument("autocorrelation: need 1 <= max_lag < n/10");
  const double m = stats::mean(s.values);
  double den = 0;
  for (double v : s.values) den += (v - m) * (v - m);
  if (!(den > 0)) throw std::invalid_argument("autocorrelation: zero-variance input");

  AutocorrResult out;
  out.n = n;
  out.ci99 = 2.576 / std::sqrt(static_cast<double>(n));
  out.r.resize(static_cast<size_t>(max_lag));
  for (int k = 1; k <= max_lag; ++k) {
    double num = 0;
    for (long i = 0; i + k < n; ++i)
      num += (s.values[static_cast<size_t>(i)] - m) * (s.values[static_cast<size_t>(i + k)] - m);
    out.r[static_cast<size_t>(k - 1)] = num / den;
  }
  return out;
}

// --- optical spectrum -----------------------------------------------------------

struct SpectrumResult {
  std::vector<double> freqs;  // Hz, strictly increasing (baseband, two-sided)
  std::vector<double> psd;    // power spectral density, arbitrary units/Hz
  double comb_contrast = 0.0; // dB, median over probed harmonics
  double tone_spacing = 0.0;  // Hz
  std::vector<double> harmonic_contrast;  // dB per harmonic 1..K
};

// Streaming Welch accumulator: Hann window, 50% overlap.
class WelchAccumulator {
 public:
  WelchAccumulator(size_t segment, double dt) : seg_(segment), dt_(dt) {
    if (segment < 16 || (segment & (segment - 1)) != 0)
      throw std::invalid_argument("WelchAccumulator: segment must be a power of two >= 16");
    window_.resize(seg_);
    double u = 0;
    for (size_t i = 0; i < seg_; ++i) {
      window_[i] = 0.5 * (1.0 - std::cos(kTwoPi * static_cast<double>(i) / static_cast<double>(seg_)));
      u += window_[i] * window_[i];
    }
    win_power_ = u;
    acc_.assign(seg_, 0.0);
  }

  void feed(std::span<const std::complex<double>> x) {
    buf_.insert(buf_.end(), x.begin(), x.end());
    std::vector<std::complex<double>> seg(seg_);
    size_t start = 0;
    while (buf_.size() - start >= seg_) {
      for (size_t i = 0; i < seg_; ++i) seg[i] = buf_[start + i] * window_[i];
      fft::forward(seg);
      for (size_t i = 0; i < seg_; ++i) acc_[i] += std::norm(seg[i]);
      ++n_segments_;
      start += seg_ / 2;
    }
    buf_.erase(buf_.begin(), buf_.begin() + static_cast<long>(start));
  }

  long segments() const { return n_segments_; }

  // Two-sided PSD, frequencies ascending.
  std::pair<std::vector<double>, std::vector<double>> finalize() const {
    if (n_segments_ == 0) throw std::invalid_argument("WelchAccumulator: no complete segment");
    std::vector<double> freqs(seg_), psd(seg_);
    const double norm = dt_ / (win_power_ * static_cast<double>(n_segments_));
    const size_t half = seg_ / 2;
    for (size_t i = 0; i < seg_; ++i) {
      const size_t k = (i + half) % seg_;  // shift negative frequencies first
      freqs[i] = fft::bin_freq(k, seg_, dt_);
      psd[i] = acc_[k] * norm;
    }
    return {freqs, psd};
  }

 private:
  size_t seg_;
  double dt_;
  std::vector<double> window_;
  double win_power_ = 0.0;
  std::vector<double> acc_;
  std::vector<std::complex<double>> buf_;
  long n_segments_ = 0;
};

// Comb contrast. A coherent pulse train with a constant pulse-to-pulse phase
// increment theta carries tones at (m + theta/2pi) * rep_rate, so the common
// fractional offset is estimated first by maximizing the summed tone power;
// each probed harmonic then contributes (peak within one bin of the tone)
// over (median PSD between adjacent tones) in dB, and the scalar contrast is
// the median over the first `n_harmonics` harmonics.
inline void compute_comb_contrast(SpectrumResult& sr, double rep_rate, int n_harmonics = 10) {
  const double df = sr.freqs[1] - sr.freqs[0];
  const double f0 = sr.freqs.front();
  const auto n = sr.freqs.size();
  const double nyq = std::abs(sr.freqs.back());

  auto psd_at = [&](double f) -> double {
    const long i = std::lround((f - f0) / df);
    if (i < 0 || i >= static_cast<long>(n)) return 0.0;
    return sr.psd[static_cast<size_t>(i)];
  };
  auto psd_peak_near = [&](double f) {
    const long i = std::lround((f - f0) / df);
    double peak = 0;
    for (long j = std::max<long>(0, i - 1); j <= std::min<long>(static_cast<long>(n) - 1, i + 1); ++j)
      peak = std::max(peak, sr.psd[static_cast<size_t>(j)]);
    return peak;
  };

  int kmax = 0;
  for (int k = 1; k <= n_harmonics; ++k)
    if ((k + 0.75) * rep_rate < nyq) kmax = k;
  if (kmax == 0) throw std::invalid_argument("comb contrast: no harmonic below Nyquist");

  // fractional tone offset, on the PSD bin grid
  const long bins_per_rep = std::max<long>(1, std::lround(rep_rate / df));
  double best_score = -1.0;
  double offset = 0.0;
  for (long d = 0; d < bins_per_rep; ++d) {
    const double off = static_cast<double>(d) * df;
    double score = 0;
    for (int k = 1; k <= kmax; ++k)
      score += psd_at(k * rep_rate + off) + psd_at(-k * rep_rate + off);
    if (score > best_score) {
      best_score = score;
      offset = off;
    }
  }

  sr.harmonic_contrast.clear();
  std::vector<double> contrasts;
  for (int k = 1; k <= kmax; ++k) {
    const double peak = std::max(psd_peak_near(k * rep_rate + offset),
                                 psd_peak_near(-k * rep_rate + offset));
    std::vector<double> v;
    for (int sign : {-1, 1}) {
      const double fa = sign * (k + 0.25) * rep_rate + offset;
      const double fb = sign * (k + 0.75) * rep_rate + offset;
      const long ia = std::lround((std::min(fa, fb) - f0) / df);
      const long ib = std::lround((std::max(fa, fb) - f0) / df);
      for (long i = std::max<long>(0, ia); i <= std::min<long>(static_cast<long>(n) - 1, ib); ++i)
        v.push_back(sr.psd[static_cast<size_t>(i)]);
    }
    std::nth_element(v.begin(), v.begin() + static_cast<long>(v.size() / 2), v.end());
    const double fl = std::max(v[v.size() / 2], 1e-300);
    const double c = 10.0 * std::log10(std::max(peak, 1e-300) / fl);
    sr.harmonic_contrast.push_back(c);
    contrasts.push_back(c);
  }
  std::nth_element(contrasts.begin(), contrasts.begin() + static_cast<long>(contrasts.size() / 2),
                   contrasts.end());
  sr.comb_contrast = contrasts[contrasts.size() / 2];
  sr.tone_spacing = rep_rate;
}

// Welch periodogram of a complex field trace with comb metrics.
inline SpectrumResult optical_spectrum(const FieldTrace& trace, size_t segment = 16384) {
  if (trace.samples.size() < 65536)
    throw std::invalid_argument("optical_spectrum: trace shorter than 2^16 samples");
  WelchAccumulator acc(segment, trace.dt);
  acc.feed(trace.samples);
  SpectrumResult sr;
  std::tie(sr.freqs, sr.psd) = acc.finalize();
  compute_comb_contrast(sr, trace.rep_rate);
  return sr;
}

// --- timing jitter ----------------------------------------------------------------

struct JitterResult {
  double rms = 0.0;        // s
  long n_pulses = 0;
  long n_missed = 0;
  double threshold = 0.0;  // absolute level used
};

namespace detail {

// Rising-edge crossing phases (radians within the period) across a whole
// trace. A hysteresis band keeps noise ripple from double-counting edges:
// after a crossing the signal must fall below `level - hyst` to re-arm.
inline void collect_crossing_phases(std::span<const double> v, double dt, double period,
                                    double level, double hyst, std::vector<double>& theta) {
  bool armed = v.empty() ? true : v[0] < level;
  for (size_t k = 1; k < v.size(); ++k) {
    if (armed && v[k - 1] < level && v[k] >= level) {
      const double f = (level - v[k - 1]) / (v[k] - v[k - 1]);
      const double t = (static_cast<double>(k - 1) + f) * dt;
      theta.push_back(kTwoPi * std::fmod(t, period) / period);
      armed = false;
    } else if (!armed && v[k] < level - hyst) {
      armed = true;
    }
  }
}

// Circular spread of crossing phases -> RMS jitter in seconds.
inline double circular_rms_seconds(std::span<const double> theta, double period) {
  double cx = 0, cy = 0;
  for (double th : theta) {
    cx += std::cos(th);
    cy += std::sin(th);
  }
  const double mu = std::atan2(cy, cx);
  double acc = 0, accm = 0;
  for (double th : theta) {
    const double d = stats::wrap_pi(th - mu);
    accm += d;
    acc += d * d;
  }
  const double nn = std::max(1.0, static_cast<double>(theta.size()));
  const double var = acc / nn - (accm / nn) * (accm / nn);
  return std::sqrt(std::max(0.0, var)) * period / kTwoPi;
}

}  // namespace detail

// RMS of per-pulse rising-edge threshold-crossing times, modulo the period,
// after unwrapping around the circular mean. The threshold sits at
// `threshold_frac` of the robust amplitude span.
inline JitterResult timing_jitter(const IntensityTrace& trace, double rep_rate,
                                  double threshold_frac = 0.5) {
  if (!(threshold_frac > 0 && threshold_frac < 1))
    throw std::invalid_argument("timing_jitter: threshold_frac must be in (0,1)");
  const double period = 1.0 / rep_rate;
  const long spp = std::lround(period / trace.dt);
  const long n_pulses = static_cast<long>(trace.samples.size()) / spp;
  if (n_pulses < 100) throw std::invalid_argument("timing_jitter: need at least 100 pulses");

  const double lo = stats::quantile(trace.samples, 0.005);
  const double hi = stats::quantile(trace.samples, 0.995);
  const double level = lo + threshold_frac * (hi - lo);

  std::vector<double> theta;
  theta.reserve(static_cast<size_t>(n_pulses));
  detail::collect_crossing_phases(trace.samples, trace.dt, period, level, 0.1 * (hi - lo), theta);

  const long missed = std::max<long>(0, n_pulses - static_cast<long>(theta.size()));
  if (missed > n_pulses / 100)
    throw std::runtime_error("timing_jitter: " + std::to_string(missed) + " of " +
                             std::to_string(n_pulses) + " pulses failed to cross threshold");

  JitterResult out;
  out.rms = detail::circular_rms_seconds(theta, period);
  out.n_pulses = static_cast<long>(theta.size());
  out.n_missed = missed;
  out.threshold = level;
  return out;
}

// --- min-entropy ----------------------------------------------------------------

struct EntropyResult {
  double delta_cd = 0.0;   // width of the arcsine distribution, in LSB
  double delta_bin = 1.0;  // ADC bin width (LSB)
  double h_min = 0.0;      // bits/sample
  double h_min_low = 0.0;  // lower confidence bound
  double confidence = 0.0;
  bool certified = false;  // set by callers once the arcsine test passed
  bool degenerate = false; // delta_cd <= delta_bin
};

// Conditional min-entropy of an arcsine-distributed sample of width delta_cd
// digitized with bin width delta.
inline double min_entropy_bits(double delta_cd, double delta, int adc_bits) {
  if (!(delta > 0)) throw std::domain_error("min_entropy_bits: delta must be > 0");
  if (delta_cd <= delta) return 0.0;
  const double h = -std::log2(1.0 - (2.0 / kPi) * std::atan(std::sqrt((delta_cd - delta) / delta)));
  return std::clamp(h, 0.0, static_cast<double>(adc_bits));
}

struct MinEntropyOptions {
  double trim = 0.001;       // percentile pair defining the width estimate
  int bootstrap_reps = 200;
  double confidence = 0.99999;
  uint64_t seed = 0xbb67ae8584caa73bull;
};

// Width estimated as the trimmed percentile span; confidence bound from a
// normal approximation to the bootstrap distribution of h_min.
inline EntropyResult min_entropy(const PulseSamples& s, int adc_bits,
                                 const MinEntropyOptions& opt = {}) {
  if (s.values.size() < 100) throw std::invalid_argument("min_entropy: too few samples");
  EntropyResult out;
  out.delta_bin = s.lsb;
  out.confidence = opt.confidence;
  out.delta_cd = (stats::quantile(s.values, 1.0 - opt.trim) - stats::quantile(s.values, opt.trim)) / s.lsb;
  out.h_min = min_entropy_bits(out.delta_cd, 1.0, adc_bits);
  out.degenerate = out.delta_cd <= 1.0;

  if (!out.degenerate && opt.bootstrap_reps > 1) {
    NoiseStream rng(opt.seed, 0);
    const size_t n = s.values.size();
    std::vector<double> hs(static_cast<size_t>(opt.bootstrap_reps));
    std::vector<double> resample(n);
    for (int b = 0; b < opt.bootstrap_reps; ++b) {
      for (size_t i = 0; i < n; ++i)
        resample[i] = s.values[static_cast<size_t>(rng.next_u64() % n)];
      const double w = (stats::quantile(resample, 1.0 - opt.trim) -
                        stats::quantile(resample, opt.trim)) / s.lsb;
      hs[static_cast<size_t>(b)] = min_entropy_bits(w, 1.0, adc_bits);
    }
    const double sd = std::sqrt(stats::variance(hs));
    const double z = stats::inverse_normal_cdf(opt.confidence);
    out.h_min_low = std::max(0.0, out.h_min - z * sd);
  } else {
    out.h_min_low = 0.0;
  }
  return out;
}

// --- randomness extraction ---------------------------------------------------------

// Unpack ADC codes into a raw bit array, LSB first within each sample.
inline std::vector<uint8_t> samples_to_bits(const PulseSamples& s) {
  std::vector<uint8_t> bits;
  bits.reserve(s.values.size() * static_cast<size_t>(s.bits));
  for (double v : s.values) {
    const auto c = static_cast<uint32_t>(v);
    for (int b = 0; b < s.bits; ++b) bits.push_back(static_cast<uint8_t>((c >> b) & 1u));
  }
  return bits;
}

struct ExtractionResult {
  std::vector<uint8_t> bits;  // one entry per output bit
  long n_in_bits = 0;
  long n_out_bits = 0;
  double security_eps = 0.0;
};

// Seeded binary Toeplitz extractor applied block-wise (the same seeded
// matrix is reused across blocks, as usual for strong extractors). Total
// output length is floor(n_in * h/bits) - ceil(2 log2(1/eps)); per-block
// lengths carry the fractional entitlement so the total is exact.
//
// With T[i][j] = s[i + n - 1 - j], out_i = parity(window_i(s) AND rev(x))
// where window_i(s) = s[i .. i+n) and rev(x) is the bit-reversed block.
inline ExtractionResult toeplitz_extract(const std::vector<uint8_t>& raw_bits,
                                         double h_min_per_sample, int bits_per_sample,
                                         double security_eps, uint64_t seed) {
  if (!(h_min_per_sample > 0) || h_min_per_sample > bits_per_sample)
    throw std::invalid_argument("toeplitz_extract: h_min must be in (0, bits_per_sample]");
  if (!(security_eps > 0 && security_eps < 1))
    throw std::invalid_argument("toeplitz_extract: security_eps must be in (0,1)");
  const long n_in = static_cast<long>(raw_bits.size());
  const double ratio = h_min_per_sample / static_cast<double>(bits_per_sample);
  const long margin = static_cast<long>(std::ceil(2.0 * std::log2(1.0 / security_eps)));
  const long n_out_total = static_cast<long>(std::floor(static_cast<double>(n_in) * ratio)) - margin;
  if (n_out_total <= 0) throw std::invalid_argument("toeplitz_extract: output length <= 0");

  const long n_blk = std::min<long>(8192, n_in);
  const long m_cap = static_cast<long>(std::floor(n_blk * ratio)) + 2;

  const long n_seed = m_cap + n_blk - 1;
  NoiseStream rng(seed, 0);
  std::vector<uint64_t> seed_words(static_cast<size_t>((n_seed + 63) / 64 + 1), 0);
  for (size_t w = 0; w + 1 < seed_words.size(); ++w) seed_words[w] = rng.next_u64();

  ExtractionResult res;
  res.n_in_bits = n_in;
  res.security_eps = security_eps;
  res.bits.reserve(static_cast<size_t>(n_out_total));

  std::vector<uint64_t> xr_words, row;
  double entitlement = 0.0;
  long emitted = 0;
  for (long base = 0; base < n_in && emitted < n_out_total; base += n_blk) {
    const long nb = std::min<long>(n_blk, n_in - base);
    entitlement += static_cast<double>(nb) * ratio;
    long m_b = static_cast<long>(std::floor(entitlement)) - emitted;
    m_b = std::min(m_b, m_cap);
    if (m_b <= 0) continue;

    const size_t nw = static_cast<size_t>((nb + 63) / 64);
    xr_words.assign(nw, 0);
    for (long j = 0; j < nb; ++j)
      if (raw_bits[static_cast<size_t>(base + nb - 1 - j)])
        xr_words[static_cast<size_t>(j / 64)] |= (1ull << (j % 64));

    row.resize(nw);
    for (long i = 0; i < m_b; ++i) {
      const long w0 = i / 64, sh = i % 64;
      uint64_t acc = 0;
      for (size_t w = 0; w < nw; ++w) {
        const uint64_t lo = seed_words[static_cast<size_t>(w0) + w] >> sh;
        const uint64_t hi = sh ? seed_words[static_cast<size_t>(w0) + w + 1] << (64 - sh) : 0;
        acc ^= (lo | hi) & xr_words[w];
      }
      res.bits.push_back(static_cast<uint8_t>(__builtin_parityll(acc)));
      ++emitted;
    }
  }
  if (static_cast<long>(res.bits.size()) > n_out_total)
    res.bits.resize(static_cast<size_t>(n_out_total));
  res.n_out_bits = static_cast<long>(res.bits.size());
  return res;
}

// --- simulator-only phase oracle ------------------------------------------------

struct PhaseDiffs {
  std::vector<double> dphi;  // wrapped consecutive differences, [-pi, pi)
  long n_skipped = 0;
};

// Field phase at each pulse peak; consecutive differences of retained pulses.
inline PhaseDiffs phase_ground_truth(const FieldTrace& trace, double rep_rate,
                                     double floor_rel = 1e-3) {
  const long spp = std::lround(1.0 / (rep_rate * trace.dt));
  const long n_pulses = static_cast<long>(trace.samples.size()) / spp;
  if (n_pulses < 2) throw std::invalid_argument("phase_ground_truth: need >= 2 pulses");

  std::vector<double> peak(n_pulses);
  std::vector<double> phase(n_pulses);
  for (long p = 0; p < n_pulses; ++p) {
    const std::complex<double>* w = trace.samples.data() + p * spp;
    double mx = -1;
    long imx = 0;
    for (long k = 0; k < spp; ++k) {
      const double s = std::norm(w[k]);
      if (s > mx) {
        mx = s;
        imx = k;
      }
    }
    peak[static_cast<size_t>(p)] = mx;
    phase[static_cast<size_t>(p)] = std::arg(w[imx]);
  }
  std::vector<double> med(peak);
  std::nth_element(med.begin(), med.begin() + static_cast<long>(med.size() / 2), med.end());
  const double floor = std::max(1.0, floor_rel * med[med.size() / 2]);

  PhaseDiffs out;
  bool have_prev = false;
  double prev = 0;
  for (long p = 0; p < n_pulses; ++p) {
    if (peak[static_cast<size_t>(p)] < floor) {
      ++out.n_skipped;
      continue;
    }
    if (have_prev) out.dphi.push_back(stats::wrap_pi(phase[static_cast<size_t>(p)] - prev));
    prev = phase[static_cast<size_t>(p)];
    have_prev = true;
  }
  return out;
}

struct RayleighResult {
  double r_bar = 0.0;
  double z = 0.0;
  double p_value = 0.0;
  bool uniform = false;  // true when uniformity is NOT rejected at alpha=0.01
};

// Rayleigh test of circular uniformity on angles.
inline RayleighResult rayleigh_test(std::span<const double> angles) {
  if (angles.size() < 10) throw std::invalid_argument("rayleigh_test: too few angles");
  double cx = 0, cy = 0;
  for (double a : angles) {
    cx += std::cos(a);
    cy += std::sin(a);
  }
  const double n = static_cast<double>(angles.size());
  RayleighResult out;
  out.r_bar = std::sqrt(cx * cx + cy * cy) / n;
  out.z = n * out.r_bar * out.r_bar;
  const double z = out.z;
  out.p_value = std::clamp(std::exp(-z) * (1.0 + (2.0 * z - z * z) / (4.0 * n)), 0.0, 1.0);
  out.uniform = out.p_value >= 0.01;
  return out;
}

// --- bit-level smoke tests -----------------------------------------------------

struct BitTestResult {
  double p_value = 0.0;
  bool pass = false;
};

inline BitTestResult monobit_test(const std::vector<uint8_t>& bits, double alpha = 0.001) {
  const double n = static_cast<double>(bits.size());
  if (n < 100) throw std::invalid_argument("monobit_test: too few bits");
  long ones = 0;
  for (uint8_t b : bits) ones += b;
  const double s = std::abs(2.0 * static_cast<double>(ones) - n) / std::sqrt(n);
  BitTestResult r;
  r.p_value = std::erfc(s / std::sqrt(2.0));
  r.pass = r.p_value >= alpha;
  return r;
}

inline BitTestResult runs_test(const std::vector<uint8_t>& bits, double alpha = 0.001) {
  const double n = static_cast<double>(bits.size());
  if (n < 100) throw std::invalid_argument("runs_test: too few bits");
  long ones = 0;
  for (uint8_t b : bits) ones += b;
  const double pi1 = static_cast<double>(ones) / n;
  BitTestResult r;
  if (std::abs(pi1 - 0.5) >= 2.0 / std::sqrt(n)) {
    r.p_value = 0.0;
    r.pass = false;
    return r;
  }
  long v = 1;
  for (size_t i = 1; i < bits.size(); ++i)
    if (bits[i] != bits[i - 1]) ++v;
  const double num = std::abs(static_cast<double>(v) - 2.0 * n * pi1 * (1.0 - pi1));
  const double den = 2.0 * std::sqrt(2.0 * n) * pi1 * (1.0 - pi1);
  r.p_value = std::erfc(num / den);
  r.pass = r.p_value >= alpha;
  return r;
}

// Two-sample KS test (used by integrator-invariance checks).
struct TwoSampleKs {
  double statistic = 0.0;
  double p_value = 0.0;
};

inline TwoSampleKs ks_two_sample(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("ks_two_sample: empty input");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  size_t i = 0, j = 0;
  double d = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i] <= b[j]) ++i;
    else ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  TwoSampleKs r;
  r.statistic = d;
  const double ne = std::sqrt(na * nb / (na + nb));
  r.p_value = stats::kolmogorov_q((ne + 0.12 + 0.11 / ne) * d);
  return r;
}

}  // namespace gsw
