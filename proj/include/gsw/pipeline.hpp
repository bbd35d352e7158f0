#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "gsw/analysis.hpp"
#include "gsw/model.hpp"
#include "gsw/optics.hpp"
#include "gsw/rng.hpp"
#include "gsw/sde.hpp"

// Streaming measurement chain. Long pulse trains are simulated and pushed
// through filter/AMZI/photodiode/ADC stages in overlapping blocks so memory
// stays bounded; guard periods on both sides of each block absorb the
// FFT-filter wrap-around and the interferometer delay. Per-pulse samples,
// spectra, jitter and phase ground truth are accumulated incrementally.
//
// Reproducibility: the trajectory consumes noise stream `stream_id`, ADC
// noise stream `stream_id + 1`; both are counter-based, so results do not
// depend on block sizes beyond floating-point rounding in the filters, and
// two runs of the same configuration are bit-identical.

namespace gsw {

struct ChainConfig {
  double bandpass_center = 0.0;     // Hz offset from carrier
  double bandpass_bandwidth = 50e9; // Hz, full -3 dB width
  double amzi_phase_trim = 0.0;     // rad
  double amzi_drift_rate = 0.0;     // rad^2/s, slow differential-phase drift
  double pd_bandwidth = 40e9;       // Hz
  double scope_bandwidth = 33e9;    // Hz, 0 disables
  double adc_rate = 80e9;           // samples/s
  int adc_bits = 8;
  double noise_codes = 2.0;         // electronic noise RMS, in ADC codes
  double noise_pad_sigmas = 4.0;    // full-scale padding in noise sigmas
  double chain_dt = 2.5e-12;        // decimated processing step (s)
  long cal_pulses = 2048;           // calibration segment length
  long guard_periods = 4;
  long chunk_target_samples = 1 << 19;
  size_t welch_segment = 16384;
  double jitter_threshold_frac = 0.5;
  double ground_truth_floor_rel = 1e-3;
  GofOptions gof;
  MinEntropyOptions entropy;
  double extraction_eps = 1e-10;

  void validate() const {
    if (!(bandpass_bandwidth > 0)) throw std::invalid_argument("chain: bandpass_bandwidth must be > 0");
    if (!(pd_bandwidth > 0)) throw std::invalid_argument("chain: pd_bandwidth must be > 0");
    if (!(scope_bandwidth >= 0)) throw std::invalid_argument("chain: scope_bandwidth must be >= 0");
    if (!(adc_rate > 0)) throw std::invalid_argument("chain: adc_rate must be > 0");
    if (adc_bits < 1 || adc_bits > 16) throw std::invalid_argument("chain: adc_bits must be in [1,16]");
    if (!(noise_codes >= 0)) throw std::invalid_argument("chain: noise_codes must be >= 0");
    if (!(chain_dt > 0)) throw std::invalid_argument("chain: chain_dt must be > 0");
    if (cal_pulses < 64) throw std::invalid_argument("chain: cal_pulses must be >= 64");
    if (guard_periods < 1) throw std::invalid_argument("chain: guard_periods must be >= 1");
  }
};

struct CalibrationInfo {
  FullScale full_scale;
  double volts_per_code = 1.0;
  long sample_phase = 0;       // ADC samples past the period start
  double sample_offset = 0.0;  // seconds past the period start
  double jitter_threshold = 0.0;
  double jitter_hysteresis = 0.0;
  double noise_rms_volts = 0.0;
};

struct RunDiagnostics {
  long clamp_events = 0;
  double peak_cv = 0.0;
  double mean_peak_photons = 0.0;
};

struct ChainResult {
  PulseSamples samples;          // one ADC code per pulse
  CalibrationInfo calibration;
  std::vector<double> dphi;      // ground-truth phase differences
  long dphi_skipped = 0;
  SpectrumResult spectrum;
  JitterResult jitter;
  RunDiagnostics diagnostics;
  double coupled_ase_rate = 0.0; // photons/s into the lasing mode
  long n_pulses = 0;
  double rep_rate = 0.0;
};

namespace detail {

struct ChainGeometry {
  long spp_full = 0;    // integrator steps per period
  long decim = 0;       // integrator steps per chain sample
  long spp_chain = 0;   // chain samples per period
  long adc_stride = 0;  // chain samples per ADC sample
  long adc_per_period = 0;
};

inline ChainGeometry chain_geometry(double rep_rate, double dt_full, const ChainConfig& c) {
  ChainGeometry g;
  g.spp_full = std::lround(1.0 / (rep_rate * dt_full));
  g.decim = std::lround(c.chain_dt / dt_full);
  if (g.decim < 1 || g.spp_full % g.decim != 0)
    throw std::invalid_argument("chain: chain_dt must be an integer multiple of dt dividing the period");
  g.spp_chain = g.spp_full / g.decim;
  const double cps = 1.0 / (c.adc_rate * c.chain_dt);
  g.adc_stride = std::lround(cps);
  if (g.adc_stride < 1 || std::abs(cps - static_cast<double>(g.adc_stride)) > 1e-9)
    throw std::invalid_argument("chain: adc_rate must land on the chain sample grid");
  if (g.spp_chain % g.adc_stride != 0)
    throw std::invalid_argument("chain: ADC rate must divide the pulse period");
  g.adc_per_period = g.spp_chain / g.adc_stride;
  return g;
}

// One block: subsample the window to the chain rate, bandpass, form AMZI and
// direct intensities, photodiode+scope filter. All outputs cover the full
// window; callers slice the central region.
//
// Subsampling before the bandpass folds the far stopband (beyond the chain
// Nyquist, 200 GHz at the default step) onto the band; the cavity response
// confines the field to ~1/(2 pi tau_p) so those tails carry well under 0.1%
// of the power and the passband multiply removes the fold-in anyway.
struct BlockOutputs {
  std::vector<std::complex<double>> raw_chain;  // unfiltered field, chain rate
  std::vector<double> amzi;                     // filtered interferometer voltage
  std::vector<double> direct;                   // filtered direct-detection voltage
};

inline void process_block(const std::vector<std::complex<double>>& raw,
                          const ChainConfig& cfg, const ChainGeometry& g,
                          std::span<const double> trim_per_period, BlockOutputs& out) {
  const size_t n_chain = raw.size() / static_cast<size_t>(g.decim);
  out.raw_chain.resize(n_chain);
  for (size_t i = 0; i < n_chain; ++i)
    out.raw_chain[i] = raw[i * static_cast<size_t>(g.decim)];

  std::vector<std::complex<double>> fc(out.raw_chain);
  gsw::detail::apply_gain_complex(fc, cfg.chain_dt, [&](double f) {
    return supergauss_bandpass_gain(f, cfg.bandpass_center, cfg.bandpass_bandwidth);
  });

  out.amzi.assign(n_chain, 0.0);
  out.direct.assign(n_chain, 0.0);
  const auto delay = static_cast<size_t>(g.spp_chain);
  std::complex<double> rot = std::polar(1.0, cfg.amzi_phase_trim);
  for (size_t i = 0; i < n_chain; ++i) {
    out.direct[i] = std::norm(fc[i]);
    if (i >= delay) {
      const size_t p = i / static_cast<size_t>(g.spp_chain);
      if (p < trim_per_period.size()) rot = std::polar(1.0, trim_per_period[p]);
      out.amzi[i] = 0.25 * std::norm(fc[i] + rot * fc[i - delay]);
    }
  }
  auto pd_gain = [&](double f) {
    double gaink = bessel4_lowpass_gain(f, cfg.pd_bandwidth);
    if (cfg.scope_bandwidth > 0) gaink *= bessel4_lowpass_gain(f, cfg.scope_bandwidth);
    return gaink;
  };
  gsw::detail::apply_gain_real(out.amzi, cfg.chain_dt, pd_gain);
  gsw::detail::apply_gain_real(out.direct, cfg.chain_dt, pd_gain);
}

}  // namespace detail

// Run the full chain for a configured laser/drive/ASE combination.
inline ChainResult run_chain(const LaserParams& laser, const DriveWaveform& drive,
                             const ASESource& ase, const IntegratorConfig& integ,
                             const ChainConfig& chain) {
  chain.validate();
  laser.validate();
  drive.validate();
  ase.validate();
  integ.validate(drive.rep_rate);

  const double r_ase = ase.total_power > 0 ? coupled_ase_rate(laser, ase) : 0.0;

  ChainResult res;
  res.coupled_ase_rate = r_ase;
  res.rep_rate = drive.rep_rate;
  res.n_pulses = integ.n_pulses;

  // Geometry is fixed by the snapped integrator step.
  PulseTrainSimulator probe(laser, drive, r_ase, integ);
  const double dt_full = probe.dt();
  const auto g = detail::chain_geometry(drive.rep_rate, dt_full, chain);
  const long guard = std::max<long>(chain.guard_periods, 1);
  if (integ.burn_in_pulses < guard)
    throw std::invalid_argument("chain: burn_in_pulses must cover the guard region");

  const long chunk = std::max<long>(16, chain.chunk_target_samples / g.spp_full);
  const long max_code = (1 << chain.adc_bits) - 1;

  // interferometer differential-phase drift: one random-walk step per period
  const double drift_step = chain.amzi_drift_rate > 0
                                ? std::sqrt(chain.amzi_drift_rate / drive.rep_rate)
                                : 0.0;
  auto make_trim_walk = [&](long n_periods) {
    NoiseStream drift(integ.seed, integ.stream_id + 2);
    std::vector<double> trims(static_cast<size_t>(n_periods), chain.amzi_phase_trim);
    double w = 0.0;
    for (auto& t : trims) {
      if (drift_step > 0) w += drift_step * drift.next_gaussian();
      t += w;
    }
    return trims;
  };

  // --- calibration pass: noiseless chain over the leading pulses ----------
  CalibrationInfo cal;
  {
    const long m = std::min<long>(chain.cal_pulses, integ.n_pulses);
    PulseTrainSimulator sim(laser, drive, r_ase, integ);
    for (long k = 0; k < integ.burn_in_pulses - guard; ++k) sim.skip_pulse();
    std::vector<std::complex<double>> raw;
    sim.run_pulses(guard + m + guard, raw);
    detail::BlockOutputs blk;
    const std::vector<double> trims = make_trim_walk(guard + m + guard);
    detail::process_block(raw, chain, g, trims, blk);

    const size_t c0 = static_cast<size_t>(guard * g.spp_chain);
    std::vector<double> adc_values;
    adc_values.reserve(static_cast<size_t>(m * g.adc_per_period));
    std::vector<double> phase_var(static_cast<size_t>(g.adc_per_period), 0.0);
    std::vector<double> phase_mean(static_cast<size_t>(g.adc_per_period), 0.0);
    for (long q = 0; q < g.adc_per_period; ++q) {
      double s = 0, s2 = 0;
      for (long p = 0; p < m; ++p) {
        const double v = blk.amzi[c0 + static_cast<size_t>(p * g.spp_chain + q * g.adc_stride)];
        s += v;
        s2 += v * v;
        adc_values.push_back(v);
      }
      phase_mean[static_cast<size_t>(q)] = s / static_cast<double>(m);
      phase_var[static_cast<size_t>(q)] =
          s2 / static_cast<double>(m) - (s / static_cast<double>(m)) * (s / static_cast<double>(m));
    }
    long best = 0;
    for (long q = 1; q < g.adc_per_period; ++q)
      if (phase_var[static_cast<size_t>(q)] > phase_var[static_cast<size_t>(best)]) best = q;
    cal.sample_phase = best;
    cal.sample_offset = static_cast<double>(best) / chain.adc_rate;

    const double lo_raw = stats::quantile(adc_values, 0.001);
    const double hi_raw = stats::quantile(adc_values, 0.999);
    const double span_raw = std::max(hi_raw - lo_raw, 1e-30);
    // Pad so the electronic-noise pedestal does not clip at the rails.
    const double denom = std::max(1.0, static_cast<double>(max_code) -
                                           2.0 * chain.noise_pad_sigmas * chain.noise_codes);
    cal.volts_per_code = span_raw / denom;
    cal.full_scale.lo = lo_raw - chain.noise_pad_sigmas * chain.noise_codes * cal.volts_per_code;
    cal.full_scale.hi = cal.full_scale.lo + cal.volts_per_code * max_code;
    cal.noise_rms_volts = chain.noise_codes * cal.volts_per_code;

    std::vector<double> direct_c(blk.direct.begin() + static_cast<long>(c0),
                                 blk.direct.begin() + static_cast<long>(c0) + m * g.spp_chain);
    const double dlo = stats::quantile(direct_c, 0.005);
    const double dhi = stats::quantile(direct_c, 0.995);
    cal.jitter_threshold = dlo + chain.jitter_threshold_frac * (dhi - dlo);
    cal.jitter_hysteresis = 0.1 * (dhi - dlo);
  }

  // --- production pass ------------------------------------------------------
  PulseTrainSimulator sim(laser, drive, r_ase, integ);
  NoiseStream adc_noise(integ.seed, integ.stream_id + 1);
  NoiseStream drift_stream(integ.seed, integ.stream_id + 2);
  double drift_walk = 0.0;
  std::vector<double> trim_buf;
  auto extend_trims = [&](long n_periods) {
    for (long k = 0; k < n_periods; ++k) {
      if (drift_step > 0) drift_walk += drift_step * drift_stream.next_gaussian();
      trim_buf.push_back(chain.amzi_phase_trim + drift_walk);
    }
  };
  for (long k = 0; k < integ.burn_in_pulses - guard; ++k) sim.skip_pulse();

  WelchAccumulator welch(chain.welch_segment, chain.chain_dt);
  std::vector<double>& codes = res.samples.values;
  codes.reserve(static_cast<size_t>(integ.n_pulses));
  res.samples.rep_rate = drive.rep_rate;
  res.samples.quantized = true;
  res.samples.bits = chain.adc_bits;
  res.samples.lsb = 1.0;

  std::vector<double> peaks, peak_phases;
  peaks.reserve(static_cast<size_t>(integ.n_pulses));
  peak_phases.reserve(static_cast<size_t>(integ.n_pulses));

  std::vector<double> jit_theta;
  jit_theta.reserve(static_cast<size_t>(integ.n_pulses));
  long jit_missed = 0;

  std::vector<std::complex<double>> raw;
  detail::BlockOutputs blk;
  long emitted = 0;
  // Left guard (burn-in tail) plus the first guard periods of recorded data:
  // every iteration then appends exactly one chunk and the buffer always
  // spans [emitted - guard, emitted + m + guard).
  sim.run_pulses(2 * guard, raw);
  extend_trims(2 * guard);

  while (emitted < integ.n_pulses) {
    const long m = std::min<long>(chunk, integ.n_pulses - emitted);
    sim.run_pulses(m, raw);
    extend_trims(m);
    detail::process_block(raw, chain, g, trim_buf, blk);

    const size_t c0f = static_cast<size_t>(guard * g.spp_full);   // central, full rate
    const size_t c0c = static_cast<size_t>(guard * g.spp_chain);  // central, chain rate

    welch.feed({blk.raw_chain.data() + c0c, static_cast<size_t>(m * g.spp_chain)});

    for (long p = 0; p < m; ++p) {
      // raw-field pulse peak: magnitude and phase
      const std::complex<double>* w = raw.data() + c0f + static_cast<size_t>(p * g.spp_full);
      double mx = -1;
      long imx = 0;
      for (long k = 0; k < g.spp_full; ++k) {
        const double s = std::norm(w[k]);
        if (s > mx) {
          mx = s;
          imx = k;
        }
      }
      peaks.push_back(mx);
      peak_phases.push_back(std::arg(w[imx]));

      // sampled ADC code with electronic noise
      const double v = blk.amzi[c0c + static_cast<size_t>(p * g.spp_chain +
                                                          cal.sample_phase * g.adc_stride)] +
                       cal.noise_rms_volts * adc_noise.next_gaussian();
      double q = std::round((v - cal.full_scale.lo) / cal.volts_per_code);
      codes.push_back(std::clamp(q, 0.0, static_cast<double>(max_code)));

    }
    // jitter: rising-edge crossings across the central region (chain rate)
    detail::collect_crossing_phases(
        {blk.direct.data() + c0c, static_cast<size_t>(m * g.spp_chain)}, chain.chain_dt,
        1.0 / drive.rep_rate, cal.jitter_threshold, cal.jitter_hysteresis, jit_theta);
    emitted += m;
    // trailing 2*guard periods become the next left guard + lookahead
    const size_t keep = static_cast<size_t>(2 * guard * g.spp_full);
    raw.erase(raw.begin(), raw.end() - static_cast<long>(keep));
    trim_buf.erase(trim_buf.begin(), trim_buf.end() - 2 * guard);
  }

  res.diagnostics.clamp_events = sim.clamp_events();

  // peak statistics and ground-truth differences over retained pulses
  {
    std::vector<double> med(peaks);
    std::nth_element(med.begin(), med.begin() + static_cast<long>(med.size() / 2), med.end());
    const double floor = std::max(1.0, chain.ground_truth_floor_rel * med[med.size() / 2]);
    bool have_prev = false;
    double prev = 0;
    for (size_t i = 0; i < peaks.size(); ++i) {
      if (peaks[i] < floor) {
        ++res.dphi_skipped;
        continue;
      }
      if (have_prev) res.dphi.push_back(stats::wrap_pi(peak_phases[i] - prev));
      prev = peak_phases[i];
      have_prev = true;
    }
    const double mp = stats::mean(peaks);
    res.diagnostics.mean_peak_photons = mp;
    res.diagnostics.peak_cv = std::sqrt(stats::variance(peaks)) / mp;
  }

  // jitter from circular residuals
  {
    jit_missed = std::max<long>(0, integ.n_pulses - static_cast<long>(jit_theta.size()));
    if (jit_missed > integ.n_pulses / 100)
      throw std::runtime_error("chain jitter: " + std::to_string(jit_missed) +
                               " pulses failed to cross threshold");
    res.jitter.rms = detail::circular_rms_seconds(jit_theta, 1.0 / drive.rep_rate);
    res.jitter.n_pulses = static_cast<long>(jit_theta.size());
    res.jitter.n_missed = jit_missed;
    res.jitter.threshold = cal.jitter_threshold;
  }

  std::tie(res.spectrum.freqs, res.spectrum.psd) = welch.finalize();
  compute_comb_contrast(res.spectrum, drive.rep_rate);

  res.calibration = cal;
  return res;
}

}  // namespace gsw
