#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "gsw/model.hpp"
#include "gsw/rng.hpp"

// Stochastic integration of the single-mode laser rate equations in the
// complex-field form
//
//   dE = 1/2 (1 + i alpha_h)(G - 1/tau_p) E dt + dW
//   dN = (pump - N/tau_n - G |E|^2) dt,   G = g0 (N - N_tr)/(1 + eps_sat |E|^2)
//
// with dW a circular complex Gaussian increment of total variance
// <|dW|^2> = (R_sp + R_ase) dt, R_sp = beta_sp N / tau_n. |E|^2 is the
// intracavity photon number; arg(E) carries the optical phase whose
// pulse-to-pulse randomization is the quantity of interest.

namespace gsw {

struct SimState {
  std::complex<double> field{0.0, 0.0};  // sqrt(photons)
  double carriers = 0.0;
  double time = 0.0;
};

enum class Scheme { euler_maruyama, stochastic_heun };

inline const char* to_string(Scheme s) {
  return s == Scheme::euler_maruyama ? "euler_maruyama" : "stochastic_heun";
}

struct IntegratorConfig {
  double dt = 0.25e-12;       // integration step (s); snapped to an exact
                              // integer division of the drive period
  long n_pulses = 1000;       // recorded pulse periods
  Scheme scheme = Scheme::euler_maruyama;
  uint64_t seed = 0;
  uint64_t stream_id = 0;
  long burn_in_pulses = 16;   // periods simulated and discarded before recording

  void validate(double rep_rate) const {
    if (!(dt > 0)) throw std::invalid_argument("IntegratorConfig: dt must be > 0");
    const double period = 1.0 / rep_rate;
    if (dt > period / 200.0)
      throw std::invalid_argument("IntegratorConfig: dt too coarse, need >= 200 steps per period");
    if (n_pulses < 1) throw std::invalid_argument("IntegratorConfig: n_pulses must be >= 1");
    if (burn_in_pulses < 0) throw std::invalid_argument("IntegratorConfig: burn_in_pulses must be >= 0");
  }
};

struct FieldTrace {
  std::vector<std::complex<double>> samples;
  double dt = 0.0;
  double t0 = 0.0;
  double rep_rate = 0.0;

  long steps_per_period() const {
    return std::lround(1.0 / (rep_rate * dt));
  }
};

class IntegratorDivergence : public std::runtime_error {
 public:
  IntegratorDivergence(long step, const std::string& what)
      : std::runtime_error("integrator diverged at step " + std::to_string(step) + ": " + what),
        step_index(step) {}
  long step_index;
};

// Single integration step, exposed for direct tests. `rng` supplies one
// Gaussian pair when the total noise rate is nonzero.
inline SimState step(const SimState& s, const LaserParams& p, double pump,
                     double r_ase, double dt, NoiseStream& rng) {
  const double S = std::norm(s.field);
  const double gain = p.g0 * (s.carriers - p.n_tr) / (1.0 + p.eps_sat * S);
  const double net = 0.5 * (gain - 1.0 / p.tau_p) * dt;
  const std::complex<double> growth(net, p.alpha_h * net);

  SimState out;
  out.field = s.field + growth * s.field;
  const double noise_rate = p.beta_sp * s.carriers / p.tau_n + r_ase;
  if (noise_rate > 0) {
    auto [g1, g2] = rng.next_gaussian_pair();
    const double sigma = std::sqrt(0.5 * noise_rate * dt);
    out.field += std::complex<double>(sigma * g1, sigma * g2);
  }
  out.carriers = s.carriers + (pump - s.carriers / p.tau_n - gain * S) * dt;
  if (out.carriers < 0) out.carriers = 0;
  out.time = s.time + dt;
  return out;
}

// Streaming pulse-train integrator. One instance integrates a single
// trajectory; run_pulses() may be called repeatedly and the recorded
// samples are independent of how the run is split into calls.
class PulseTrainSimulator {
 public:
  PulseTrainSimulator(const LaserParams& laser, const DriveWaveform& drive,
                      double r_ase_coupled, const IntegratorConfig& cfg)
      : laser_(laser), drive_(drive), r_ase_(r_ase_coupled), cfg_(cfg),
        rng_(cfg.seed, cfg.stream_id) {
    laser_.validate();
    drive_.validate();
    cfg_.validate(drive.rep_rate);
    if (!(r_ase_coupled >= 0))
      throw std::invalid_argument("PulseTrainSimulator: coupled ASE rate must be >= 0");

    const double period = 1.0 / drive_.rep_rate;
    spp_ = std::lround(period / cfg_.dt);
    dt_ = period / static_cast<double>(spp_);
    pump_table_.resize(spp_);
    for (long k = 0; k < spp_; ++k)
      pump_table_[k] = drive_.pump_rate_at(static_cast<double>(k) * dt_);

    state_.field = {0.0, 0.0};
    state_.carriers = drive_.i_low * laser_.tau_n;
    state_.time = 0.0;

    inv_tau_p_ = 1.0 / laser_.tau_p;
    inv_tau_n_ = 1.0 / laser_.tau_n;
    sp_per_carrier_ = laser_.beta_sp * inv_tau_n_;
  }

  double dt() const { return dt_; }
  long steps_per_period() const { return spp_; }
  const SimState& state() const { return state_; }
  long clamp_events() const { return clamp_events_; }
  long steps_taken() const { return step_index_; }

  // Advance one period without recording.
  void skip_pulse() {
    for (long k = 0; k < spp_; ++k) advance(pump_table_[k]);
    check_finite();
  }

  // Advance n periods, appending every recorded field sample to `out`.
  void run_pulses(long n, std::vector<std::complex<double>>& out) {
    out.reserve(out.size() + static_cast<size_t>(n) * spp_);
    for (long pulse = 0; pulse < n; ++pulse) {
      for (long k = 0; k < spp_; ++k) {
        advance(pump_table_[k]);
        out.push_back(state_.field);
      }
      check_finite();
    }
  }

 private:
  void advance(double pump) {
    const double Sr = state_.field.real(), Si = state_.field.imag();
    const double S = Sr * Sr + Si * Si;
    const double N = state_.carriers;
    const double gain = laser_.g0 * (N - laser_.n_tr) / (1.0 + laser_.eps_sat * S);
    const double noise_rate = sp_per_carrier_ * N + r_ase_;

    double nr = 0.0, ni = 0.0;
    if (noise_rate > 0) {
      auto [g1, g2] = rng_.next_gaussian_pair();
      const double sigma = std::sqrt(0.5 * noise_rate * dt_);
      nr = sigma * g1;
      ni = sigma * g2;
    }

    if (cfg_.scheme == Scheme::euler_maruyama) {
      const double a = 0.5 * (gain - inv_tau_p_) * dt_;
      state_.field = {Sr + a * Sr - laser_.alpha_h * a * Si + nr,
                      Si + a * Si + laser_.alpha_h * a * Sr + ni};
      state_.carriers = N + (pump - N * inv_tau_n_ - gain * S) * dt_;
    } else {
      // Heun predictor-corrector on the drift, additive noise applied once.
      const double a = 0.5 * (gain - inv_tau_p_) * dt_;
      const double pr = Sr + a * Sr - laser_.alpha_h * a * Si + nr;
      const double pi = Si + a * Si + laser_.alpha_h * a * Sr + ni;
      const double Np = std::max(0.0, N + (pump - N * inv_tau_n_ - gain * S) * dt_);
      const double Sp = pr * pr + pi * pi;
      const double gain_p = laser_.g0 * (Np - laser_.n_tr) / (1.0 + laser_.eps_sat * Sp);
      const double ap = 0.5 * (gain_p - inv_tau_p_) * dt_;
      state_.field = {Sr + 0.5 * ((a * Sr - laser_.alpha_h * a * Si) +
                                  (ap * pr - laser_.alpha_h * ap * pi)) + nr,
                      Si + 0.5 * ((a * Si + laser_.alpha_h * a * Sr) +
                                  (ap * pi + laser_.alpha_h * ap * pr)) + ni};
      state_.carriers = N + 0.5 * ((pump - N * inv_tau_n_ - gain * S) +
                                   (pump - Np * inv_tau_n_ - gain_p * Sp)) * dt_;
    }
    if (state_.carriers < 0) {
      state_.carriers = 0;
      ++clamp_events_;
    }
    state_.time += dt_;
    ++step_index_;
  }

  void check_finite() const {
    if (!std::isfinite(state_.field.real()) || !std::isfinite(state_.field.imag()) ||
        !std::isfinite(state_.carriers))
      throw IntegratorDivergence(step_index_, "non-finite state");
  }

  LaserParams laser_;
  DriveWaveform drive_;
  double r_ase_ = 0.0;
  IntegratorConfig cfg_;
  NoiseStream rng_;
  SimState state_;
  std::vector<double> pump_table_;
  long spp_ = 0;
  double dt_ = 0.0;
  double inv_tau_p_ = 0.0, inv_tau_n_ = 0.0, sp_per_carrier_ = 0.0;
  long step_index_ = 0;
  long clamp_events_ = 0;
};

// Integrate a full pulse train and return the recorded trace. Deterministic
// in (parameters, seed); burn-in periods are discarded.
inline FieldTrace simulate_pulse_train(const LaserParams& p, const DriveWaveform& drive,
                                       const ASESource& ase, const IntegratorConfig& cfg) {
  PulseTrainSimulator sim(p, drive, coupled_ase_rate(p, ase), cfg);
  for (long k = 0; k < cfg.burn_in_pulses; ++k) sim.skip_pulse();
  FieldTrace trace;
  trace.dt = sim.dt();
  trace.rep_rate = drive.rep_rate;
  trace.t0 = sim.state().time;
  sim.run_pulses(cfg.n_pulses, trace.samples);
  return trace;
}

// Pure phase-diffusion reference: d(phi) = sqrt(2 D) dW with D = pi * linewidth.
// Returns the terminal phase of each path. Serves as the Monte-Carlo oracle
// for the closed-form phase variance.
inline std::vector<double> pure_phase_diffusion_reference(double linewidth, double dt,
                                                          long n_steps, long n_paths,
                                                          uint64_t seed) {
  if (!(linewidth >= 0) || !(dt > 0) || n_steps < 1 || n_paths < 1)
    throw std::invalid_argument("pure_phase_diffusion_reference: invalid arguments");
  const double d_phi = phase_diffusion_constant(linewidth);
  const double sigma = std::sqrt(2.0 * d_phi * dt);
  std::vector<double> out(static_cast<size_t>(n_paths));
  for (long path = 0; path < n_paths; ++path) {
    NoiseStream rng(seed, static_cast<uint64_t>(path));
    double phi = 0.0;
    for (long k = 0; k < n_steps; ++k) phi += sigma * rng.next_gaussian();
    out[static_cast<size_t>(path)] = phi;
  }
  return out;
}

}  // namespace gsw
