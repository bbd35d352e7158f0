#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

#include "gsw/constants.hpp"

// Physical parameter sets for a gain-switched single-mode semiconductor
// laser plus the closed-form relations used both by the stochastic engine
// and as analytic cross-checks: below-threshold linewidth, phase-diffusion
// constant, phase variance, cavity resonance width and the in-band budget
// of an injected broadband ASE source.

namespace gsw {

struct LaserParams {
  double tau_p = 1e-12;      // photon lifetime (s)
  double tau_n = 1e-9;       // carrier lifetime (s)
  double beta_sp = 1e-5;     // spontaneous-emission coupling fraction
  double g0 = 1e5;           // differential gain (1/s per carrier)
  double n_tr = 1e7;         // transparency carrier number
  double eps_sat = 1e-5;     // gain compression (per photon)
  double alpha_h = 3.0;      // linewidth enhancement factor
  double lambda_c = 1547e-9; // emission wavelength (m)

  void validate() const {
    if (!(tau_p > 0)) throw std::invalid_argument("LaserParams: tau_p must be > 0");
    if (!(tau_n > 0)) throw std::invalid_argument("LaserParams: tau_n must be > 0");
    if (!(beta_sp > 0 && beta_sp <= 1)) throw std::invalid_argument("LaserParams: beta_sp must be in (0,1]");
    if (!(g0 > 0)) throw std::invalid_argument("LaserParams: g0 must be > 0");
    if (!(n_tr > 0)) throw std::invalid_argument("LaserParams: n_tr must be > 0");
    if (!(eps_sat >= 0)) throw std::invalid_argument("LaserParams: eps_sat must be >= 0");
    if (!(lambda_c > 0)) throw std::invalid_argument("LaserParams: lambda_c must be > 0");
  }

  // Carrier number at which unsaturated gain equals cavity loss.
  double threshold_carriers() const { return n_tr + 1.0 / (g0 * tau_p); }
  // Pump rate that sustains threshold_carriers() in steady state.
  double threshold_pump_rate() const { return threshold_carriers() / tau_n; }
};

struct ASESource {
  double total_power = 0.0;          // W
  double center_wavelength = 1550e-9;// m
  double bandwidth_3db = 33e-9;      // m
  double coupling_efficiency = 1.0;  // injection-path transmission
  double mode_coupling = 0.1;        // in-band photons accepted by the lasing mode

  void validate() const {
    if (!(total_power >= 0)) throw std::invalid_argument("ASESource: total_power must be >= 0");
    if (!(center_wavelength > 0)) throw std::invalid_argument("ASESource: center_wavelength must be > 0");
    if (!(bandwidth_3db > 0)) throw std::invalid_argument("ASESource: bandwidth_3db must be > 0");
    if (!(coupling_efficiency >= 0 && coupling_efficiency <= 1))
      throw std::invalid_argument("ASESource: coupling_efficiency must be in [0,1]");
    if (!(mode_coupling >= 0 && mode_coupling <= 1))
      throw std::invalid_argument("ASESource: mode_coupling must be in [0,1]");
  }
};

struct DriveWaveform {
  double rep_rate = 1e9;    // Hz
  double duty_cycle = 0.5;  // fraction of period above i_low
  double i_high = 4e16;     // pump rate, high level (carriers/s)
  double i_low = 1e16;      // pump rate, low level (carriers/s)
  double rise_time = 20e-12;// 10-90% edge duration (s); 0 = ideal square

  void validate() const {
    if (!(rep_rate > 0)) throw std::invalid_argument("DriveWaveform: rep_rate must be > 0");
    if (!(duty_cycle > 0 && duty_cycle < 1)) throw std::invalid_argument("DriveWaveform: duty_cycle must be in (0,1)");
    if (!(i_low >= 0)) throw std::invalid_argument("DriveWaveform: i_low must be >= 0");
    if (!(i_high > i_low)) throw std::invalid_argument("DriveWaveform: i_high must be > i_low");
    if (!(rise_time >= 0)) throw std::invalid_argument("DriveWaveform: rise_time must be >= 0");
  }

  // Pump rate at time t. Square wave with logistic edges; edge constant is
  // chosen so rise_time spans the 10-90% transition.
  double pump_rate_at(double t) const {
    const double period = 1.0 / rep_rate;
    double u = std::fmod(t, period);
    if (u < 0) u += period;
    if (rise_time <= 0)
      return (u < duty_cycle * period) ? i_high : i_low;
    const double tau = rise_time / 4.394449154672439;  // 2*ln(9)
    double f = 0.0;
    for (int k = -1; k <= 1; ++k) {
      const double a = (u - k * period) / tau;
      const double b = (u - k * period - duty_cycle * period) / tau;
      f += 1.0 / (1.0 + std::exp(-a)) - 1.0 / (1.0 + std::exp(-b));
    }
    return i_low + (i_high - i_low) * f;
  }
};

namespace detail {
inline void require_finite(double x, const char* what) {
  if (!std::isfinite(x)) throw std::domain_error(std::string(what) + " must be finite");
}
}  // namespace detail

// Below-threshold (spontaneous-emission limited) linewidth in Hz.
inline double schawlow_townes_linewidth(double r_sp, double s) {
  detail::require_finite(r_sp, "r_sp");
  detail::require_finite(s, "s");
  if (r_sp < 0) throw std::domain_error("schawlow_townes_linewidth: r_sp must be >= 0");
  if (!(s > 0)) throw std::domain_error("schawlow_townes_linewidth: photon number must be > 0");
  return r_sp / (kTwoPi * s);
}

// Phase-diffusion constant (rad^2/s) associated with a linewidth.
inline double phase_diffusion_constant(double linewidth) {
  detail::require_finite(linewidth, "linewidth");
  if (linewidth < 0) throw std::domain_error("phase_diffusion_constant: linewidth must be >= 0");
  return kPi * linewidth;
}

// Phase variance (rad^2) accumulated over time t.
inline double phase_variance(double linewidth, double t) {
  detail::require_finite(linewidth, "linewidth");
  detail::require_finite(t, "t");
  if (linewidth < 0 || t < 0) throw std::domain_error("phase_variance: inputs must be >= 0");
  return kTwoPi * linewidth * t;
}

// Cavity resonance width (Hz) set by the photon lifetime.
inline double cavity_resonance_width(double tau_p) {
  detail::require_finite(tau_p, "tau_p");
  if (!(tau_p > 0)) throw std::domain_error("cavity_resonance_width: tau_p must be > 0");
  return 1.0 / (kTwoPi * tau_p);
}

// Frequency width -> wavelength width at a given carrier wavelength.
inline double linewidth_to_wavelength(double lambda, double df) {
  return lambda * lambda * df / kLightSpeed;
}

// Portion of a flat-top ASE spectrum that falls inside the cavity resonance,
// in W. `emission_wavelength` is the lasing wavelength at which the cavity
// width is converted to a wavelength span.
inline double in_band_ase_power(const ASESource& src, double cavity_width_hz,
                                double emission_wavelength) {
  src.validate();
  if (!(cavity_width_hz > 0)) throw std::domain_error("in_band_ase_power: cavity width must be > 0");
  if (!(emission_wavelength > 0)) throw std::domain_error("in_band_ase_power: wavelength must be > 0");
  const double dlam_cav = linewidth_to_wavelength(emission_wavelength, cavity_width_hz);
  const double frac = std::min(1.0, dlam_cav / src.bandwidth_3db);
  return src.total_power * src.coupling_efficiency * frac;
}

// Photon energy (J) at wavelength lambda.
inline double photon_energy(double lambda) {
  if (!(lambda > 0)) throw std::domain_error("photon_energy: lambda must be > 0");
  return kPlanck * kLightSpeed / lambda;
}

// Optical power -> photon rate (photons/s).
inline double ase_photon_rate(double p_in_band, double lambda) {
  detail::require_finite(p_in_band, "p_in_band");
  if (p_in_band < 0) throw std::domain_error("ase_photon_rate: power must be >= 0");
  return p_in_band / photon_energy(lambda);
}

// Combined spontaneous perturbation rate with external injection.
inline double effective_spontaneous_rate(double r_sp, double r_ase) {
  if (r_sp < 0 || r_ase < 0) throw std::domain_error("effective_spontaneous_rate: rates must be >= 0");
  return r_sp + r_ase;
}

// Photon rate coupled into the lasing mode for a given laser/source pair.
// Chains the cavity-width budget with the path and mode coupling factors.
inline double coupled_ase_rate(const LaserParams& p, const ASESource& src) {
  const double width = cavity_resonance_width(p.tau_p);
  const double p_band = in_band_ase_power(src, width, p.lambda_c);
  return ase_photon_rate(p_band, src.center_wavelength) * src.mode_coupling;
}

}  // namespace gsw
