#pragma once

#include <complex>
#include <cstdint>
#include <vector>

#include "coldamp/model.hpp"

namespace coldamp {

struct SimConfig {
    double dt = 0.0;        // s
    double duration = 0.0;  // s (simulated, i.e. after Q scaling)
    std::uint64_t seed = 0;
    /// gamma -> s*gamma, G_p -> sqrt(s)*G_p, A0 -> sqrt(s)*A0. Keeps gamma_fb/gamma,
    /// C_eff*gamma_eff and every occupancy term invariant while shortening all
    /// mechanical time scales by s.
    double scale_q = 1.0;
    bool adiabatic_cavity = true;
    /// Include vacuum fluctuations (the 1/2 terms). Off = classical noise.
    bool quantum_noise = true;
    /// Keep every k-th sample of (t, x, p, F); 0 = no trajectory.
    std::size_t record_stride = 0;
};

/// Scale factor giving an effective quality factor omega_m / (s gamma_eff) = q_target.
double choose_scale_q(double omega_m, double gamma_eff, double q_target = 300.0);

/// Band-pass -> fractional delay -> gain chain of the digital feedback loop.
/// Realizes a phase advance `phase` and unit gain at omega_m including the
/// zero-order hold of the force.
class FeedbackChain {
public:
    FeedbackChain(double omega_m, double dt, double bandwidth, double phase);

    /// Pushes one measurement sample and returns the (gain-normalized) output.
    double process(double u);

    /// Total chain response at omega (exp(+i omega t) convention), including ZOH.
    std::complex<double> response(double omega) const;
    std::complex<double> bandpass_response(double omega) const;

    double delay_samples() const { return delay_int_ + delay_frac_; }
    bool filter_stable() const;

private:
    double dt_;
    double b0_, b2_, a1_, a2_;  // normalized biquad (b1 = 0)
    double z1_ = 0.0, z2_ = 0.0;
    std::size_t delay_int_ = 0;
    double delay_frac_ = 0.0;
    double gain_ = 1.0;
    std::vector<double> line_;
    std::size_t head_ = 0;
};

struct TrajectorySample {
    double t, x, p, force;
};

struct SimResult {
    double scale_q = 1.0;
    /// Envelope spectrum of b exp(i omega_m t), simulated units.
    Spectrum envelope_psd;
    /// Fitted linewidth and its standard error, physical (unscaled) units.
    double gamma_eff_fit = 0.0;
    double gamma_eff_fit_error = 0.0;
    /// Closed-form expectation for the same configuration, physical units.
    double gamma_eff_expected = 0.0;
    /// <|b|^2> over the steady-state part of the run.
    double mean_energy = 0.0;
    /// Occupancy: mean_energy - 1/2 (quantum noise) or mean_energy (classical).
    double occupancy = 0.0;
    bool unstable = false;
    std::vector<TrajectorySample> trajectory;
};

/// Stochastic simulation of the feedback-cooled oscillator.
SimResult simulate(const SystemParams& params, const ToneSet& tones, const FeedbackConfig& fb,
                   const SimConfig& sim);

/// Deterministic ring-down of the noiseless loop; returns the energy decay rate
/// in physical units (used for timestep-convergence checks).
double ringdown_gamma_eff(const SystemParams& params, const ToneSet& tones,
                          const FeedbackConfig& fb, const SimConfig& sim);

}  // namespace coldamp
