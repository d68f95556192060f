#pragma once

#include "coldamp/model.hpp"

namespace coldamp {

/// Feedback-cooled occupancy split into its physical contributions.
struct OccupancyBudget {
    double n_T = 0.0;
    double n_ba = 0.0;
    double n_fb = 0.0;
    double n_m = 0.0;
    double gamma_eff = 0.0;
    double c_eff = 0.0;
};

/// Maximum feedback damping 4 G_p A0 / sqrt(kappa^2 + 4 omega_m^2).
double gamma_fb(const SystemParams& params, const Tone& probe, const FeedbackConfig& fb);

/// gamma + gamma_fb (kappa sin(phi) - 2 omega_m cos(phi)) / sqrt(kappa^2 + 4 omega_m^2).
/// Returned unclamped; may be <= 0 (see occupancy_budget / is_stable).
double gamma_eff(const SystemParams& params, const Tone& probe, const FeedbackConfig& fb);

/// Feedback phase that maximizes the damping (gamma_eff = gamma + gamma_fb).
double optimal_feedback_phase(const SystemParams& params);

/// Throws InstabilityError if gamma_eff <= 0.
OccupancyBudget occupancy_budget(const SystemParams& params, const Tone& probe,
                                 const FeedbackConfig& fb);

/// Same budget with every vacuum 1/2 dropped (high-occupancy classical limit).
OccupancyBudget classical_budget(const SystemParams& params, const Tone& probe,
                                 const FeedbackConfig& fb);

/// n = A+ / (A- - A+). Throws InvalidArgument unless A- > A+ >= 0.
double occupancy_from_asymmetry(double a_plus, double a_minus);

/// eta = (A- - A+) / A-. Throws InvalidArgument unless A- > 0.
double asymmetry_eta(double a_plus, double a_minus);

/// Thermal cavity noise seen at the output, kappa_e kappa n_c / ((w - w_c)^2 + (kappa/2)^2).
double cavity_noise_psd(const SystemParams& params, double omega);

/// Dynamical-backaction damping of a single tone; positive for red detuning.
double sideband_cooling_rate(const SystemParams& params, const Tone& tone);

struct GainScanResult {
    double gain_a0 = 0.0;
    OccupancyBudget budget;
};

/// Minimizes n_m over A0 at fixed phase: log-spaced scan followed by golden-section polish.
GainScanResult minimize_occupancy_over_gain(const SystemParams& params, const Tone& probe,
                                            double phase_phi, double a0_min, double a0_max,
                                            int scan_points = 400);

}  // namespace coldamp
