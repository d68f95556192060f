#include "coldamp/closed_form.hpp"

#include <cmath>
#include <limits>

namespace coldamp {

namespace {

double susceptibility_norm(const SystemParams& p) {
    const double k = p.kappa();
    return std::sqrt(k * k + 4.0 * p.omega_m * p.omega_m);
}

OccupancyBudget budget_impl(const SystemParams& p, const Tone& probe, const FeedbackConfig& fb,
                            double half) {
    const double ge = gamma_eff(p, probe, fb);
    if (!(ge > 0.0))
        throw InstabilityError("feedback loop is anti-damping (gamma_eff <= 0)", ge);
    const double k = p.kappa();
    const double s2 = k * k + 4.0 * p.omega_m * p.omega_m;
    const double G = probe.g_eff;
    const double A0 = fb.gain_a0;

    OccupancyBudget b;
    b.gamma_eff = ge;
    b.c_eff = 4.0 * G * G / (k * ge);
    b.n_T = p.gamma / ge * (p.n_m_thermal + half);
    b.n_ba = b.c_eff * k * k / s2 * (2.0 * half + 2.0 * p.n_c_thermal);
    b.n_fb = A0 * A0 / (2.0 * p.kappa_e * ge) *
             (p.n_add + half + 8.0 * k * p.kappa_e * p.n_c_thermal / s2);
    b.n_m = b.n_T + b.n_ba + b.n_fb - half;
    return b;
}

}  // namespace

double gamma_fb(const SystemParams& p, const Tone& probe, const FeedbackConfig& fb) {
    return 4.0 * probe.g_eff * fb.gain_a0 / susceptibility_norm(p);
}

double gamma_eff(const SystemParams& p, const Tone& probe, const FeedbackConfig& fb) {
    const double s = susceptibility_norm(p);
    const double proj =
        (p.kappa() * std::sin(fb.phase_phi) - 2.0 * p.omega_m * std::cos(fb.phase_phi)) / s;
    return p.gamma + gamma_fb(p, probe, fb) * proj;
}

double optimal_feedback_phase(const SystemParams& p) {
    return std::atan2(p.kappa(), -2.0 * p.omega_m);
}

OccupancyBudget occupancy_budget(const SystemParams& p, const Tone& probe,
                                 const FeedbackConfig& fb) {
    return budget_impl(p, probe, fb, 0.5);
}

OccupancyBudget classical_budget(const SystemParams& p, const Tone& probe,
                                 const FeedbackConfig& fb) {
    return budget_impl(p, probe, fb, 0.0);
}

double occupancy_from_asymmetry(double a_plus, double a_minus) {
    if (!(a_plus >= 0.0))
        throw InvalidArgument("anti-Stokes weight must be >= 0");
    if (!(a_minus > a_plus))
        throw InvalidArgument("non-physical sideband weights: A- <= A+ (squashing or Kerr dominated)");
    return a_plus / (a_minus - a_plus);
}

double asymmetry_eta(double a_plus, double a_minus) {
    if (!(a_minus > 0.0)) throw InvalidArgument("Stokes weight must be > 0");
    return (a_minus - a_plus) / a_minus;
}

double cavity_noise_psd(const SystemParams& p, double omega) {
    const double k = p.kappa();
    const double d = omega - p.omega_c;
    return p.kappa_e * k * p.n_c_thermal / (d * d + 0.25 * k * k);
}

double sideband_cooling_rate(const SystemParams& p, const Tone& tone) {
    const double k = p.kappa();
    const double h2 = 0.25 * k * k;
    const double dp = tone.detuning + p.omega_m;
    const double dm = tone.detuning - p.omega_m;
    return tone.g_eff * tone.g_eff * k * (1.0 / (h2 + dp * dp) - 1.0 / (h2 + dm * dm));
}

GainScanResult minimize_occupancy_over_gain(const SystemParams& p, const Tone& probe,
                                            double phase_phi, double a0_min, double a0_max,
                                            int scan_points) {
    if (!(a0_min > 0.0 && a0_max > a0_min) || scan_points < 3)
        throw InvalidArgument("gain scan needs 0 < a0_min < a0_max and >= 3 points");
    FeedbackConfig fb;
    fb.phase_phi = phase_phi;
    auto n_at = [&](double log_a0) {
        fb.gain_a0 = std::exp(log_a0);
        try {
            return occupancy_budget(p, probe, fb).n_m;
        } catch (const InstabilityError&) {
            return std::numeric_limits<double>::infinity();
        }
    };
    const double lo = std::log(a0_min), hi = std::log(a0_max);
    const double step = (hi - lo) / (scan_points - 1);
    int best = 0;
    double best_n = std::numeric_limits<double>::infinity();
    for (int i = 0; i < scan_points; ++i) {
        const double n = n_at(lo + i * step);
        if (n < best_n) best_n = n, best = i;
    }
    double a = lo + std::max(best - 1, 0) * step;
    double b = lo + std::min(best + 1, scan_points - 1) * step;
    const double r = 0.5 * (std::sqrt(5.0) - 1.0);
    double c = b - r * (b - a), d = a + r * (b - a);
    double fc = n_at(c), fd = n_at(d);
    for (int it = 0; it < 200 && (b - a) > 1e-13; ++it) {
        if (fc < fd) {
            b = d, d = c, fd = fc;
            c = b - r * (b - a), fc = n_at(c);
        } else {
            a = c, c = d, fc = fd;
            d = a + r * (b - a), fd = n_at(d);
        }
    }
    GainScanResult res;
    res.gain_a0 = std::exp(0.5 * (a + b));
    fb.gain_a0 = res.gain_a0;
    res.budget = occupancy_budget(p, probe, fb);
    return res;
}

}  // namespace coldamp
