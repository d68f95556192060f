#include "doctest.h"

#include <cmath>

#include "coldamp/closed_form.hpp"

using namespace coldamp;

namespace {

SystemParams device() {
    SystemParams p = SystemParams::membrane_device();
    p.n_m_thermal = thermal_occupancy(0.020, p.omega_m);
    p.n_c_thermal = 0.42;
    p.n_add = 2.5;
    return p;
}

const Tone kProbe{from_hz(-2e3), from_hz(6.32e3)};

}  // namespace

TEST_SUITE("closed-form") {

TEST_CASE("maximum feedback damping") {
    const SystemParams p = device();
    FeedbackConfig fb{from_hz(10.0), 0.0, 0.0};
    const double s = std::hypot(p.kappa(), 2.0 * p.omega_m);
    CHECK(gamma_fb(p, kProbe, fb) == doctest::Approx(4.0 * kProbe.g_eff * fb.gain_a0 / s));
}

TEST_CASE("optimal phase found by brute-force scan") {
    const SystemParams p = device();
    FeedbackConfig fb{from_hz(10.0), 0.0, 0.0};
    double best = -1e300, best_phi = 0.0;
    for (int i = 0; i < 100000; ++i) {
        fb.phase_phi = -M_PI + 2.0 * M_PI * i / 100000;
        const double g = gamma_eff(p, kProbe, fb);
        if (g > best) best = g, best_phi = fb.phase_phi;
    }
    CHECK(optimal_feedback_phase(p) == doctest::Approx(best_phi).epsilon(1e-4));
    fb.phase_phi = optimal_feedback_phase(p);
    CHECK(gamma_eff(p, kProbe, fb) ==
          doctest::Approx(p.gamma + gamma_fb(p, kProbe, fb)).epsilon(1e-13));
    fb.phase_phi += M_PI;
    CHECK(gamma_eff(p, kProbe, fb) ==
          doctest::Approx(p.gamma - gamma_fb(p, kProbe, fb)).epsilon(1e-13));
}

TEST_CASE("budget without drive or feedback returns the bath") {
    SystemParams p = device();
    const OccupancyBudget b = occupancy_budget(p, Tone{0.0, 0.0}, FeedbackConfig{});
    CHECK(b.n_m == doctest::Approx(p.n_m_thermal).epsilon(1e-14));
    CHECK(b.n_ba == 0.0);
    CHECK(b.n_fb == 0.0);
    CHECK(b.gamma_eff == p.gamma);
}

TEST_CASE("budget components and their scaling") {
    const SystemParams p = device();
    FeedbackConfig fb{from_hz(5.0), optimal_feedback_phase(p), 0.0};
    const OccupancyBudget q = occupancy_budget(p, kProbe, fb);
    CHECK(q.n_m == doctest::Approx(q.n_T + q.n_ba + q.n_fb - 0.5).epsilon(1e-14));
    CHECK(q.n_T == doctest::Approx(p.gamma / q.gamma_eff * (p.n_m_thermal + 0.5)));
    // n_ba * gamma_eff is independent of the feedback gain
    FeedbackConfig fb2 = fb;
    fb2.gain_a0 *= 3.0;
    const OccupancyBudget q2 = occupancy_budget(p, kProbe, fb2);
    CHECK(q2.n_ba * q2.gamma_eff == doctest::Approx(q.n_ba * q.gamma_eff).epsilon(1e-12));
    CHECK(q2.n_fb * q2.gamma_eff == doctest::Approx(9.0 * q.n_fb * q.gamma_eff).epsilon(1e-12));

    const OccupancyBudget c = classical_budget(p, kProbe, fb);
    CHECK(c.n_T == doctest::Approx(p.gamma / c.gamma_eff * p.n_m_thermal));
    CHECK(c.n_m < q.n_m);
}

TEST_CASE("anti-damping feedback is reported as instability") {
    const SystemParams p = device();
    FeedbackConfig fb{from_hz(50.0), optimal_feedback_phase(p) + M_PI, 0.0};
    CHECK(gamma_eff(p, kProbe, fb) < 0.0);
    CHECK_THROWS_AS(occupancy_budget(p, kProbe, fb), InstabilityError);
}

TEST_CASE("asymmetry inversion") {
    for (double n : {0.01, 0.5, 1.0, 5.0, 100.0}) {
        CHECK(occupancy_from_asymmetry(n, n + 1.0) == doctest::Approx(n).epsilon(1e-12));
        CHECK(asymmetry_eta(n, n + 1.0) == doctest::Approx(1.0 / (n + 1.0)));
    }
    CHECK_THROWS_AS(occupancy_from_asymmetry(2.0, 1.0), InvalidArgument);
    CHECK_THROWS_AS(asymmetry_eta(1.0, 0.0), InvalidArgument);
    CHECK(asymmetry_eta(1.2, 1.0) < 0.0);
}

TEST_CASE("sideband cooling rate") {
    const SystemParams p = device();
    const double g = from_hz(1e3);
    const double red = sideband_cooling_rate(p, Tone{-p.omega_m, g});
    CHECK(red > 0.0);
    CHECK(sideband_cooling_rate(p, Tone{p.omega_m, g}) == doctest::Approx(-red));
    // resolved-sideband limit 4 G^2 / kappa, corrected by the counter-rotating term
    const double k = p.kappa();
    const double expected = 4.0 * g * g / k - g * g * k / (0.25 * k * k + 4.0 * p.omega_m * p.omega_m);
    CHECK(red == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("cavity noise peaks at the cavity frequency") {
    const SystemParams p = device();
    CHECK(cavity_noise_psd(p, p.omega_c) ==
          doctest::Approx(4.0 * p.kappa_e * p.n_c_thermal / p.kappa()));
    CHECK(cavity_noise_psd(p, p.omega_c + 0.5 * p.kappa()) ==
          doctest::Approx(0.5 * cavity_noise_psd(p, p.omega_c)));
}

TEST_CASE("gain optimum agrees with a dense scan") {
    const SystemParams p = device();
    const double phi = optimal_feedback_phase(p);
    const GainScanResult r =
        minimize_occupancy_over_gain(p, kProbe, phi, from_hz(1e-3), from_hz(1e5));
    FeedbackConfig fb{0.0, phi, 0.0};
    double best = 1e300;
    for (int i = 0; i < 20000; ++i) {
        fb.gain_a0 = from_hz(1e-3) * std::pow(1e8, i / 19999.0);
        best = std::min(best, occupancy_budget(p, kProbe, fb).n_m);
    }
    CHECK(r.budget.n_m <= best * (1.0 + 1e-9));
    CHECK(r.budget.n_m == doctest::Approx(best).epsilon(1e-5));
    CHECK_THROWS_AS(minimize_occupancy_over_gain(p, kProbe, phi, 1.0, 0.5), InvalidArgument);
}

}
