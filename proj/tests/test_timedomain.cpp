#include "doctest.h"

#include <cmath>
#include <complex>

#include "coldamp/closed_form.hpp"
#include "coldamp/timedomain.hpp"

using namespace coldamp;

namespace {

struct Setup {
    SystemParams p;
    ToneSet tones;
    FeedbackConfig fb;
    SimConfig sim;
};

Setup setup(double ratio, double phase_offset, double linewidths) {
    Setup s;
    s.p = SystemParams::membrane_device();
    s.p.n_m_thermal = thermal_occupancy(0.020, s.p.omega_m);
    const Tone probe{from_hz(-2e3), from_hz(6.32e3)};
    s.tones = ToneSet::make(probe, Tone{probe.detuning + from_hz(-48e3), 0.0});
    s.fb.filter_bandwidth = from_hz(200e3);
    s.fb.phase_phi = optimal_feedback_phase(s.p);
    FeedbackConfig unit = s.fb;
    unit.gain_a0 = 1.0;
    s.fb.gain_a0 = ratio * s.p.gamma / gamma_fb(s.p, probe, unit);
    s.fb.phase_phi += phase_offset;
    const double ge = gamma_eff(s.p, probe, s.fb);
    s.sim.dt = kTwoPi / (24.0 * s.p.omega_m);
    s.sim.scale_q = choose_scale_q(s.p.omega_m, ge);
    s.sim.duration = linewidths / (s.sim.scale_q * ge);
    s.sim.seed = 42;
    s.sim.quantum_noise = false;
    return s;
}

}  // namespace

TEST_SUITE("timedomain") {

TEST_CASE("chain has unit gain and the requested phase at the mechanical frequency") {
    const double wm = from_hz(707.2e3);
    for (double phase : {-2.0, 0.0, 0.7, 2.3}) {
        const FeedbackChain ch(wm, kTwoPi / (24.0 * wm), from_hz(200e3), phase);
        const auto h = ch.response(wm);
        CHECK(std::abs(h) == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(std::remainder(std::arg(h) - phase, kTwoPi) == doctest::Approx(0.0).epsilon(1e-12));
        CHECK(ch.filter_stable());
    }
}

TEST_CASE("sample-by-sample filtering matches the discrete response") {
    const double wm = from_hz(707.2e3), dt = kTwoPi / (24.0 * wm);
    FeedbackChain ch(wm, dt, from_hz(200e3), 0.9);
    for (double w : {wm, 0.8 * wm, 1.3 * wm}) {
        FeedbackChain c = ch;
        // response() includes the hold; strip it for the sampled output
        const std::complex<double> hold =
            std::exp(std::complex<double>(0.0, -w * dt / 2.0)) * std::sin(w * dt / 2.0) / (w * dt / 2.0);
        const std::complex<double> h = c.response(w) / hold;
        double sc = 0.0, ss = 0.0, cc = 0.0, sn = 0.0, cs = 0.0;
        for (int n = 0; n < 20000; ++n) {
            const double y = c.process(std::cos(w * n * dt));
            if (n < 10000) continue;
            const double co = std::cos(w * n * dt), si = std::sin(w * n * dt);
            sc += y * co, ss += y * si, cc += co * co, sn += si * si, cs += co * si;
        }
        // y = Re(h e^{i w t}) = hr cos - hi sin
        const double det = cc * sn - cs * cs;
        const double hr = (sc * sn - ss * cs) / det;
        const double hi = -(ss * cc - sc * cs) / det;
        CHECK(hr == doctest::Approx(h.real()).epsilon(1e-6));
        CHECK(hi == doctest::Approx(h.imag()).epsilon(1e-6));
    }
}

TEST_CASE("quality-factor scaling") {
    CHECK(choose_scale_q(1000.0, 1.0, 100.0) == doctest::Approx(10.0));
    CHECK(choose_scale_q(1000.0, 100.0, 100.0) == 1.0);
    CHECK_THROWS_AS(choose_scale_q(1000.0, -1.0), InvalidArgument);
}

TEST_CASE("ring-down rate agrees with the closed-form damping") {
    for (double ratio : {2.0, 10.0, 100.0}) {
        const Setup s = setup(ratio, 0.0, 3000.0);
        const double rd = ringdown_gamma_eff(s.p, s.tones, s.fb, s.sim);
        CHECK(rd == doctest::Approx(gamma_eff(s.p, s.tones.probe, s.fb)).epsilon(0.03));
    }
}

TEST_CASE("identical seeds give bit-identical trajectories") {
    Setup s = setup(10.0, 0.0, 300.0);
    s.sim.record_stride = 7;
    const SimResult a = simulate(s.p, s.tones, s.fb, s.sim);
    const SimResult b = simulate(s.p, s.tones, s.fb, s.sim);
    REQUIRE(a.trajectory.size() == b.trajectory.size());
    REQUIRE(!a.trajectory.empty());
    bool same = true;
    for (std::size_t i = 0; i < a.trajectory.size(); ++i)
        same = same && a.trajectory[i].x == b.trajectory[i].x && a.trajectory[i].p == b.trajectory[i].p &&
               a.trajectory[i].force == b.trajectory[i].force;
    CHECK(same);
    CHECK(a.occupancy == b.occupancy);
    s.sim.seed = 43;
    const SimResult c = simulate(s.p, s.tones, s.fb, s.sim);
    CHECK(c.trajectory[10].x != a.trajectory[10].x);
}

TEST_CASE("simulated damping and occupancy are near the closed form") {
    const Setup s = setup(10.0, 0.0, 6000.0);
    const SimResult r = simulate(s.p, s.tones, s.fb, s.sim);
    CHECK_FALSE(r.unstable);
    CHECK(r.gamma_eff_fit == doctest::Approx(r.gamma_eff_expected).epsilon(0.1));
    const double n = classical_budget(s.p, s.tones.probe, s.fb).n_m;
    CHECK(r.occupancy == doctest::Approx(n).epsilon(0.15));
}

TEST_CASE("anti-damping loop is flagged unstable") {
    Setup s = setup(10.0, 0.0, 300.0);
    s.fb.phase_phi += M_PI;
    s.sim.scale_q = 1000.0;
    s.sim.duration = 300.0 / (s.sim.scale_q * s.p.gamma);
    const SimResult r = simulate(s.p, s.tones, s.fb, s.sim);
    CHECK(r.unstable);
    CHECK(std::isnan(r.gamma_eff_fit));
}

TEST_CASE("configuration errors") {
    Setup s = setup(10.0, 0.0, 300.0);
    SimConfig bad = s.sim;
    bad.dt = kTwoPi / (10.0 * s.p.omega_m);
    CHECK_THROWS_AS(simulate(s.p, s.tones, s.fb, bad), InvalidArgument);
    bad = s.sim;
    bad.duration = 1.0 / (s.sim.scale_q * s.p.gamma * 11.0);
    CHECK_THROWS_AS(simulate(s.p, s.tones, s.fb, bad), InvalidArgument);
    FeedbackConfig fb = s.fb;
    fb.filter_bandwidth = 0.0;
    CHECK_THROWS_AS(simulate(s.p, s.tones, fb, s.sim), InvalidArgument);
}

}
