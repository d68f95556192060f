#include "doctest.h"

#include <cmath>
#include <random>

#include "coldamp/closed_form.hpp"
#include "coldamp/inference.hpp"
#include "coldamp/synthetic.hpp"

using namespace coldamp;

namespace {

Spectrum lorentzian(double c, double fwhm, double h, double base, int n = 401, double span = 10.0) {
    Spectrum s;
    for (int i = 0; i < n; ++i) {
        const double w = c + fwhm * span * (-1.0 + 2.0 * i / (n - 1));
        const double x = 2.0 * (w - c) / fwhm;
        s.frequencies.push_back(w);
        s.psd.push_back(base + h / (1.0 + x * x));
    }
    return s;
}

double mean(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

double stdev(const std::vector<double>& v) {
    const double m = mean(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace

TEST_SUITE("inference") {

TEST_CASE("noiseless Lorentzian is recovered exactly") {
    const Spectrum s = lorentzian(1000.0, 20.0, 5.0, 0.3);
    const LorentzianFit f = fit_lorentzian(s, 800.0, 1200.0);
    CHECK(f.center == doctest::Approx(1000.0).epsilon(1e-9));
    CHECK(f.fwhm == doctest::Approx(20.0).epsilon(1e-7));
    CHECK(f.height == doctest::Approx(5.0).epsilon(1e-7));
    CHECK(f.baseline == doctest::Approx(0.3).epsilon(1e-6));
    CHECK(f.area == doctest::Approx(0.5 * M_PI * 5.0 * 20.0).epsilon(1e-7));
    CHECK(f.value(1010.0) == doctest::Approx(0.3 + 2.5).epsilon(1e-7));
}

TEST_CASE("reported standard errors match Monte Carlo scatter") {
    std::mt19937_64 rng(17);
    std::normal_distribution<double> nd(0.0, 0.05);
    std::vector<double> area, fwhm, area_err, fwhm_err;
    for (int k = 0; k < 300; ++k) {
        Spectrum s = lorentzian(0.0, 2.0, 1.0, 0.5, 201);
        for (double& v : s.psd) v += nd(rng);
        const LorentzianFit f = fit_lorentzian(s, -20.0, 20.0);
        area.push_back(f.area);
        fwhm.push_back(f.fwhm);
        area_err.push_back(f.area_error);
        fwhm_err.push_back(f.fwhm_error);
    }
    CHECK(mean(area_err) == doctest::Approx(stdev(area)).epsilon(0.2));
    CHECK(mean(fwhm_err) == doctest::Approx(stdev(fwhm)).epsilon(0.2));
    CHECK(std::abs(mean(area) - M_PI) < 4.0 * stdev(area) / std::sqrt(300.0));
}

TEST_CASE("proportional-noise fit is unbiased for periodogram-like scatter") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> nd(0.0, 0.1);
    std::vector<double> area, area_err;
    for (int k = 0; k < 200; ++k) {
        Spectrum s = lorentzian(0.0, 2.0, 10.0, 0.5, 201);
        for (double& v : s.psd) v *= 1.0 + nd(rng);
        const LorentzianFit f = fit_lorentzian(s, -20.0, 20.0, std::nullopt, true);
        area.push_back(f.area);
        area_err.push_back(f.area_error);
    }
    const double truth = 0.5 * M_PI * 10.0 * 2.0;
    CHECK(std::abs(mean(area) - truth) < 4.0 * stdev(area) / std::sqrt(200.0));
    CHECK(mean(area_err) == doctest::Approx(stdev(area)).epsilon(0.25));
}

TEST_CASE("degenerate windows") {
    const Spectrum flat = lorentzian(0.0, 1.0, 0.0, 1.0);
    CHECK_THROWS_AS(fit_lorentzian(flat, -5.0, 5.0), DegenerateWindowError);
    const Spectrum s = lorentzian(0.0, 1.0, 1.0, 0.0);
    CHECK_THROWS_AS(fit_lorentzian(s, 0.001, 0.002), DegenerateWindowError);
}

TEST_CASE("occupancy from fitted sidebands with corrections") {
    LorentzianFit plus, minus;
    plus.area = 2.0;
    plus.area_error = 0.02;
    minus.area = 3.3;
    minus.area_error = 0.03;
    const OccupancyEstimate e = extract_occupancy(plus, minus, {1.0, 0.9});
    CHECK(e.n == doctest::Approx(2.0 / (2.97 - 2.0)));
    // first-order propagation against finite differences
    const auto n_of = [](double ap, double am) { return ap / (am - ap); };
    const double h = 1e-6;
    const double dp = (n_of(2.0 + h, 2.97) - n_of(2.0 - h, 2.97)) / (2 * h);
    const double dm = (n_of(2.0, 2.97 + h) - n_of(2.0, 2.97 - h)) / (2 * h);
    CHECK(e.error == doctest::Approx(std::hypot(dp * 0.02, dm * 0.9 * 0.03)).epsilon(1e-5));
    CHECK_THROWS_AS(extract_occupancy(minus, plus, {1.0, 1.0}), InvalidArgument);
}

TEST_CASE("self-consistent inversion recovers the modeled occupancy") {
    SystemParams p = SystemParams::membrane_device();
    p.n_m_thermal = thermal_occupancy(0.020, p.omega_m);
    p.n_c_thermal = 0.42;
    const Tone probe{from_hz(-2e3), from_hz(6.32e3)};
    const ToneSet ts = ToneSet::make(probe, Tone{probe.detuning + from_hz(-48e3), from_hz(100)});
    // cooled regime, where the raw weights are Kerr-distorted by several percent
    for (double a0_hz : {200.0, 3000.0}) {
        FloquetProblem fp = FloquetProblem::from_params(p, ts, KerrModulation{from_hz(1.2e3), 0.0});
        const OccupancyBudget b =
            occupancy_budget(p, probe, FeedbackConfig{from_hz(a0_hz), optimal_feedback_phase(p), 0.0});
        fp.mech_gamma_eff = b.gamma_eff;
        fp.mech_occupancy_eff = b.n_m;
        const auto [ap, am] = model_sideband_weights(fp);
        const OccupancyEstimate e = invert_occupancy(fp, ap, am);
        CHECK(e.n == doctest::Approx(b.n_m).epsilon(0.01));
        // the uncorrected ratio is far off (or not even invertible)
        CHECK((am <= ap || std::abs(occupancy_from_asymmetry(ap, am) / b.n_m - 1.0) > 0.05));
    }
}

TEST_CASE("added noise from a white floor") {
    Spectrum s;
    for (int i = 0; i < 50; ++i) {
        s.frequencies.push_back(i);
        s.psd.push_back(2.0 * 3.0);
    }
    CHECK(n_add_from_floor(s, 2.0) == doctest::Approx(2.5));
}

TEST_CASE("added-noise calibration round trip") {
    SystemParams p = SystemParams::membrane_device();
    p.n_add = 2.5;
    const double nT = thermal_occupancy(0.020, p.omega_m);
    std::vector<double> powers;
    for (int k = 0; k < 6; ++k) powers.push_back(std::pow(10.0, 0.4 * k));
    const auto traces =
        synthetic_nadd_traces(p, nT, -p.omega_m, from_hz(2e3), powers, 3.7, 0.01, 99);
    const CalibrationResult r = calibrate_n_add(traces, p, nT);
    CHECK(r.n_add_fit == doctest::Approx(2.5).epsilon(0.05));
    CHECK(std::abs(r.n_add_fit - 2.5) < 4.0 * r.n_add_error);
    CHECK(r.system_gain == doctest::Approx(3.7).epsilon(0.05));
    CHECK(r.trace_rms_residual.size() == 6);
}

TEST_CASE("thermometry sweep with the wrong detuning sign is rejected") {
    SystemParams p = SystemParams::membrane_device();
    const double nT = thermal_occupancy(0.050, p.omega_m);
    ThermometryOptions truth;
    std::vector<double> g;
    for (double hz : {150.0, 500.0, 900.0, 1300.0}) g.push_back(from_hz(hz));
    const auto sweep = synthetic_thermometry_sweep(p, nT, truth, g, 1.0, 1.0, 0.01, 5);
    ThermometryOptions wrong = truth;
    wrong.delta = -truth.delta;
    CHECK_THROWS_AS(calibrate_thermometry(sweep, p, nT, wrong), ModelMismatchError);
}

TEST_CASE("Kerr constant changes the modeled asymmetry") {
    KerrTemplate t;
    t.params = SystemParams::membrane_device();
    t.params.n_m_thermal = thermal_occupancy(0.020, t.params.omega_m);
    t.params.n_c_thermal = 0.42;
    t.params.n_add = 2.5;
    const Tone probe{from_hz(-2e3), from_hz(6.32e3)};
    t.tones = ToneSet::make(probe, Tone{probe.detuning + from_hz(-48e3), from_hz(100)});
    t.feedback_phase = optimal_feedback_phase(t.params);
    const double g = from_hz(100.0);
    CHECK(std::abs(model_eta(t, from_hz(1.2e3), 1.0, g) - model_eta(t, 0.0, 1.0, g)) > 0.01);
    const std::vector<AsymmetryPoint> two{{g, 0.1, 0.01}, {2.0 * g, 0.1, 0.01}};
    CHECK_THROWS_AS(fit_kerr(two, t), InvalidArgument);
}

}
