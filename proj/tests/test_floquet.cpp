#include "doctest.h"

#include <atomic>
#include <cmath>

#include <Eigen/Eigenvalues>

#include "coldamp/closed_form.hpp"
#include "coldamp/floquet.hpp"
#include "coldamp/inference.hpp"

using namespace coldamp;

namespace {

/// Narrow-cavity single-tone problem (kappa = omega_m / 100, no cavity noise).
FloquetProblem resolved_problem(double tone_detuning_over_wm, double n, double cooperativity = 1e-6) {
    SystemParams p = SystemParams::membrane_device();
    p.kappa_i = 0.002 * p.omega_m;
    p.kappa_e = 0.008 * p.omega_m;
    p.n_c_thermal = 0.0;
    const double g = std::sqrt(cooperativity * p.kappa() * p.gamma / 4.0);
    const ToneSet ts = ToneSet::make(Tone{0.0, 0.0}, Tone{tone_detuning_over_wm * p.omega_m, g});
    FloquetProblem fp = FloquetProblem::from_params(p, ts);
    fp.mech_occupancy_eff = n;
    return fp;
}

FloquetProblem device_problem(double k_eff_hz) {
    SystemParams p = SystemParams::membrane_device();
    p.n_m_thermal = thermal_occupancy(0.020, p.omega_m);
    p.n_c_thermal = 0.42;
    p.n_add = 2.5;
    const Tone probe{from_hz(-2e3), from_hz(6.32e3)};
    const ToneSet ts = ToneSet::make(probe, Tone{probe.detuning + from_hz(-48e3), from_hz(100)});
    FloquetProblem fp = FloquetProblem::from_params(p, ts, KerrModulation{from_hz(k_eff_hz), 0.0});
    const OccupancyBudget b =
        occupancy_budget(p, probe, FeedbackConfig{from_hz(2.0), optimal_feedback_phase(p), 0.0});
    fp.mech_gamma_eff = b.gamma_eff;
    fp.mech_occupancy_eff = b.n_m;
    return fp;
}

}  // namespace

TEST_SUITE("floquet") {

TEST_CASE("response solves the assembled system") {
    const FloquetProblem fp = device_problem(1.2e3);
    for (double w : {0.0, 0.3 * fp.params.omega_m, fp.params.omega_m, -fp.params.omega_m}) {
        const LinearSystem sys = assemble_system(fp, w);
        const Mat6 X = solve_response(fp, w);
        CHECK((sys.matrix * X - sys.coupling).norm() <= 1e-9 * sys.coupling.norm());
    }
}

TEST_CASE("drift matrix is stable at the operating point") {
    const FloquetProblem fp = device_problem(1.2e3);
    Eigen::ComplexEigenSolver<Mat6> es(drift_matrix(fp));
    for (int i = 0; i < 6; ++i) CHECK(es.eigenvalues()(i).real() < 0.0);
}

TEST_CASE("anti-Stokes line width equals intrinsic plus optical damping") {
    // red tone at -omega_m with cooperativity 1: line FWHM = gamma (1 + C)
    const FloquetProblem fp = resolved_problem(-1.0, 10.0, 1.0);
    const double expected =
        fp.params.gamma + sideband_cooling_rate(fp.params, fp.tones.thermometry);
    const double c = effective_line_center(fp);
    std::vector<double> grid;
    for (int i = 0; i <= 800; ++i) grid.push_back(c + expected * (-20.0 + 40.0 * i / 800));
    const Spectrum s = output_spectrum(fp, grid);
    const LorentzianFit f = fit_lorentzian(s, grid.front(), grid.back());
    CHECK(f.fwhm == doctest::Approx(expected).epsilon(2e-3));
    CHECK(f.center == doctest::Approx(fp.params.omega_m).epsilon(1e-6));
}

TEST_CASE("sideband weights are linear in n and n+1") {
    const double a1 = model_sideband_weights(resolved_problem(-1.0, 1.0)).first;
    const double a5 = model_sideband_weights(resolved_problem(-1.0, 5.0)).first;
    CHECK(a5 / a1 == doctest::Approx(5.0).epsilon(1e-3));
    const double b1 = model_sideband_weights(resolved_problem(1.0, 1.0)).second;
    const double b5 = model_sideband_weights(resolved_problem(1.0, 5.0)).second;
    CHECK(b5 / b1 == doctest::Approx(3.0).epsilon(1e-3));
}

TEST_CASE("mode occupancy follows the weighted bath average") {
    // cooperativity 1: half the damping comes from an almost zero-temperature optical bath
    const FloquetProblem fp = resolved_problem(-1.0, 100.0, 1.0);
    const double k = fp.params.kappa(), w = fp.params.omega_m;
    const double n_opt = k * k / (16.0 * w * w);
    CHECK(mode_occupancy(fp) == doctest::Approx(0.5 * (100.0 + n_opt)).epsilon(2e-3));
}

TEST_CASE("transduction factors are unity in the ideal case") {
    const auto [tp, tm] = transduction_correction(resolved_problem(-1.0, 3.0));
    CHECK(tp == 1.0);
    CHECK(tm == 1.0);
    const auto [kp, km] = transduction_correction(device_problem(1.2e3));
    CHECK(kp != 1.0);
    CHECK(km != 1.0);
}

TEST_CASE("grid doubling changes integrated weights by less than 0.1 percent") {
    const FloquetProblem fp = device_problem(1.2e3);
    const auto [p1, m1] = model_sideband_weights(fp, 0, 1);
    const auto [p2, m2] = model_sideband_weights(fp, 0, 2);
    CHECK(std::abs(p2 / p1 - 1.0) < 1e-3);
    CHECK(std::abs(m2 / m1 - 1.0) < 1e-3);
}

TEST_CASE("spectrum is positive and above the floor") {
    const FloquetProblem fp = device_problem(0.0);
    const Spectrum s = output_spectrum(fp, default_grid(fp, 201));
    for (double v : s.psd) CHECK(v >= spectrum_floor(fp) - 1e-12);
    CHECK(s.frame == Frame::ThermometryRotatingFrame);
}

TEST_CASE("parallel_for visits every index once") {
    std::vector<int> hits(1000, 0);
    std::atomic<int> total{0};
    parallel_for(hits.size(), [&](std::size_t i) {
        hits[i] += 1;
        total += 1;
    });
    CHECK(total == 1000);
    for (int h : hits) CHECK(h == 1);
}

}
