import math

import numpy as np
import pytest

import coldamp as ca


def device(temperature_k=0.020):
    p = ca.SystemParams.membrane_device()
    p.n_m_thermal = ca.thermal_occupancy(temperature_k, p.omega_m)
    p.n_c_thermal = 0.42
    p.n_add = 2.5
    return p


PROBE = ca.Tone(ca.from_hz(-2e3), ca.from_hz(6.32e3))


def test_unit_conversion():
    assert ca.to_hz(ca.from_hz(707.2e3)) == pytest.approx(707.2e3)


def test_minimum_occupancy_and_counterfactual():
    p = device()
    phi = ca.optimal_feedback_phase(p)
    _, best = ca.minimize_occupancy_over_gain(p, PROBE, phi, ca.from_hz(1e-3), ca.from_hz(1e6))
    assert 1.2 <= best.n_m <= 2.0
    p.n_c_thermal = 0.0
    _, best0 = ca.minimize_occupancy_over_gain(p, PROBE, phi, ca.from_hz(1e-3), ca.from_hz(1e6))
    assert best0.n_m < 1.0


def test_optimal_phase_gives_full_damping():
    p = device()
    fb = ca.FeedbackConfig(ca.from_hz(10.0), ca.optimal_feedback_phase(p))
    assert ca.gamma_eff(p, PROBE, fb) == pytest.approx(p.gamma + ca.gamma_fb(p, PROBE, fb))


def test_instability_raises():
    p = device()
    fb = ca.FeedbackConfig(ca.from_hz(50.0), ca.optimal_feedback_phase(p) + math.pi)
    with pytest.raises(ca.InstabilityError):
        ca.occupancy_budget(p, PROBE, fb)


def test_asymmetry_inversion_errors():
    assert ca.occupancy_from_asymmetry(2.0, 3.0) == pytest.approx(2.0)
    with pytest.raises(ca.InvalidArgument):
        ca.occupancy_from_asymmetry(3.0, 2.0)


def test_spectrum_and_weights():
    p = device()
    tones = ca.ToneSet(PROBE, ca.Tone(PROBE.detuning + ca.from_hz(-48e3), ca.from_hz(100)))
    fp = ca.FloquetProblem(p, tones, ca.KerrModulation(ca.from_hz(1.2e3)))
    b = ca.occupancy_budget(p, PROBE, ca.FeedbackConfig(ca.from_hz(3000.0), ca.optimal_feedback_phase(p)))
    fp.mech_gamma_eff = b.gamma_eff
    fp.mech_occupancy_eff = b.n_m
    grid = ca.default_grid(fp, 101)
    s = ca.output_spectrum(fp, grid)
    assert isinstance(s.psd, np.ndarray)
    assert len(s) == grid.size
    assert np.all(s.psd > 0)
    a_plus, a_minus = ca.model_sideband_weights(fp)
    n, _ = ca.invert_occupancy(fp, a_plus, a_minus)
    assert n == pytest.approx(b.n_m, rel=0.01)


def test_lorentzian_fit_on_arrays():
    w = np.linspace(-50.0, 50.0, 401)
    y = 1.0 + 3.0 / (1.0 + (2.0 * w / 4.0) ** 2)
    f = ca.fit_lorentzian(ca.Spectrum(w, y), -50.0, 50.0)
    assert f.fwhm == pytest.approx(4.0, rel=1e-8)
    assert f.area == pytest.approx(0.5 * math.pi * 3.0 * 4.0, rel=1e-8)


def test_short_simulation_runs_deterministically():
    p = device()
    tones = ca.ToneSet(PROBE, ca.Tone(PROBE.detuning + ca.from_hz(-48e3), 0.0))
    fb = ca.FeedbackConfig(0.0, ca.optimal_feedback_phase(p), ca.from_hz(200e3))
    unit = ca.FeedbackConfig(1.0, fb.phase_phi, fb.filter_bandwidth)
    fb.gain_a0 = 10.0 * p.gamma / ca.gamma_fb(p, PROBE, unit)
    ge = ca.gamma_eff(p, PROBE, fb)
    sim = ca.SimConfig()
    sim.dt = 2.0 * math.pi / (24.0 * p.omega_m)
    sim.scale_q = ca.choose_scale_q(p.omega_m, ge)
    sim.duration = 300.0 / (sim.scale_q * ge)
    sim.seed = 4
    a = ca.simulate(p, tones, fb, sim)
    b = ca.simulate(p, tones, fb, sim)
    assert a["occupancy"] == b["occupancy"]
    assert not a["unstable"]
