#pragma once

#include <cstdint>
#include <vector>

#include "coldamp/inference.hpp"

namespace coldamp {

/// Model traces of the anti-Stokes line of a single red-detuned tone at a set of
/// relative powers, with multiplicative Gaussian scatter (averaged periodograms).
/// Each trace spans +-10 linewidths around the line.
std::vector<CalibrationTrace> synthetic_nadd_traces(const SystemParams& params, double n_m_thermal,
                                                    double detuning, double g_shared,
                                                    const std::vector<double>& powers,
                                                    double system_gain, double relative_noise,
                                                    std::uint64_t seed, int points = 201);

/// Thermometry-tone sweep; the true coupling is coupling_scale * nominal and the
/// measured spectra are area_scale * model.
std::vector<ThermometryPoint> synthetic_thermometry_sweep(
    const SystemParams& params, double n_m_thermal, const ThermometryOptions& opts,
    const std::vector<double>& nominal_g, double area_scale, double coupling_scale,
    double relative_noise, std::uint64_t seed, int points = 201);

/// Asymmetry-versus-gain curve with additive Gaussian scatter of eta_noise.
std::vector<AsymmetryPoint> synthetic_asymmetry_curve(const KerrTemplate& tmpl, double k_eff,
                                                      double gain_scale,
                                                      const std::vector<double>& gains,
                                                      double eta_noise, std::uint64_t seed);

/// True reference calibration constant for a synthetic thermometry sweep.
double thermometry_reference_constant(const SystemParams& params, double n_m_thermal,
                                      const ThermometryOptions& opts, double area_scale,
                                      double coupling_scale);

}  // namespace coldamp
