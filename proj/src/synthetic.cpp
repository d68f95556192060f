#include "coldamp/synthetic.hpp"

#include <random>

#include "coldamp/closed_form.hpp"
#include "coldamp/floquet.hpp"

namespace coldamp {

std::vector<CalibrationTrace> synthetic_nadd_traces(const SystemParams& params, double n_m_thermal,
                                                    double detuning, double g_shared,
                                                    const std::vector<double>& powers,
                                                    double system_gain, double relative_noise,
                                                    std::uint64_t seed, int points) {
    if (points < 7) throw InvalidArgument("synthetic traces need >= 7 points");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<CalibrationTrace> out;
    for (double pw : powers) {
        if (!(pw > 0.0)) throw InvalidArgument("trace powers must be > 0");
        const double g = g_shared * std::sqrt(pw);
        const double width = params.gamma + sideband_cooling_rate(params, Tone{detuning, g});
        const double centre = -detuning;
        std::vector<double> grid(points);
        for (int i = 0; i < points; ++i)
            grid[i] = centre + width * (-10.0 + 20.0 * i / (points - 1));
        const auto model =
            n_add_trace_model(params, n_m_thermal, detuning, g, params.n_add, system_gain, grid);
        CalibrationTrace t;
        t.power = pw;
        t.spectrum.frequencies = grid;
        for (double v : model) t.spectrum.psd.push_back(v * (1.0 + relative_noise * normal(rng)));
        out.push_back(std::move(t));
    }
    return out;
}

std::vector<ThermometryPoint> synthetic_thermometry_sweep(
    const SystemParams& params, double n_m_thermal, const ThermometryOptions& opts,
    const std::vector<double>& nominal_g, double area_scale, double coupling_scale,
    double relative_noise, std::uint64_t seed, int points) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<ThermometryPoint> out;
    for (double g : nominal_g) {
        ThermometryPoint pt;
        pt.g_t = g;
        pt.spectrum =
            thermometry_model_spectrum(params, n_m_thermal, opts, coupling_scale * g, points);
        for (double& v : pt.spectrum.psd) v = area_scale * v * (1.0 + relative_noise * normal(rng));
        out.push_back(std::move(pt));
    }
    return out;
}

std::vector<AsymmetryPoint> synthetic_asymmetry_curve(const KerrTemplate& tmpl, double k_eff,
                                                      double gain_scale,
                                                      const std::vector<double>& gains,
                                                      double eta_noise, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<AsymmetryPoint> out;
    for (double g : gains) {
        const double eta = model_eta(tmpl, k_eff, gain_scale, g);
        out.push_back({g, eta + eta_noise * normal(rng), eta_noise});
    }
    return out;
}

double thermometry_reference_constant(const SystemParams& params, double n_m_thermal,
                                      const ThermometryOptions& opts, double area_scale,
                                      double coupling_scale) {
    const double g = coupling_scale * opts.g_ref;
    const Spectrum s = thermometry_model_spectrum(params, n_m_thermal, opts, g,
                                                  opts.points_per_spectrum);
    const LorentzianFit f =
        fit_lorentzian(s, s.frequencies.front(), s.frequencies.back(), std::nullopt, true);
    const ToneSet ts = ToneSet::make(Tone{opts.probe_detuning, 0.0},
                                     Tone{opts.probe_detuning + opts.delta, g});
    FloquetProblem fp = FloquetProblem::from_params(params, ts);
    fp.mech_occupancy_eff = n_m_thermal;
    return mode_occupancy(fp) / (area_scale * f.area);
}

}  // namespace coldamp
