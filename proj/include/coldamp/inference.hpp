#pragma once

#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "coldamp/floquet.hpp"
#include "coldamp/lsq.hpp"
#include "coldamp/model.hpp"

namespace coldamp {

class DegenerateWindowError : public Error {
public:
    using Error::Error;
};

class IdentifiabilityError : public Error {
public:
    using Error::Error;
};

class ModelMismatchError : public Error {
public:
    ModelMismatchError(const std::string& what, double worst_sigma)
        : Error(what), worst_sigma_(worst_sigma) {}
    double worst_sigma() const { return worst_sigma_; }

private:
    double worst_sigma_;
};

// ---------------------------------------------------------------- Lorentzian

struct LorentzianFit {
    double center = 0.0;    // rad/s
    double fwhm = 0.0;      // rad/s
    double height = 0.0;    // above baseline; negative for dips
    double baseline = 0.0;
    double area = 0.0;      // (pi/2) height fwhm, quanta rad/s
    double center_error = 0.0;
    double fwhm_error = 0.0;
    double height_error = 0.0;
    double baseline_error = 0.0;
    double area_error = 0.0;
    double reduced_chi2 = 0.0;
    int iterations = 0;

    double value(double omega) const;
};

struct LorentzianGuess {
    double center, fwhm, height, baseline;
};

/// Least-squares baseline + Lorentzian fit of the points with lo <= omega <= hi.
/// With proportional_noise the fit is iteratively reweighted by 1/model, the
/// efficient choice for averaged periodograms (chi-square scatter).
/// Throws DegenerateWindowError for flat/peakless windows, NonConvergenceError.
LorentzianFit fit_lorentzian(const Spectrum& spectrum, double lo, double hi,
                             std::optional<LorentzianGuess> init = std::nullopt,
                             bool proportional_noise = false);

// ------------------------------------------------------------- thermometry

struct OccupancyEstimate {
    double n = 0.0;
    double error = 0.0;
};

/// Multiplies the fitted areas by (factor_plus, factor_minus), then inverts the
/// asymmetry; first-order error propagation. Throws InvalidArgument (non-physical)
/// when the corrected A- <= A+.
OccupancyEstimate extract_occupancy(const LorentzianFit& fit_plus, const LorentzianFit& fit_minus,
                                    std::pair<double, double> corrections);

/// Self-consistent inversion of raw sideband weights: the transduction factors
/// depend on the occupancy, so n -> factors -> n is iterated to convergence.
OccupancyEstimate invert_occupancy(const FloquetProblem& problem_template, double a_plus,
                                   double a_minus, double a_plus_error = 0.0,
                                   double a_minus_error = 0.0);

// ---------------------------------------------------------- added noise

struct CalibrationTrace {
    double power = 0.0;  // linear, arbitrary units (only ratios matter)
    Spectrum spectrum;   // around the anti-Stokes line, thermometry frame, arbitrary units
};

struct NAddOptions {
    /// Tone detuning used to take the traces.
    double detuning = 0.0;  // rad/s; 0 means -omega_m
    /// Technical heating above this many dB over the lowest power (infinite = off).
    double heating_threshold_db = std::numeric_limits<double>::infinity();
    bool throw_on_unidentifiable = true;
};

struct CalibrationResult {
    double n_add_fit = 0.0;
    double n_add_error = 0.0;
    /// Shared coupling scale: G_i = g_shared * sqrt(power_i).
    double g_shared = 0.0;
    double g_shared_error = 0.0;
    double system_gain = 0.0;  // measured units per quantum
    double heating_slope = 0.0;
    std::vector<double> trace_rms_residual;  // relative, per trace
    std::vector<std::string> warnings;
};

/// Forward model of one calibration trace (measured units).
std::vector<double> n_add_trace_model(const SystemParams& params, double n_m_thermal,
                                      double detuning, double g_eff, double n_add,
                                      double system_gain, const std::vector<double>& omegas);

CalibrationResult calibrate_n_add(const std::vector<CalibrationTrace>& traces,
                                  const SystemParams& params, double n_m_thermal,
                                  const NAddOptions& opts = {});

/// n_add from the white floor of a mechanics-free trace with known system gain.
double n_add_from_floor(const Spectrum& spectrum, double system_gain = 1.0);

// ---------------------------------------------------------- thermometry tone

struct ThermometryPoint {
    double g_t = 0.0;  // nominal coupling, rad/s
    Spectrum spectrum; // measured units, around the anti-Stokes line
};

struct ThermometryOptions {
    double g_ref = from_hz(1.65e3);
    double probe_detuning = from_hz(-2e3);
    double delta = from_hz(-48e3);  // thermometry - probe
    int points_per_spectrum = 401;
    double mismatch_sigma = 5.0;
};

struct ThermometryCalibration {
    double c_ref = 0.0;        // quanta per unit (measured) area
    double c_ref_error = 0.0;
    double g_ref = 0.0;        // rad/s
    double n_ref = 0.0;        // modeled occupancy at g_ref
    double area_scale = 0.0;   // measured units per quantum
    double coupling_scale = 0.0;
    double worst_residual_sigma = 0.0;
};

/// Spectrum of the thermometry tone alone around its anti-Stokes line.
Spectrum thermometry_model_spectrum(const SystemParams& params, double n_m_thermal,
                                    const ThermometryOptions& opts, double g_t, int points);

ThermometryCalibration calibrate_thermometry(const std::vector<ThermometryPoint>& sweep,
                                             const SystemParams& params, double n_m_thermal,
                                             const ThermometryOptions& opts = {});

// ---------------------------------------------------------- Kerr

struct AsymmetryPoint {
    double gain = 0.0;  // arbitrary units
    double eta = 0.0;
    double eta_error = 0.0;  // optional; 0 means unweighted by error
};

struct KerrTemplate {
    SystemParams params;
    ToneSet tones;
    double kerr_phase = 0.0;
    double feedback_phase = 0.0;
    /// A0 = gain_scale * gain for the nominal scale.
    double nominal_gain_scale = 1.0;
};

struct KerrOptions {
    double k_max = from_hz(200e3);
    int scan_points = 41;
    bool fit_gain_scale = true;
};

struct KerrFit {
    double k_eff = 0.0;
    double k_eff_error = 0.0;
    double gain_scale = 0.0;
    double gain_scale_error = 0.0;
    double chi2 = 0.0;
};

/// Modeled (uncorrected) asymmetry at one gain for a given Kerr constant.
double model_eta(const KerrTemplate& tmpl, double k_eff, double gain_scale, double gain);

KerrFit fit_kerr(const std::vector<AsymmetryPoint>& curve, const KerrTemplate& tmpl,
                 const KerrOptions& opts = {});

}  // namespace coldamp
