#pragma once

#include <array>
#include <complex>
#include <functional>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "coldamp/model.hpp"

namespace coldamp {

using cplx = std::complex<double>;
using Mat6 = Eigen::Matrix<cplx, 6, 6>;

class SingularSystemError : public Error {
public:
    SingularSystemError(const std::string& what, double omega) : Error(what), omega_(omega) {}
    double omega() const { return omega_; }

private:
    double omega_;
};

class WindowOverlapError : public Error {
public:
    using Error::Error;
};

/// Two-tone + Kerr linearized problem. The feedback-cooled mode enters as an
/// effective bath (mech_gamma_eff, mech_occupancy_eff).
struct FloquetProblem {
    SystemParams params;
    ToneSet tones;
    KerrModulation kerr;
    double mech_gamma_eff = 0.0;
    double mech_occupancy_eff = 0.0;
    bool heterodyne_image_noise = false;

    /// Problem with the bath set to the intrinsic mechanics (no feedback).
    static FloquetProblem from_params(const SystemParams& p, const ToneSet& t,
                                      const KerrModulation& k = {});
};

ValidationReport validate(const FloquetProblem& problem);

/// State order: a0, a0^dag, b0, b0^dag, a_{-1}, a_{-1}^dag.
enum StateIndex { kA0 = 0, kA0d, kB0, kB0d, kAm1, kAm1d };
/// Input order: a_{-1,e}, a_{-1,e}^dag, a_{-1,i}, a_{-1,i}^dag, b_in, b_in^dag.
enum InputIndex { kInE = 0, kInEd, kInI, kInId, kInB, kInBd };

/// Fourier-domain system matrix * v = coupling * u with d/dt -> -i omega.
struct LinearSystem {
    Mat6 matrix;
    Mat6 coupling;
};

/// Drift matrix D of dv/dt = D v + coupling u (frequency independent).
Mat6 drift_matrix(const FloquetProblem& problem);
Mat6 input_coupling(const FloquetProblem& problem);

LinearSystem assemble_system(const FloquetProblem& problem, double omega);

/// Full response X with v = X u. Throws SingularSystemError.
Mat6 solve_response(const FloquetProblem& problem, double omega);

struct TransferSolution {
    cplx M_minus, L_minus, M_minus_i, L_minus_i, Q, R;
    std::array<cplx, 6> as_array() const { return {M_minus, L_minus, M_minus_i, L_minus_i, Q, R}; }
};

TransferSolution solve_transfer(const FloquetProblem& problem, double omega);

/// Output PSD (quanta) of the thermometry-tone output field at one frequency
/// (thermometry rotating frame; anti-Stokes line at +omega_m).
double output_psd(const FloquetProblem& problem, double omega);

/// PSD excluding the amplifier/vacuum floor.
double output_psd_excess_floor(const FloquetProblem& problem, double omega);

double spectrum_floor(const FloquetProblem& problem);

Spectrum output_spectrum(const FloquetProblem& problem, const std::vector<double>& grid);

/// Estimated effective mechanical linewidth including both tones' dynamical backaction.
double effective_linewidth(const FloquetProblem& problem);
/// Estimated mechanical line centre including the optical spring of both tones.
double effective_line_center(const FloquetProblem& problem);

/// Half-width of the integration window around each sideband.
double sideband_window(const FloquetProblem& problem);

/// Base grid of `base_points` over +-1.5 omega_m plus dense (linewidth/20) points
/// within the sideband windows. base_points = 0 gives the window points only.
std::vector<double> default_grid(const FloquetProblem& problem, int base_points = 4001,
                                 int refine = 1);

struct SidebandWeights {
    double a_plus = 0.0;
    double a_minus = 0.0;
    double transduction_plus = 1.0;
    double transduction_minus = 1.0;
};

/// Raw integrated weights of the mechanical sidebands (excess over the
/// mechanics-free background), without transduction factors.
std::pair<double, double> raw_sideband_weights(const Spectrum& spectrum,
                                               const FloquetProblem& problem);

/// Raw weights plus transduction factors.
SidebandWeights sideband_weights(const Spectrum& spectrum, const FloquetProblem& problem);

/// Convenience: weights on default_grid(problem, base_points, refine). Only the
/// window points enter the weights, so base_points = 0 is the fast choice.
std::pair<double, double> model_sideband_weights(const FloquetProblem& problem,
                                                 int base_points = 0, int refine = 1);

/// (ideal weight / modeled weight) for each sideband; ideal = same problem with
/// n_c = 0 and no Kerr. Exactly 1 when the problem already is ideal.
std::pair<double, double> transduction_correction(const FloquetProblem& problem);

/// Factors equalising the cavity filtering of the two sidebands for a detuned
/// thermometry tone: (1, T+/T-).
std::pair<double, double> detuning_correction(const FloquetProblem& problem);

/// Mechanical mode occupancy <b^dag b> predicted by the Floquet model.
double mode_occupancy(const FloquetProblem& problem);

/// Applies fn(i) for i in [0, n) across hardware threads; deterministic results
/// as long as fn writes only to slot i.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace coldamp
