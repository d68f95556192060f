#include "coldamp/floquet.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

#include "coldamp/closed_form.hpp"

namespace coldamp {

namespace {

constexpr cplx I{0.0, 1.0};

/// Single-tone optical spring shift of the mechanical frequency.
double spring_shift(const SystemParams& p, const Tone& t) {
    const double h2 = 0.25 * p.kappa() * p.kappa();
    const double dm = t.detuning - p.omega_m;
    const double dp = t.detuning + p.omega_m;
    return t.g_eff * t.g_eff * (dm / (h2 + dm * dm) + dp / (h2 + dp * dp));
}

FloquetProblem without_mechanics(FloquetProblem p) {
    p.tones.probe.g_eff = 0.0;
    p.tones.thermometry.g_eff = 0.0;
    return p;
}

FloquetProblem ideal_problem(FloquetProblem p) {
    p.params.n_c_thermal = 0.0;
    p.kerr.k_eff = 0.0;
    return p;
}

bool is_ideal(const FloquetProblem& p) {
    return p.params.n_c_thermal == 0.0 && p.kerr.k_eff == 0.0;
}

/// Output-field coefficients per input channel, including input-output subtraction.
std::array<cplx, 6> output_coefficients(const FloquetProblem& problem, double omega) {
    const Mat6 X = solve_response(problem, omega);
    const double ske = std::sqrt(problem.params.kappa_e);
    std::array<cplx, 6> c;
    for (int k = 0; k < 6; ++k) c[k] = ske * X(kAm1, k);
    c[kInE] -= 1.0;
    return c;
}

std::array<double, 6> occupations(const FloquetProblem& p) {
    const double nc = p.params.n_c_thermal;
    const double nm = p.mech_occupancy_eff;
    return {0.0, 1.0, nc, nc + 1.0, nm, nm + 1.0};
}

double weighted_power(const std::array<cplx, 6>& c, const std::array<double, 6>& occ) {
    double s = 0.0;
    for (int k = 0; k < 6; ++k) s += std::norm(c[k]) * occ[k];
    return s;
}

/// PSD above the mechanics-free background (the sideband line shape).
double sideband_excess(const FloquetProblem& problem, const FloquetProblem& background,
                       double omega) {
    return output_psd_excess_floor(problem, omega) - output_psd_excess_floor(background, omega);
}

/// Refines the sideband centre by scanning |excess| around the analytic estimate.
double locate_peak(const std::function<double(double)>& excess, double guess, double width) {
    double best = guess, best_v = -1.0;
    for (int i = -40; i <= 40; ++i) {
        const double w = guess + 0.125 * width * i;
        const double v = std::abs(excess(w));
        if (v > best_v) best_v = v, best = w;
    }
    // golden section on |excess| within one grid cell either side
    double a = best - 0.125 * width, b = best + 0.125 * width;
    const double r = 0.5 * (std::sqrt(5.0) - 1.0);
    double c = b - r * (b - a), d = a + r * (b - a);
    double fc = -std::abs(excess(c)), fd = -std::abs(excess(d));
    for (int it = 0; it < 60; ++it) {
        if (fc < fd) {
            b = d, d = c, fd = fc;
            c = b - r * (b - a), fc = -std::abs(excess(c));
        } else {
            a = c, c = d, fc = fd;
            d = a + r * (b - a), fd = -std::abs(excess(d));
        }
    }
    return 0.5 * (a + b);
}

double peak_center(const FloquetProblem& problem, double sign) {
    const FloquetProblem bg = without_mechanics(problem);
    auto ex = [&](double w) { return sideband_excess(problem, bg, w); };
    return locate_peak(ex, sign * effective_line_center(problem), effective_linewidth(problem));
}

/// Trapezoid integral of `values` over grid points inside [c - W, c + W], plus
/// a 1/x^2 Lorentzian-tail estimate beyond each edge; result in quanta.
double window_integral(const std::vector<double>& grid, const std::vector<double>& values,
                       double center, double half_width) {
    const auto lo = std::lower_bound(grid.begin(), grid.end(), center - half_width * (1 + 1e-12));
    const auto hi = std::upper_bound(grid.begin(), grid.end(), center + half_width * (1 + 1e-12));
    const std::size_t i0 = lo - grid.begin(), i1 = hi - grid.begin();
    if (i1 < i0 + 3) throw InvalidArgument("sideband window contains fewer than 3 grid points");
    double s = 0.0;
    for (std::size_t i = i0 + 1; i < i1; ++i)
        s += 0.5 * (values[i] + values[i - 1]) * (grid[i] - grid[i - 1]);
    s += values[i0] * (center - grid[i0]);
    s += values[i1 - 1] * (grid[i1 - 1] - center);
    return s / kTwoPi;
}

std::pair<double, double> weights_on_grid(const FloquetProblem& problem,
                                          const std::vector<double>& grid,
                                          const std::vector<double>& psd) {
    const FloquetProblem bg = without_mechanics(problem);
    const double W = sideband_window(problem);
    const double floor = spectrum_floor(problem);
    std::vector<double> excess(grid.size());
    parallel_for(grid.size(), [&](std::size_t i) {
        excess[i] = psd[i] - floor - output_psd_excess_floor(bg, grid[i]);
    });
    const double cp = peak_center(problem, +1.0);
    const double cm = peak_center(problem, -1.0);
    return {window_integral(grid, excess, cp, W), window_integral(grid, excess, cm, W)};
}

}  // namespace

FloquetProblem FloquetProblem::from_params(const SystemParams& p, const ToneSet& t,
                                           const KerrModulation& k) {
    FloquetProblem fp;
    fp.params = p;
    fp.tones = t;
    fp.kerr = k;
    fp.mech_gamma_eff = p.gamma;
    fp.mech_occupancy_eff = p.n_m_thermal;
    return fp;
}

ValidationReport validate(const FloquetProblem& problem) {
    ValidationReport r = validate(problem.params);
    for (const auto& sub : {validate(problem.tones), validate(problem.kerr)})
        r.violations.insert(r.violations.end(), sub.violations.begin(), sub.violations.end());
    if (!(problem.mech_gamma_eff >= problem.params.gamma))
        r.violations.push_back("mech_gamma_eff must be >= gamma");
    if (!(problem.mech_occupancy_eff >= 0.0))
        r.violations.push_back("mech_occupancy_eff must be >= 0");
    return r;
}

Mat6 drift_matrix(const FloquetProblem& problem) {
    const SystemParams& p = problem.params;
    const double hk = 0.5 * p.kappa();
    const double hg = 0.5 * problem.mech_gamma_eff;
    const double dp = problem.tones.probe.detuning;
    const double dt = dp + problem.tones.delta;
    const double gp = problem.tones.probe.g_eff;
    const double gt = problem.tones.thermometry.g_eff;
    const cplx kp = 0.5 * problem.kerr.k_eff * std::exp(I * problem.kerr.phase);
    const cplx km = std::conj(kp);

    Mat6 A = Mat6::Zero();
    A(kA0, kA0) = I * dp - hk;
    A(kA0, kAm1) = I * kp;
    A(kA0, kB0) = A(kA0, kB0d) = I * gp;

    A(kA0d, kA0d) = -I * dp - hk;
    A(kA0d, kAm1d) = -I * km;
    A(kA0d, kB0) = A(kA0d, kB0d) = -I * gp;

    A(kB0, kB0) = -I * p.omega_m - hg;
    A(kB0, kA0) = A(kB0, kA0d) = I * gp;
    A(kB0, kAm1) = A(kB0, kAm1d) = I * gt;

    A(kB0d, kB0d) = I * p.omega_m - hg;
    A(kB0d, kA0) = A(kB0d, kA0d) = -I * gp;
    A(kB0d, kAm1) = A(kB0d, kAm1d) = -I * gt;

    A(kAm1, kAm1) = I * dt - hk;
    A(kAm1, kA0) = I * km;
    A(kAm1, kB0) = A(kAm1, kB0d) = I * gt;

    A(kAm1d, kAm1d) = -I * dt - hk;
    A(kAm1d, kA0d) = -I * kp;
    A(kAm1d, kB0) = A(kAm1d, kB0d) = -I * gt;
    return A;
}

Mat6 input_coupling(const FloquetProblem& problem) {
    const SystemParams& p = problem.params;
    Mat6 B = Mat6::Zero();
    B(kAm1, kInE) = B(kAm1d, kInEd) = std::sqrt(p.kappa_e);
    B(kAm1, kInI) = B(kAm1d, kInId) = std::sqrt(p.kappa_i);
    B(kB0, kInB) = B(kB0d, kInBd) = std::sqrt(problem.mech_gamma_eff);
    return B;
}

LinearSystem assemble_system(const FloquetProblem& problem, double omega) {
    LinearSystem sys;
    sys.matrix = -I * omega * Mat6::Identity() - drift_matrix(problem);
    sys.coupling = input_coupling(problem);
    return sys;
}

Mat6 solve_response(const FloquetProblem& problem, double omega) {
    const LinearSystem sys = assemble_system(problem, omega);
    Eigen::PartialPivLU<Mat6> lu(sys.matrix);
    if (!(lu.rcond() > 1e-15))
        throw SingularSystemError("Floquet system is singular at omega = " + std::to_string(omega) +
                                      " rad/s",
                                  omega);
    return lu.solve(sys.coupling);
}

TransferSolution solve_transfer(const FloquetProblem& problem, double omega) {
    const Mat6 X = solve_response(problem, omega);
    return {X(kAm1, kInE), X(kAm1, kInEd), X(kAm1, kInI),
            X(kAm1, kInId), X(kAm1, kInB), X(kAm1, kInBd)};
}

double spectrum_floor(const FloquetProblem& problem) {
    const double one = problem.params.n_add + 0.5;
    return problem.heterodyne_image_noise ? 2.0 * one : one;
}

double output_psd_excess_floor(const FloquetProblem& problem, double omega) {
    return weighted_power(output_coefficients(problem, omega), occupations(problem));
}

double output_psd(const FloquetProblem& problem, double omega) {
    return output_psd_excess_floor(problem, omega) + spectrum_floor(problem);
}

Spectrum output_spectrum(const FloquetProblem& problem, const std::vector<double>& grid) {
    require_valid(validate(problem), "Floquet problem");
    Spectrum s;
    s.frame = Frame::ThermometryRotatingFrame;
    s.frequencies = grid;
    s.psd.resize(grid.size());
    parallel_for(grid.size(), [&](std::size_t i) { s.psd[i] = output_psd(problem, grid[i]); });
    s.check();
    return s;
}

double effective_linewidth(const FloquetProblem& problem) {
    return problem.mech_gamma_eff + sideband_cooling_rate(problem.params, problem.tones.probe) +
           sideband_cooling_rate(problem.params, problem.tones.thermometry);
}

double effective_line_center(const FloquetProblem& problem) {
    return problem.params.omega_m + spring_shift(problem.params, problem.tones.probe) +
           spring_shift(problem.params, problem.tones.thermometry);
}

double sideband_window(const FloquetProblem& problem) {
    const double width = effective_linewidth(problem);
    if (!(width > 0.0))
        throw InstabilityError("effective mechanical linewidth is not positive", width);
    // max(10 linewidths, 5 FWHM); the FWHM of the line equals the linewidth.
    const double W = std::max(10.0 * width, 5.0 * width);
    if (W >= 0.5 * problem.params.omega_m)
        throw WindowOverlapError("sideband windows overlap: linewidth comparable to omega_m");
    return W;
}

std::vector<double> default_grid(const FloquetProblem& problem, int base_points, int refine) {
    if ((base_points != 0 && base_points < 3) || refine < 1)
        throw InvalidArgument("grid needs 0 or >= 3 base points and refine >= 1");
    const double wm = problem.params.omega_m;
    const double span = 1.5 * wm;
    const int n = base_points == 0 ? 0 : (base_points - 1) * refine + 1;
    std::vector<double> g;
    g.reserve(n + 1000 * refine);
    for (int i = 0; i < n; ++i) g.push_back(-span + 2.0 * span * i / (n - 1));

    const double W = sideband_window(problem);
    const double width = effective_linewidth(problem);
    const int m = static_cast<int>(std::ceil(2.0 * W / (width / 20.0))) * refine;
    for (double sign : {-1.0, +1.0}) {
        const double c = peak_center(problem, sign);
        for (int i = 0; i <= m; ++i) g.push_back(c - W + 2.0 * W * i / m);
    }
    std::sort(g.begin(), g.end());
    // drop near-duplicates so the grid stays strictly increasing
    std::vector<double> out;
    out.reserve(g.size());
    for (double w : g)
        if (out.empty() || w - out.back() > 1e-9 * wm) out.push_back(w);
    return out;
}

std::pair<double, double> raw_sideband_weights(const Spectrum& spectrum,
                                               const FloquetProblem& problem) {
    spectrum.check();
    return weights_on_grid(problem, spectrum.frequencies, spectrum.psd);
}

SidebandWeights sideband_weights(const Spectrum& spectrum, const FloquetProblem& problem) {
    const auto [ap, am] = raw_sideband_weights(spectrum, problem);
    const auto [tp, tm] = transduction_correction(problem);
    SidebandWeights w;
    w.a_plus = std::max(ap, 0.0);
    w.a_minus = std::max(am, 0.0);
    w.transduction_plus = tp;
    w.transduction_minus = tm;
    return w;
}

std::pair<double, double> model_sideband_weights(const FloquetProblem& problem, int base_points,
                                                 int refine) {
    const auto grid = default_grid(problem, base_points, refine);
    const Spectrum s = output_spectrum(problem, grid);
    return weights_on_grid(problem, s.frequencies, s.psd);
}

std::pair<double, double> transduction_correction(const FloquetProblem& problem) {
    if (is_ideal(problem)) return {1.0, 1.0};
    const auto [mp, mm] = model_sideband_weights(problem);
    const auto [ip, im] = model_sideband_weights(ideal_problem(problem));
    if (!(mp > 0.0) || !(mm > 0.0))
        throw InvalidArgument("modeled sideband weight is not positive; correction undefined");
    return {ip / mp, im / mm};
}

std::pair<double, double> detuning_correction(const FloquetProblem& problem) {
    const double h2 = 0.25 * problem.params.kappa() * problem.params.kappa();
    const double dt = problem.tones.thermometry.detuning;
    const double wm = problem.params.omega_m;
    const double t_ratio = (h2 + (dt - wm) * (dt - wm)) / (h2 + (dt + wm) * (dt + wm));
    return {1.0, t_ratio};
}

double mode_occupancy(const FloquetProblem& problem) {
    const auto occ = occupations(problem);
    auto spec = [&](double w) {
        const Mat6 X = solve_response(problem, w);
        double s = 0.0;
        for (int k = 0; k < 6; ++k) s += std::norm(X(kB0, k)) * occ[k];
        return s;
    };
    const double width = effective_linewidth(problem);
    const double c = locate_peak(spec, effective_line_center(problem), width);
    const double W = sideband_window(problem);
    const int m = static_cast<int>(std::ceil(2.0 * W / (width / 20.0)));
    std::vector<double> grid(m + 1), vals(m + 1);
    for (int i = 0; i <= m; ++i) grid[i] = c - W + 2.0 * W * i / m;
    parallel_for(grid.size(), [&](std::size_t i) { vals[i] = spec(grid[i]); });
    return window_integral(grid, vals, c, W);
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
    const std::size_t hw = std::max(1u, std::thread::hardware_concurrency());
    const std::size_t nt = std::min<std::size_t>(hw, (n + 255) / 256);
    if (nt <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr err;
    std::atomic<bool> failed{false};
    std::vector<std::jthread> pool;
    std::mutex err_mu;
    for (std::size_t t = 0; t < nt; ++t) {
        pool.emplace_back([&] {
            constexpr std::size_t chunk = 64;
            for (;;) {
                const std::size_t s = next.fetch_add(chunk);
                if (s >= n || failed.load()) return;
                try {
                    for (std::size_t i = s; i < std::min(n, s + chunk); ++i) fn(i);
                } catch (...) {
                    std::lock_guard lk(err_mu);
                    if (!err) err = std::current_exception();
                    failed = true;
                    return;
                }
            }
        });
    }
    pool.clear();
    if (err) std::rethrow_exception(err);
}

}  // namespace coldamp
