#include "coldamp/inference.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <tuple>

#include "coldamp/closed_form.hpp"

namespace coldamp {

namespace {

constexpr double kHalfPi = 0.5 * std::numbers::pi;

double lorentz(double w, double c, double f, double h, double b) {
    const double u = 2.0 * (w - c) / f;
    return b + h / (1.0 + u * u);
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// Initial guess from the extremum and its half-maximum crossings.
LorentzianGuess guess_lorentzian(const std::vector<double>& w, const std::vector<double>& y) {
    const std::size_t n = w.size();
    const std::size_t edge = std::max<std::size_t>(1, n / 10);
    std::vector<double> edges(y.begin(), y.begin() + edge);
    edges.insert(edges.end(), y.end() - edge, y.end());
    const double base = median(edges);
    std::size_t ip = 0;
    for (std::size_t i = 1; i < n; ++i)
        if (std::abs(y[i] - base) > std::abs(y[ip] - base)) ip = i;
    const double h = y[ip] - base;
    const double span = *std::max_element(y.begin(), y.end()) - *std::min_element(y.begin(), y.end());
    const double scale = std::max({std::abs(base), std::abs(h), 1e-300});
    if (!(span > 1e-12 * scale)) throw DegenerateWindowError("flat spectrum window: no peak to fit");
    if (ip == 0 || ip == n - 1)
        throw DegenerateWindowError("no local extremum inside the fit window");
    auto crossing = [&](int dir) {
        std::size_t i = ip;
        while (i > 0 && i < n - 1 && std::abs(y[i] - base) > 0.5 * std::abs(h))
            i = dir < 0 ? i - 1 : i + 1;
        const std::size_t j = dir < 0 ? i + 1 : i - 1;  // last point above half max
        const double yi = std::abs(y[i] - base), yj = std::abs(y[j] - base);
        const double t = (yj - 0.5 * std::abs(h)) / std::max(yj - yi, 1e-300);
        return w[j] + t * (w[i] - w[j]);
    };
    double fwhm = crossing(+1) - crossing(-1);
    if (!(fwhm > 0.0)) fwhm = 4.0 * (w[std::min(ip + 1, n - 1)] - w[ip > 0 ? ip - 1 : 0]);
    return {w[ip], fwhm, h, base};
}

std::pair<double, double> eq3_with_error(double ap, double am, double sp, double sm) {
    const double n = occupancy_from_asymmetry(ap, am);
    const double d = am - ap;
    const double dn_dp = am / (d * d), dn_dm = -ap / (d * d);
    return {n, std::sqrt(dn_dp * dn_dp * sp * sp + dn_dm * dn_dm * sm * sm)};
}

FloquetProblem single_tone_problem(const SystemParams& params, double n_m_thermal,
                                   double probe_detuning, double tone_detuning, double g_eff) {
    const ToneSet ts = ToneSet::make(Tone{probe_detuning, 0.0}, Tone{tone_detuning, g_eff});
    FloquetProblem fp = FloquetProblem::from_params(params, ts);
    fp.mech_occupancy_eff = n_m_thermal;
    return fp;
}

}  // namespace

double LorentzianFit::value(double omega) const {
    return lorentz(omega, center, fwhm, height, baseline);
}

LorentzianFit fit_lorentzian(const Spectrum& spectrum, double lo, double hi,
                             std::optional<LorentzianGuess> init, bool proportional_noise) {
    spectrum.check();
    std::vector<double> w, y;
    for (std::size_t i = 0; i < spectrum.size(); ++i) {
        if (spectrum.frequencies[i] >= lo && spectrum.frequencies[i] <= hi) {
            w.push_back(spectrum.frequencies[i]);
            y.push_back(spectrum.psd[i]);
        }
    }
    if (w.size() < 7) throw DegenerateWindowError("fit window holds fewer than 7 points");
    const LorentzianGuess g0 = init ? *init : guess_lorentzian(w, y);
    if (!(g0.fwhm > 0.0)) throw DegenerateWindowError("initial FWHM must be positive");

    // normalized coordinates: frequency in units of the initial FWHM, values in
    // units of the initial height
    const double wc = g0.center, ws = g0.fwhm;
    const double ys = std::max(std::abs(g0.height), 1e-300);
    const std::size_t m = w.size();
    std::vector<double> u(m), v(m), wt(m, 1.0);
    for (std::size_t i = 0; i < m; ++i) u[i] = (w[i] - wc) / ws, v[i] = y[i] / ys;

    ResidualFn fn = [&](const Eigen::VectorXd& x) {
        Eigen::VectorXd r(m);
        const double f = std::abs(x[1]);
        for (std::size_t i = 0; i < m; ++i)
            r[i] = wt[i] * (lorentz(u[i], x[0], f, x[2], x[3]) - v[i]);
        return r;
    };
    Eigen::VectorXd x0(4);
    x0 << 0.0, 1.0, g0.height / ys, g0.baseline / ys;
    LsqOptions opts;
    LsqResult r = levenberg_marquardt(fn, x0, opts);
    if (proportional_noise) {
        for (int pass = 0; pass < 3; ++pass) {
            double mean_model = 0.0;
            for (std::size_t i = 0; i < m; ++i)
                mean_model += std::abs(lorentz(u[i], r.x[0], std::abs(r.x[1]), r.x[2], r.x[3]));
            mean_model /= static_cast<double>(m);
            const double floor = 1e-3 * std::max(mean_model, 1e-300);
            for (std::size_t i = 0; i < m; ++i) {
                const double mod = std::abs(lorentz(u[i], r.x[0], std::abs(r.x[1]), r.x[2], r.x[3]));
                wt[i] = mean_model / std::max(mod, floor);
            }
            r = levenberg_marquardt(fn, r.x, opts);
        }
    }

    LorentzianFit fit;
    fit.center = wc + ws * r.x[0];
    fit.fwhm = ws * std::abs(r.x[1]);
    fit.height = ys * r.x[2];
    fit.baseline = ys * r.x[3];
    fit.area = kHalfPi * fit.height * fit.fwhm;
    const Eigen::MatrixXd& C = r.covariance;
    fit.center_error = ws * std::sqrt(C(0, 0));
    fit.fwhm_error = ws * std::sqrt(C(1, 1));
    fit.height_error = ys * std::sqrt(C(2, 2));
    fit.baseline_error = ys * std::sqrt(C(3, 3));
    const double sgn = r.x[1] < 0 ? -1.0 : 1.0;
    const double var_area = std::pow(kHalfPi * ws * ys, 2) *
                            (r.x[1] * r.x[1] * C(2, 2) + r.x[2] * r.x[2] * C(1, 1) +
                             2.0 * sgn * std::abs(r.x[1]) * r.x[2] * C(1, 2));
    fit.area_error = std::sqrt(std::max(var_area, 0.0));
    fit.reduced_chi2 = r.chi2 * ys * ys / static_cast<double>(m - 4);
    fit.iterations = r.iterations;
    if (!(fit.fwhm > 0.0)) throw DegenerateWindowError("fit collapsed to zero width");
    return fit;
}

OccupancyEstimate extract_occupancy(const LorentzianFit& fp, const LorentzianFit& fm,
                                    std::pair<double, double> corr) {
    const double ap = corr.first * fp.area, am = corr.second * fm.area;
    const auto [n, e] =
        eq3_with_error(ap, am, corr.first * fp.area_error, corr.second * fm.area_error);
    return {n, e};
}

OccupancyEstimate invert_occupancy(const FloquetProblem& tmpl, double ap, double am, double sp,
                                   double sm) {
    const auto [dp, dm] = detuning_correction(tmpl);
    double n = 0.0, e = 0.0;
    if (dm * am > dp * ap) {
        std::tie(n, e) = eq3_with_error(dp * ap, dm * am, dp * sp, dm * sm);
    } else {
        // Squashing/Kerr can invert the raw ordering; seed from the total weight,
        // which the ideal model gives as c (2n + 1).
        FloquetProblem ideal = tmpl;
        ideal.params.n_c_thermal = 0.0;
        ideal.kerr.k_eff = 0.0;
        ideal.mech_occupancy_eff = 1.0;
        const double c = dp * model_sideband_weights(ideal).first;
        n = std::max(0.5 * ((dp * ap + dm * am) / c - 1.0), 1e-3);
    }
    FloquetProblem prob = tmpl;
    auto factors = [&](double n_try) {
        prob.mech_occupancy_eff = n_try;
        return transduction_correction(prob);
    };
    // Fast path: fixed-point iteration n -> factors -> n.
    bool converged = false;
    try {
        for (int it = 0; it < 50 && !converged; ++it) {
            const auto [tp, tm] = factors(n);
            const auto [n_new, e_new] =
                eq3_with_error(tp * dp * ap, tm * dm * am, tp * dp * sp, tm * dm * sm);
            converged = std::abs(n_new - n) <= 1e-9 * std::max(1.0, n);
            n = n_new, e = e_new;
        }
    } catch (const InvalidArgument&) {
        converged = false;
    }
    if (converged) return {n, e};

    // Fallback: root of h(n) = tp dp ap (n + 1) - tm dm am n, bracketed in log n.
    auto h = [&](double x) {
        const auto [tp, tm] = factors(x);
        return (tp * dp * ap * (x + 1.0) - tm * dm * am * x) / (x + 1.0);
    };
    double lo = std::max(n, 1e-3), hi = lo;
    double hlo = h(lo), hhi = hlo;
    while (hlo <= 0.0 && lo > 1e-6) lo *= 0.25, hlo = h(lo);
    while (hhi >= 0.0 && hi < 1e9) hi *= 4.0, hhi = h(hi);
    if (!(hlo > 0.0 && hhi < 0.0))
        throw InvalidArgument("non-physical sideband weights: no occupancy reproduces them");
    // Illinois false position in log n
    double a = std::log(lo), b = std::log(hi), fa = hlo, fb = hhi;
    int side = 0;
    for (int it = 0; it < 200 && b - a > 1e-12; ++it) {
        const double c = (a * fb - b * fa) / (fb - fa);
        const double fc = h(std::exp(c));
        if (fc > 0.0) {
            a = c, fa = fc;
            if (side == -1) fb *= 0.5;
            side = -1;
        } else {
            b = c, fb = fc;
            if (side == 1) fa *= 0.5;
            side = 1;
        }
        if (fc == 0.0) a = b = c;
    }
    n = std::exp(0.5 * (a + b));
    const auto [tp, tm] = factors(n);
    return {n, eq3_with_error(tp * dp * ap, tm * dm * am, tp * dp * sp, tm * dm * sm).second};
}

// ------------------------------------------------------------ added noise

std::vector<double> n_add_trace_model(const SystemParams& params, double n_m_thermal,
                                      double detuning, double g_eff, double n_add,
                                      double system_gain, const std::vector<double>& omegas) {
    SystemParams p = params;
    p.n_add = n_add;
    const FloquetProblem fp = single_tone_problem(p, n_m_thermal, 0.0, detuning, g_eff);
    std::vector<double> out(omegas.size());
    parallel_for(omegas.size(),
                 [&](std::size_t i) { out[i] = system_gain * output_psd(fp, omegas[i]); });
    return out;
}

CalibrationResult calibrate_n_add(const std::vector<CalibrationTrace>& traces,
                                  const SystemParams& params, double n_m_thermal,
                                  const NAddOptions& opts) {
    if (traces.empty()) throw InvalidArgument("calibrate_n_add needs at least one trace");
    require_valid(validate(params), "system parameters");
    CalibrationResult res;
    const double det = opts.detuning == 0.0 ? -params.omega_m : opts.detuning;

    double pmin = traces[0].power, pmax = traces[0].power;
    for (const auto& t : traces) {
        if (!(t.power > 0.0)) throw InvalidArgument("trace powers must be > 0");
        t.spectrum.check();
        pmin = std::min(pmin, t.power), pmax = std::max(pmax, t.power);
    }
    const double span_db = 10.0 * std::log10(pmax / pmin);
    if (traces.size() < 4)
        res.warnings.push_back("fewer than 4 traces: n_add may be poorly identified");
    if (span_db < 10.0)
        res.warnings.push_back("power span below 10 dB: added noise may be under-estimated");
    const bool heating = std::isfinite(opts.heating_threshold_db);
    const double p_thr = pmin * std::pow(10.0, opts.heating_threshold_db / 10.0);

    // x = [log gain, n_add, log g^2 (per unit power), heating slope]
    const Eigen::Index np = heating ? 4 : 3;
    auto trace_model = [&](const Eigen::VectorXd& x, const CalibrationTrace& t) {
        const double g = std::sqrt(std::exp(x[2]) * t.power);
        double n = n_m_thermal;
        if (heating) n += std::abs(x[3]) * std::max(0.0, t.power - p_thr) / pmin;
        return n_add_trace_model(params, n, det, g, x[1], std::exp(x[0]), t.spectrum.frequencies);
    };
    std::size_t m = 0;
    for (const auto& t : traces) m += t.spectrum.size();
    ResidualFn fn = [&](const Eigen::VectorXd& x) {
        Eigen::VectorXd r(m);
        std::size_t k = 0;
        for (const auto& t : traces) {
            const auto mod = trace_model(x, t);
            for (std::size_t i = 0; i < mod.size(); ++i, ++k)
                r[k] = (mod[i] - t.spectrum.psd[i]) / std::abs(t.spectrum.psd[i]);
        }
        return r;
    };

    // initial guess from the highest-power trace: width -> coupling, peak -> gain
    const auto& top = *std::max_element(traces.begin(), traces.end(),
                                        [](auto& a, auto& b) { return a.power < b.power; });
    const LorentzianFit lf = fit_lorentzian(top.spectrum, top.spectrum.frequencies.front(),
                                            top.spectrum.frequencies.back());
    const double rate_per_g2 =
        sideband_cooling_rate(params, Tone{det, 1.0});  // gamma_opt / G^2
    double g2 = std::max(lf.fwhm - params.gamma, 0.1 * params.gamma) / rate_per_g2 / top.power;
    Eigen::VectorXd x0(np);
    {
        const double g = std::sqrt(g2 * top.power);
        const std::vector<double> probe_w{lf.center, top.spectrum.frequencies.front()};
        const auto unit = n_add_trace_model(params, n_m_thermal, det, g, 0.0, 1.0, probe_w);
        const double gain = std::max(lf.height, 1e-300) / std::max(unit[0] - unit[1], 1e-300);
        const double floor_q = lf.baseline / gain;
        const double nadd0 = std::max(floor_q - (unit[1]), 0.1);
        x0[0] = std::log(gain);
        x0[1] = nadd0;
        x0[2] = std::log(g2);
        if (heating) x0[3] = 0.0;
    }
    LsqOptions lo;
    const LsqResult r = levenberg_marquardt(fn, x0, lo);

    res.system_gain = std::exp(r.x[0]);
    res.n_add_fit = r.x[1];
    res.n_add_error = std::sqrt(std::max(r.covariance(1, 1), 0.0));
    res.g_shared = std::sqrt(std::exp(r.x[2]));
    res.g_shared_error = 0.5 * res.g_shared * std::sqrt(std::max(r.covariance(2, 2), 0.0));
    res.heating_slope = heating ? std::abs(r.x[3]) : 0.0;
    std::size_t k = 0;
    for (const auto& t : traces) {
        double s2 = 0.0;
        for (std::size_t i = 0; i < t.spectrum.size(); ++i, ++k) s2 += r.residual[k] * r.residual[k];
        res.trace_rms_residual.push_back(std::sqrt(s2 / static_cast<double>(t.spectrum.size())));
    }
    const bool unidentified = !(res.n_add_error <= 0.5 * std::abs(res.n_add_fit));
    if (unidentified) {
        const std::string msg = "n_add not identifiable: standard error " +
                                std::to_string(res.n_add_error) + " exceeds 50% of " +
                                std::to_string(res.n_add_fit);
        if (opts.throw_on_unidentifiable) throw IdentifiabilityError(msg);
        res.warnings.push_back(msg);
    }
    return res;
}

double n_add_from_floor(const Spectrum& spectrum, double system_gain) {
    spectrum.check();
    if (spectrum.size() == 0) throw InvalidArgument("empty spectrum");
    return median(spectrum.psd) / system_gain - 0.5;
}

// ------------------------------------------------------------ thermometry tone

Spectrum thermometry_model_spectrum(const SystemParams& params, double n_m_thermal,
                                    const ThermometryOptions& opts, double g_t, int points) {
    const FloquetProblem fp = single_tone_problem(params, n_m_thermal, opts.probe_detuning,
                                                  opts.probe_detuning + opts.delta, g_t);
    const double width = effective_linewidth(fp);
    if (!(width > 0.0)) throw InstabilityError("thermometry tone anti-damps the mode", width);
    const double c = effective_line_center(fp);
    std::vector<double> grid(points);
    for (int i = 0; i < points; ++i) grid[i] = c - 10.0 * width + 20.0 * width * i / (points - 1);
    return output_spectrum(fp, grid);
}

ThermometryCalibration calibrate_thermometry(const std::vector<ThermometryPoint>& sweep,
                                             const SystemParams& params, double n_m_thermal,
                                             const ThermometryOptions& opts) {
    if (sweep.size() < 2) throw InvalidArgument("calibrate_thermometry needs >= 2 sweep points");
    require_valid(validate(params), "system parameters");
    const std::size_t N = sweep.size();
    std::vector<LorentzianFit> data(N);
    for (std::size_t i = 0; i < N; ++i) {
        const auto& s = sweep[i].spectrum;
        data[i] = fit_lorentzian(s, s.frequencies.front(), s.frequencies.back(), std::nullopt, true);
    }

    struct ModelPoint {
        double area, fwhm;
    };
    // the model is sampled on the same grid as the data so that both fits see the
    // same window and the same departure from a pure Lorentzian
    auto model_point_on = [&](double g, const std::vector<double>& grid) {
        const FloquetProblem fp = single_tone_problem(params, n_m_thermal, opts.probe_detuning,
                                                      opts.probe_detuning + opts.delta, g);
        if (!(effective_linewidth(fp) > 0.0))
            throw InstabilityError("thermometry tone anti-damps the mode", effective_linewidth(fp));
        const Spectrum s = output_spectrum(fp, grid);
        const LorentzianFit f =
            fit_lorentzian(s, s.frequencies.front(), s.frequencies.back(), std::nullopt, true);
        return ModelPoint{f.area, f.fwhm};
    };
    auto model_point = [&](double g) {
        const Spectrum s =
            thermometry_model_spectrum(params, n_m_thermal, opts, g, opts.points_per_spectrum);
        const LorentzianFit f =
            fit_lorentzian(s, s.frequencies.front(), s.frequencies.back(), std::nullopt, true);
        return ModelPoint{f.area, f.fwhm};
    };

    // x = [log area scale, log coupling scale]
    bool model_failed = false;
    ResidualFn fn = [&](const Eigen::VectorXd& x) {
        Eigen::VectorXd r(2 * N);
        const double S = std::exp(x[0]), lam = std::exp(x[1]);
        for (std::size_t i = 0; i < N; ++i) {
            try {
                const ModelPoint mp = model_point_on(lam * sweep[i].g_t, sweep[i].spectrum.frequencies);
                const double sa = std::max(data[i].area_error, 1e-9 * std::abs(data[i].area));
                const double sf = std::max(data[i].fwhm_error, 1e-9 * data[i].fwhm);
                r[2 * i] = (S * mp.area - data[i].area) / sa;
                r[2 * i + 1] = (mp.fwhm - data[i].fwhm) / sf;
            } catch (const InstabilityError&) {
                model_failed = true;
                r[2 * i] = r[2 * i + 1] = 1e12;
            }
        }
        return r;
    };
    // start from the weakest-coupling point: area ratio fixes S at lambda = 1
    const std::size_t i0 = std::min_element(sweep.begin(), sweep.end(),
                                            [](auto& a, auto& b) { return a.g_t < b.g_t; }) -
                           sweep.begin();
    Eigen::VectorXd x0(2);
    try {
        x0 << std::log(std::abs(data[i0].area) /
                       std::abs(model_point_on(sweep[i0].g_t, sweep[i0].spectrum.frequencies).area)),
            0.0;
    } catch (const InstabilityError& e) {
        throw ModelMismatchError(std::string("thermometry forward model unstable: ") + e.what(),
                                 std::numeric_limits<double>::infinity());
    }
    model_failed = false;
    LsqOptions lo;
    lo.scale_covariance = false;
    const LsqResult r = levenberg_marquardt(fn, x0, lo);
    const double worst = r.residual.cwiseAbs().maxCoeff();
    if (model_failed || worst > opts.mismatch_sigma)
        throw ModelMismatchError("thermometry sweep inconsistent with the sideband-cooling model "
                                 "(worst residual " + std::to_string(worst) + " sigma)",
                                 worst);

    ThermometryCalibration cal;
    cal.area_scale = std::exp(r.x[0]);
    cal.coupling_scale = std::exp(r.x[1]);
    cal.g_ref = opts.g_ref;
    cal.worst_residual_sigma = worst;
    auto c_ref_at = [&](double logS, double loglam) {
        const double g = std::exp(loglam) * opts.g_ref;
        FloquetProblem fp = single_tone_problem(params, n_m_thermal, opts.probe_detuning,
                                                opts.probe_detuning + opts.delta, g);
        const double n_ref = mode_occupancy(fp);
        return std::pair{n_ref / (std::exp(logS) * model_point(g).area), n_ref};
    };
    const auto [c, n_ref] = c_ref_at(r.x[0], r.x[1]);
    cal.c_ref = c;
    cal.n_ref = n_ref;
    const double h = 1e-5;
    const double dS = (c_ref_at(r.x[0] + h, r.x[1]).first - c) / h;
    const double dL = (c_ref_at(r.x[0], r.x[1] + h).first - c) / h;
    const auto& C = r.covariance;
    cal.c_ref_error = std::sqrt(std::max(
        dS * dS * C(0, 0) + dL * dL * C(1, 1) + 2.0 * dS * dL * C(0, 1), 0.0));
    return cal;
}

// ------------------------------------------------------------ Kerr

double model_eta(const KerrTemplate& t, double k_eff, double gain_scale, double gain) {
    FeedbackConfig fb;
    fb.gain_a0 = gain_scale * gain;
    fb.phase_phi = t.feedback_phase;
    const OccupancyBudget b = occupancy_budget(t.params, t.tones.probe, fb);
    FloquetProblem fp = FloquetProblem::from_params(t.params, t.tones,
                                                    KerrModulation{k_eff, t.kerr_phase});
    fp.mech_gamma_eff = b.gamma_eff;
    fp.mech_occupancy_eff = b.n_m;
    const auto [ap, am] = model_sideband_weights(fp);
    return asymmetry_eta(ap, am);
}

KerrFit fit_kerr(const std::vector<AsymmetryPoint>& curve, const KerrTemplate& tmpl,
                 const KerrOptions& opts) {
    if (curve.size() < 3) throw InvalidArgument("fit_kerr needs >= 3 points");
    if (opts.scan_points < 3) throw InvalidArgument("fit_kerr needs >= 3 scan points");
    double gmin = std::numeric_limits<double>::infinity();
    for (const auto& p : curve) {
        if (!(p.gain > 0.0)) throw InvalidArgument("gains must be > 0");
        gmin = std::min(gmin, p.gain);
    }
    // low-gain points are weighted up (less scattered in practice)
    std::vector<double> wts(curve.size());
    for (std::size_t i = 0; i < curve.size(); ++i) {
        const double base = curve[i].eta_error > 0.0 ? 1.0 / curve[i].eta_error : 1.0;
        wts[i] = base * std::pow(gmin / curve[i].gain, 0.25);
    }
    auto residuals = [&](double k, double gs) {
        Eigen::VectorXd r(curve.size());
        for (std::size_t i = 0; i < curve.size(); ++i)
            r[i] = wts[i] * (model_eta(tmpl, k, gs, curve[i].gain) - curve[i].eta);
        return r;
    };

    std::vector<double> chi(opts.scan_points);
    std::vector<double> ks(opts.scan_points);
    for (int j = 0; j < opts.scan_points; ++j) {
        ks[j] = opts.k_max * j / (opts.scan_points - 1);
        chi[j] = residuals(ks[j], tmpl.nominal_gain_scale).squaredNorm();
    }
    const auto [mn, mx] = std::minmax_element(chi.begin(), chi.end());
    if (!(*mx - *mn > 1e-9 * (1.0 + *mn)))
        throw IdentifiabilityError("asymmetry curve does not constrain k_eff (flat chi^2)");
    const double k0 = ks[mn - chi.begin()];

    KerrFit out;
    const double kscale = std::max(opts.k_max / (opts.scan_points - 1), 1e-300);
    LsqOptions lo;
    lo.scale_covariance = true;
    if (opts.fit_gain_scale) {
        ResidualFn fn = [&](const Eigen::VectorXd& x) {
            return residuals(std::abs(x[0]) * kscale, tmpl.nominal_gain_scale * std::exp(x[1]));
        };
        Eigen::VectorXd x0(2);
        x0 << std::max(k0 / kscale, 1e-3), 0.0;
        const LsqResult r = levenberg_marquardt(fn, x0, lo);
        out.k_eff = std::abs(r.x[0]) * kscale;
        out.k_eff_error = kscale * std::sqrt(std::max(r.covariance(0, 0), 0.0));
        out.gain_scale = tmpl.nominal_gain_scale * std::exp(r.x[1]);
        out.gain_scale_error = out.gain_scale * std::sqrt(std::max(r.covariance(1, 1), 0.0));
        out.chi2 = r.chi2;
    } else {
        ResidualFn fn = [&](const Eigen::VectorXd& x) {
            return residuals(std::abs(x[0]) * kscale, tmpl.nominal_gain_scale);
        };
        Eigen::VectorXd x0(1);
        x0 << std::max(k0 / kscale, 1e-3);
        const LsqResult r = levenberg_marquardt(fn, x0, lo);
        out.k_eff = std::abs(r.x[0]) * kscale;
        out.k_eff_error = kscale * std::sqrt(std::max(r.covariance(0, 0), 0.0));
        out.gain_scale = tmpl.nominal_gain_scale;
        out.chi2 = r.chi2;
    }
    return out;
}

}  // namespace coldamp
