#include "cli.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "coldamp/closed_form.hpp"
#include "coldamp/floquet.hpp"
#include "coldamp/inference.hpp"
#include "coldamp/io.hpp"
#include "coldamp/synthetic.hpp"
#include "coldamp/timedomain.hpp"

namespace coldamp::cli {

namespace {

using json = nlohmann::ordered_json;
constexpr const char* kManifest = "manifest.json";
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

const std::map<std::string, std::set<std::string>>& schema() {
    static const std::map<std::string, std::set<std::string>> s = {
        {"run", {"seed"}},
        {"device",
         {"preset", "omega_c_hz", "omega_m_hz", "gamma_hz", "kappa_i_hz", "kappa_e_hz",
          "temperature_mk", "n_m_thermal", "n_c_thermal", "n_add"}},
        {"probe", {"detuning_hz", "g_hz"}},
        {"thermometry", {"delta_hz", "g_hz"}},
        {"feedback", {"gain_a0_hz", "phase_rad", "phase_offset_rad", "filter_bandwidth_hz"}},
        {"kerr", {"k_eff_hz", "phase_rad"}},
        {"spectrum", {"points", "refine", "image_noise"}},
        {"sweep", {"gain_min_hz", "gain_max_hz", "points", "k_eff_hz"}},
        {"simulation",
         {"samples_per_period", "duration_linewidths", "q_target", "scale_q", "adiabatic_cavity",
          "quantum_noise", "gamma_fb_ratios", "phase_offsets_rad", "runs", "record_stride"}},
        {"calibration",
         {"detuning_hz", "heating_threshold_db", "g_ref_hz", "probe_detuning_hz", "delta_hz",
          "points_per_spectrum", "mismatch_sigma"}},
        {"kerr_fit", {"k_max_hz", "scan_points", "fit_gain_scale", "gain_scale"}},
        {"input", {"files", "powers", "g_hz", "curve", "spectrum", "frame"}},
        {"synthetic",
         {"noise", "n_add", "g_shared_hz", "powers_db", "system_gain", "g_hz", "area_scale",
          "coupling_scale", "gains_hz", "k_eff_hz", "gain_scale", "points"}},
        {"fit",
         {"lo_hz", "hi_hz", "plus_lo_hz", "plus_hi_hz", "minus_lo_hz", "minus_hi_hz",
          "proportional_noise", "correction_plus", "correction_minus"}},
    };
    return s;
}

struct Resolved {
    SystemParams params;
    double temperature_mk = kNaN;
    ToneSet tones;
    FeedbackConfig fb;
    KerrModulation kerr;
    bool image_noise = false;
    std::uint64_t seed = 0;
};

Resolved resolve(const ConfigFile& cfg, bool need_device) {
    cfg.require_known(schema());
    Resolved r;
    r.seed = static_cast<std::uint64_t>(cfg.get_int("run", "seed", 0));

    const bool preset = cfg.has("device", "preset");
    if (preset) {
        const std::string name = cfg.get_string("device", "preset", "");
        if (name != "membrane")
            throw ConfigError(cfg.origin() + ": unknown device preset '" + name +
                              "' (known: membrane)");
        r.params = SystemParams::membrane_device();
    }
    if (need_device) {
        std::vector<std::string> missing;
        if (!preset) {
            for (const char* k : {"omega_m_hz", "gamma_hz", "kappa_i_hz", "kappa_e_hz"})
                if (!cfg.has("device", k)) missing.push_back(std::string("[device] ") + k);
        }
        if (!cfg.has("device", "temperature_mk") && !cfg.has("device", "n_m_thermal"))
            missing.push_back("[device] temperature_mk (or n_m_thermal)");
        if (!missing.empty()) {
            std::string msg = cfg.origin() + ": missing required keys:";
            for (const auto& m : missing) msg += "\n  " + m;
            throw ConfigError(msg);
        }
    }
    auto hz = [&](const char* sec, const char* key, double fallback) {
        return cfg.has(sec, key) ? from_hz(cfg.get_double(sec, key)) : fallback;
    };
    SystemParams& p = r.params;
    p.omega_c = hz("device", "omega_c_hz", p.omega_c);
    p.omega_m = hz("device", "omega_m_hz", p.omega_m);
    p.gamma = hz("device", "gamma_hz", p.gamma);
    p.kappa_i = hz("device", "kappa_i_hz", p.kappa_i);
    p.kappa_e = hz("device", "kappa_e_hz", p.kappa_e);
    p.n_c_thermal = cfg.get_double("device", "n_c_thermal", p.n_c_thermal);
    p.n_add = cfg.get_double("device", "n_add", p.n_add);
    if (cfg.has("device", "temperature_mk") && cfg.has("device", "n_m_thermal"))
        throw ConfigError(cfg.origin() + ": give either temperature_mk or n_m_thermal, not both");
    if (cfg.has("device", "temperature_mk")) {
        r.temperature_mk = cfg.get_double("device", "temperature_mk");
        p.n_m_thermal = thermal_occupancy(1e-3 * r.temperature_mk, p.omega_m);
    } else {
        p.n_m_thermal = cfg.get_double("device", "n_m_thermal", p.n_m_thermal);
    }

    const Tone probe{hz("probe", "detuning_hz", 0.0), hz("probe", "g_hz", 0.0)};
    const double delta = hz("thermometry", "delta_hz", from_hz(-48e3));
    const Tone thermo{probe.detuning + delta, hz("thermometry", "g_hz", 0.0)};
    r.tones = ToneSet::make(probe, thermo);

    r.fb.gain_a0 = hz("feedback", "gain_a0_hz", 0.0);
    r.fb.filter_bandwidth = hz("feedback", "filter_bandwidth_hz", from_hz(200e3));
    const std::string phase = cfg.get_string("feedback", "phase_rad", "optimal");
    if (phase == "optimal") {
        r.fb.phase_phi = need_device ? optimal_feedback_phase(p) : 0.0;
    } else {
        r.fb.phase_phi = cfg.get_double("feedback", "phase_rad");
    }
    r.fb.phase_phi += cfg.get_double("feedback", "phase_offset_rad", 0.0);

    r.kerr.k_eff = hz("kerr", "k_eff_hz", 0.0);
    r.kerr.phase = cfg.get_double("kerr", "phase_rad", 0.0);
    r.image_noise = cfg.get_bool("spectrum", "image_noise", false);

    if (need_device) {
        ValidationReport rep = validate(p);
        for (const auto& v : validate(r.tones).violations) rep.violations.push_back(v);
        for (const auto& v : validate(r.fb).violations) rep.violations.push_back(v);
        for (const auto& v : validate(r.kerr).violations) rep.violations.push_back(v);
        if (!rep.ok()) {
            std::string msg = cfg.origin() + ": invalid parameters:";
            for (const auto& v : rep.violations) msg += "\n  " + v;
            throw ConfigError(msg);
        }
    }
    return r;
}

json resolved_json(const Resolved& r) {
    const SystemParams& p = r.params;
    json j;
    j["device"] = {{"omega_c_hz", to_hz(p.omega_c)},       {"omega_m_hz", to_hz(p.omega_m)},
                   {"gamma_hz", to_hz(p.gamma)},           {"kappa_i_hz", to_hz(p.kappa_i)},
                   {"kappa_e_hz", to_hz(p.kappa_e)},       {"n_m_thermal", p.n_m_thermal},
                   {"n_c_thermal", p.n_c_thermal},         {"n_add", p.n_add}};
    if (std::isfinite(r.temperature_mk)) j["device"]["temperature_mk"] = r.temperature_mk;
    j["probe"] = {{"detuning_hz", to_hz(r.tones.probe.detuning)},
                  {"g_hz", to_hz(r.tones.probe.g_eff)}};
    j["thermometry"] = {{"detuning_hz", to_hz(r.tones.thermometry.detuning)},
                        {"delta_hz", to_hz(r.tones.delta)},
                        {"g_hz", to_hz(r.tones.thermometry.g_eff)}};
    j["feedback"] = {{"gain_a0_hz", to_hz(r.fb.gain_a0)},
                     {"phase_rad", r.fb.phase_phi},
                     {"filter_bandwidth_hz", to_hz(r.fb.filter_bandwidth)}};
    j["kerr"] = {{"k_eff_hz", to_hz(r.kerr.k_eff)}, {"phase_rad", r.kerr.phase}};
    j["image_noise"] = r.image_noise;
    return j;
}

/// Collects artifacts in memory; written in order, manifest last.
class Artifacts {
public:
    Artifacts(std::string kind, std::string out_dir) : kind_(std::move(kind)), dir_(std::move(out_dir)) {}

    std::string header(const std::string& table) const {
        return "schema=coldamp/" + kind_ + "/" + table + "/v1 manifest=" + kManifest;
    }
    void add_table(const std::string& name, const std::string& table, Table t) {
        t.comment = header(table);
        files_.emplace_back(name, t.to_csv());
    }
    void add_json(const std::string& name, const std::string& table, json j) {
        json out;
        out["schema"] = "coldamp/" + kind_ + "/" + table + "/v1";
        out["manifest"] = kManifest;
        for (auto& [k, v] : j.items()) out[k] = v;
        files_.emplace_back(name, out.dump(2) + "\n");
    }
    void add_raw(const std::string& name, std::string bytes) {
        files_.emplace_back(name, std::move(bytes));
    }

    void write(json manifest) const {
        std::filesystem::create_directories(dir_);
        json list = json::array();
        for (const auto& [name, bytes] : files_) {
            write_file((std::filesystem::path(dir_) / name).string(), bytes);
            list.push_back({{"file", name}, {"sha256", sha256_hex(bytes)}, {"bytes", bytes.size()}});
        }
        manifest["artifacts"] = list;
        write_file((std::filesystem::path(dir_) / kManifest).string(), manifest.dump(2) + "\n");
    }
    const std::vector<std::pair<std::string, std::string>>& files() const { return files_; }

private:
    std::string kind_, dir_;
    std::vector<std::pair<std::string, std::string>> files_;
};

std::vector<double> logspace(double lo, double hi, int n) {
    if (n < 1) throw ConfigError("sweep needs at least one point");
    if (!(lo > 0.0) || !(hi >= lo)) throw ConfigError("sweep range must satisfy 0 < min <= max");
    std::vector<double> out(n);
    for (int i = 0; i < n; ++i)
        out[i] = n == 1 ? lo : lo * std::pow(hi / lo, static_cast<double>(i) / (n - 1));
    return out;
}

std::vector<double> hz_list(const ConfigFile& cfg, const char* sec, const char* key) {
    auto v = cfg.get_list(sec, key);
    for (double& x : v) x = from_hz(x);
    return v;
}

/// Floquet problem with the feedback-cooled mode as effective bath.
FloquetProblem cooled_problem(const Resolved& r, const KerrModulation& kerr) {
    FloquetProblem fp = FloquetProblem::from_params(r.params, r.tones, kerr);
    fp.heterodyne_image_noise = r.image_noise;
    if (r.fb.gain_a0 > 0.0) {
        const OccupancyBudget b = occupancy_budget(r.params, r.tones.probe, r.fb);
        fp.mech_gamma_eff = b.gamma_eff;
        fp.mech_occupancy_eff = b.n_m;
    }
    return fp;
}

json budget_json(const OccupancyBudget& b) {
    return {{"gamma_eff_hz", to_hz(b.gamma_eff)}, {"n_T", b.n_T}, {"n_ba", b.n_ba},
            {"n_fb", b.n_fb},                     {"n_m", b.n_m},  {"c_eff", b.c_eff}};
}

json fit_json(const LorentzianFit& f) {
    return {{"center_hz", to_hz(f.center)},         {"center_error_hz", to_hz(f.center_error)},
            {"fwhm_hz", to_hz(f.fwhm)},             {"fwhm_error_hz", to_hz(f.fwhm_error)},
            {"height", f.height},                   {"height_error", f.height_error},
            {"baseline", f.baseline},               {"baseline_error", f.baseline_error},
            {"area_hz", to_hz(f.area)},             {"area_error_hz", to_hz(f.area_error)},
            {"reduced_chi2", f.reduced_chi2}};
}

// ----------------------------------------------------------------- experiments

void run_spectrum(const ConfigFile& cfg, const Resolved& r, std::optional<int> grid_points,
                  Artifacts& art, json& summary) {
    const FloquetProblem fp = cooled_problem(r, r.kerr);
    const int points =
        grid_points ? *grid_points : static_cast<int>(cfg.get_int("spectrum", "points", 4001));
    const int refine = static_cast<int>(cfg.get_int("spectrum", "refine", 1));
    if (points < 0 || refine < 1) throw ConfigError("[spectrum] points >= 0 and refine >= 1");
    const Spectrum s = output_spectrum(fp, default_grid(fp, points, refine));
    const std::string params_hash = sha256_hex(resolved_json(r).dump());
    art.add_table("spectrum.csv", "spectrum", spectrum_table(s, ""));
    art.add_raw("spectrum.json", spectrum_json(s, params_hash, spectrum_floor(fp)));

    const SidebandWeights w = sideband_weights(s, fp);
    const auto [dp, dm] = detuning_correction(fp);
    json j;
    j["a_plus"] = w.a_plus;
    j["a_minus"] = w.a_minus;
    j["transduction_plus"] = w.transduction_plus;
    j["transduction_minus"] = w.transduction_minus;
    j["detuning_correction_plus"] = dp;
    j["detuning_correction_minus"] = dm;
    j["eta_raw"] = asymmetry_eta(w.a_plus, w.a_minus);
    j["n_bath_model"] = fp.mech_occupancy_eff;
    j["gamma_bath_hz"] = to_hz(fp.mech_gamma_eff);
    j["mode_occupancy"] = mode_occupancy(fp);
    try {
        const OccupancyEstimate est = invert_occupancy(fp, w.a_plus, w.a_minus);
        j["n_inferred"] = est.n;
    } catch (const InvalidArgument& e) {
        j["n_inferred"] = nullptr;
        j["n_inferred_note"] = e.what();
    }
    art.add_json("sidebands.json", "sidebands", j);
    summary["points"] = s.size();
    summary["eta_raw"] = j["eta_raw"];
}

void run_cool_sweep(const ConfigFile& cfg, const Resolved& r, std::optional<int> grid_points,
                    Artifacts& art, json& summary) {
    const double lo = from_hz(cfg.get_double("sweep", "gain_min_hz", 10.0));
    const double hi = from_hz(cfg.get_double("sweep", "gain_max_hz", 1e6));
    const int n = grid_points ? *grid_points : static_cast<int>(cfg.get_int("sweep", "points", 200));
    const auto gains = logspace(lo, hi, n);
    std::vector<std::vector<double>> rows(gains.size());
    parallel_for(gains.size(), [&](std::size_t i) {
        FeedbackConfig fb = r.fb;
        fb.gain_a0 = gains[i];
        try {
            const OccupancyBudget b = occupancy_budget(r.params, r.tones.probe, fb);
            rows[i] = {to_hz(gains[i]), to_hz(b.gamma_eff), b.n_T, b.n_ba, b.n_fb, b.n_m};
        } catch (const InstabilityError& e) {
            rows[i] = {to_hz(gains[i]), to_hz(e.gamma_eff()), kNaN, kNaN, kNaN, kNaN};
        }
    });
    Table t;
    t.columns = {"gain_a0_hz", "gamma_eff_hz", "n_T", "n_ba", "n_fb", "n_m"};
    t.rows = rows;
    art.add_table("cool_sweep.csv", "cool_sweep", t);

    json j;
    j["phase_rad"] = r.fb.phase_phi;
    try {
        const GainScanResult best =
            minimize_occupancy_over_gain(r.params, r.tones.probe, r.fb.phase_phi, lo, hi);
        j["optimum_gain_a0_hz"] = to_hz(best.gain_a0);
        j["optimum"] = budget_json(best.budget);
        summary["min_n_m"] = best.budget.n_m;
    } catch (const InstabilityError&) {
        j["optimum"] = nullptr;
    }
    art.add_json("cool_sweep_summary.json", "cool_sweep_summary", j);
}

void run_asymmetry_sweep(const ConfigFile& cfg, const Resolved& r, std::optional<int> grid_points,
                         Artifacts& art, json& summary) {
    const double lo = from_hz(cfg.get_double("sweep", "gain_min_hz", 10.0));
    const double hi = from_hz(cfg.get_double("sweep", "gain_max_hz", 1e6));
    const int n = grid_points ? *grid_points : static_cast<int>(cfg.get_int("sweep", "points", 40));
    const auto gains = logspace(lo, hi, n);
    std::vector<double> ks = hz_list(cfg, "sweep", "k_eff_hz");
    if (ks.empty()) ks = {0.0, r.kerr.k_eff};
    const std::size_t total = ks.size() * gains.size();
    std::vector<std::vector<double>> rows(total);
    parallel_for(total, [&](std::size_t idx) {
        const double k = ks[idx / gains.size()], g = gains[idx % gains.size()];
        Resolved rr = r;
        rr.fb.gain_a0 = g;
        try {
            const FloquetProblem fp = cooled_problem(rr, KerrModulation{k, r.kerr.phase});
            const auto [ap, am] = model_sideband_weights(fp);
            rows[idx] = {to_hz(k), to_hz(g), to_hz(fp.mech_gamma_eff), fp.mech_occupancy_eff,
                         ap, am, asymmetry_eta(ap, am)};
        } catch (const InstabilityError& e) {
            rows[idx] = {to_hz(k), to_hz(g), to_hz(e.gamma_eff()), kNaN, kNaN, kNaN, kNaN};
        }
    });
    Table t;
    t.columns = {"k_eff_hz", "gain_a0_hz", "gamma_eff_hz", "n_m", "a_plus", "a_minus", "eta"};
    t.rows = rows;
    art.add_table("asymmetry_sweep.csv", "asymmetry_sweep", t);
    summary["curves"] = ks.size();
    summary["points_per_curve"] = gains.size();
}

void run_calibrate_nadd(const ConfigFile& cfg, const Resolved& r, Artifacts& art, json& summary) {
    NAddOptions opts;
    opts.detuning = from_hz(cfg.get_double("calibration", "detuning_hz", 0.0));
    opts.heating_threshold_db = cfg.get_double("calibration", "heating_threshold_db",
                                               std::numeric_limits<double>::infinity());
    const double det = opts.detuning == 0.0 ? -r.params.omega_m : opts.detuning;
    std::vector<CalibrationTrace> traces;
    json truth;
    if (cfg.has("input", "files")) {
        const auto files = cfg.get_string_list("input", "files");
        const auto powers = cfg.get_list("input", "powers");
        if (files.size() != powers.size())
            throw ConfigError("[input] files and powers must have the same length");
        for (std::size_t i = 0; i < files.size(); ++i)
            traces.push_back({powers[i], spectrum_from_table(Table::load(files[i]))});
    } else if (cfg.has_section("synthetic")) {
        SystemParams truth_params = r.params;
        truth_params.n_add = cfg.get_double("synthetic", "n_add", r.params.n_add);
        auto pdb = cfg.get_list("synthetic", "powers_db");
        if (pdb.empty()) pdb = {0, 4, 8, 12, 16, 20};
        std::vector<double> powers;
        for (double d : pdb) powers.push_back(std::pow(10.0, d / 10.0));
        const double g_shared = from_hz(cfg.get_double("synthetic", "g_shared_hz", 2e3));
        const double gain = cfg.get_double("synthetic", "system_gain", 1.0);
        traces = synthetic_nadd_traces(truth_params, r.params.n_m_thermal, det, g_shared, powers,
                                       gain, cfg.get_double("synthetic", "noise", 0.01), r.seed,
                                       static_cast<int>(cfg.get_int("synthetic", "points", 201)));
        truth = {{"n_add", truth_params.n_add}, {"g_shared_hz", to_hz(g_shared)},
                 {"system_gain", gain}};
        Table t;
        t.columns = {"trace", "power", "frequency_hz", "psd"};
        for (std::size_t k = 0; k < traces.size(); ++k)
            for (std::size_t i = 0; i < traces[k].spectrum.size(); ++i)
                t.rows.push_back({static_cast<double>(k), traces[k].power,
                                  to_hz(traces[k].spectrum.frequencies[i]),
                                  traces[k].spectrum.psd[i]});
        art.add_table("traces.csv", "traces", t);
    } else {
        throw ConfigError(cfg.origin() + ": calibrate-nadd needs [input] files/powers or [synthetic]");
    }
    const CalibrationResult res = calibrate_n_add(traces, r.params, r.params.n_m_thermal, opts);
    json j;
    j["n_add"] = res.n_add_fit;
    j["n_add_error"] = res.n_add_error;
    j["g_shared_hz"] = to_hz(res.g_shared);
    j["g_shared_error_hz"] = to_hz(res.g_shared_error);
    j["system_gain"] = res.system_gain;
    j["heating_slope"] = res.heating_slope;
    j["warnings"] = res.warnings;
    if (!truth.empty()) j["synthetic_truth"] = truth;
    art.add_json("calibration.json", "calibration", j);
    Table t;
    t.columns = {"trace", "power", "rms_relative_residual"};
    for (std::size_t k = 0; k < traces.size(); ++k)
        t.rows.push_back({static_cast<double>(k), traces[k].power, res.trace_rms_residual[k]});
    art.add_table("residuals.csv", "residuals", t);
    summary["n_add"] = res.n_add_fit;
    summary["warnings"] = res.warnings;
}

ThermometryOptions thermometry_options(const ConfigFile& cfg, const Resolved& r) {
    ThermometryOptions o;
    o.g_ref = from_hz(cfg.get_double("calibration", "g_ref_hz", to_hz(o.g_ref)));
    o.probe_detuning =
        from_hz(cfg.get_double("calibration", "probe_detuning_hz", to_hz(r.tones.probe.detuning)));
    o.delta = from_hz(cfg.get_double("calibration", "delta_hz", to_hz(r.tones.delta)));
    o.points_per_spectrum =
        static_cast<int>(cfg.get_int("calibration", "points_per_spectrum", o.points_per_spectrum));
    o.mismatch_sigma = cfg.get_double("calibration", "mismatch_sigma", o.mismatch_sigma);
    return o;
}

void run_calibrate_thermometry(const ConfigFile& cfg, const Resolved& r, Artifacts& art,
                               json& summary) {
    const ThermometryOptions o = thermometry_options(cfg, r);
    std::vector<ThermometryPoint> sweep;
    json truth;
    if (cfg.has("input", "files")) {
        const auto files = cfg.get_string_list("input", "files");
        const auto gs = hz_list(cfg, "input", "g_hz");
        if (files.size() != gs.size())
            throw ConfigError("[input] files and g_hz must have the same length");
        for (std::size_t i = 0; i < files.size(); ++i)
            sweep.push_back({gs[i], spectrum_from_table(Table::load(files[i]))});
    } else if (cfg.has_section("synthetic")) {
        auto gs = hz_list(cfg, "synthetic", "g_hz");
        if (gs.empty())
            for (double g : {0.15e3, 0.3e3, 0.5e3, 0.7e3, 0.9e3, 1.1e3, 1.3e3, 1.5e3})
                gs.push_back(from_hz(g));
        const double S = cfg.get_double("synthetic", "area_scale", 1.0);
        const double lam = cfg.get_double("synthetic", "coupling_scale", 1.0);
        sweep = synthetic_thermometry_sweep(r.params, r.params.n_m_thermal, o, gs, S, lam,
                                            cfg.get_double("synthetic", "noise", 0.01), r.seed,
                                            static_cast<int>(cfg.get_int("synthetic", "points", 201)));
        truth = {{"area_scale", S},
                 {"coupling_scale", lam},
                 {"c_ref", thermometry_reference_constant(r.params, r.params.n_m_thermal, o, S, lam)}};
        Table t;
        t.columns = {"point", "g_hz", "frequency_hz", "psd"};
        for (std::size_t k = 0; k < sweep.size(); ++k)
            for (std::size_t i = 0; i < sweep[k].spectrum.size(); ++i)
                t.rows.push_back({static_cast<double>(k), to_hz(sweep[k].g_t),
                                  to_hz(sweep[k].spectrum.frequencies[i]), sweep[k].spectrum.psd[i]});
        art.add_table("sweep.csv", "sweep", t);
    } else {
        throw ConfigError(cfg.origin() +
                          ": calibrate-thermometry needs [input] files/g_hz or [synthetic]");
    }
    const ThermometryCalibration c = calibrate_thermometry(sweep, r.params, r.params.n_m_thermal, o);
    json j;
    j["c_ref"] = c.c_ref;
    j["c_ref_error"] = c.c_ref_error;
    j["g_ref_hz"] = to_hz(c.g_ref);
    j["n_ref"] = c.n_ref;
    j["area_scale"] = c.area_scale;
    j["coupling_scale"] = c.coupling_scale;
    j["worst_residual_sigma"] = c.worst_residual_sigma;
    if (!truth.empty()) j["synthetic_truth"] = truth;
    art.add_json("calibration.json", "calibration", j);
    summary["c_ref"] = c.c_ref;
}

void run_fit_kerr(const ConfigFile& cfg, const Resolved& r, Artifacts& art, json& summary) {
    KerrTemplate tmpl;
    tmpl.params = r.params;
    tmpl.tones = r.tones;
    tmpl.kerr_phase = r.kerr.phase;
    tmpl.feedback_phase = r.fb.phase_phi;
    tmpl.nominal_gain_scale = cfg.get_double("kerr_fit", "gain_scale", 1.0);
    KerrOptions o;
    o.k_max = from_hz(cfg.get_double("kerr_fit", "k_max_hz", to_hz(o.k_max)));
    o.scan_points = static_cast<int>(cfg.get_int("kerr_fit", "scan_points", o.scan_points));
    o.fit_gain_scale = cfg.get_bool("kerr_fit", "fit_gain_scale", o.fit_gain_scale);

    std::vector<AsymmetryPoint> curve;
    json truth;
    if (cfg.has("input", "curve")) {
        const Table t = Table::load(cfg.get_string("input", "curve", ""));
        const std::size_t cg = t.column("gain_hz"), ce = t.column("eta");
        const bool has_err =
            std::find(t.columns.begin(), t.columns.end(), "eta_error") != t.columns.end();
        for (const auto& row : t.rows)
            curve.push_back({from_hz(row[cg]), row[ce], has_err ? row[t.column("eta_error")] : 0.0});
    } else if (cfg.has_section("synthetic")) {
        auto gains = hz_list(cfg, "synthetic", "gains_hz");
        if (gains.empty()) gains = logspace(from_hz(50.0), from_hz(5e5), 10);
        const double k = from_hz(cfg.get_double("synthetic", "k_eff_hz", to_hz(r.kerr.k_eff)));
        const double gs = cfg.get_double("synthetic", "gain_scale", 1.0);
        curve = synthetic_asymmetry_curve(tmpl, k, gs, gains,
                                          cfg.get_double("synthetic", "noise", 0.005), r.seed);
        truth = {{"k_eff_hz", to_hz(k)}, {"gain_scale", gs}};
    } else {
        throw ConfigError(cfg.origin() + ": fit-kerr needs [input] curve or [synthetic]");
    }
    const KerrFit f = fit_kerr(curve, tmpl, o);
    Table t;
    t.columns = {"gain_hz", "eta", "eta_error", "eta_model"};
    std::vector<std::vector<double>> rows(curve.size());
    parallel_for(curve.size(), [&](std::size_t i) {
        rows[i] = {to_hz(curve[i].gain), curve[i].eta, curve[i].eta_error,
                   model_eta(tmpl, f.k_eff, f.gain_scale, curve[i].gain)};
    });
    t.rows = rows;
    art.add_table("curve.csv", "curve", t);
    json j;
    j["k_eff_hz"] = to_hz(f.k_eff);
    j["k_eff_error_hz"] = to_hz(f.k_eff_error);
    j["gain_scale"] = f.gain_scale;
    j["gain_scale_error"] = f.gain_scale_error;
    j["chi2"] = f.chi2;
    if (!truth.empty()) j["synthetic_truth"] = truth;
    art.add_json("kerr_fit.json", "kerr_fit", j);
    summary["k_eff_hz"] = to_hz(f.k_eff);
}

void run_simulate_time(const ConfigFile& cfg, const Resolved& r, Artifacts& art, json& summary) {
    const SystemParams& p = r.params;
    const double spp = cfg.get_double("simulation", "samples_per_period", 24.0);
    const double lw = cfg.get_double("simulation", "duration_linewidths", 3000.0);
    const double q_target = cfg.get_double("simulation", "q_target", 300.0);
    const long long runs = cfg.get_int("simulation", "runs", 1);
    const auto stride = static_cast<std::size_t>(cfg.get_int("simulation", "record_stride", 0));
    if (runs < 1) throw ConfigError("[simulation] runs must be >= 1");
    auto ratios = cfg.get_list("simulation", "gamma_fb_ratios");
    auto offsets = cfg.get_list("simulation", "phase_offsets_rad");
    if (offsets.empty()) offsets = {0.0};

    struct Case {
        double ratio, offset;
        std::uint64_t seed;
        FeedbackConfig fb;
    };
    std::vector<Case> cases;
    const bool by_ratio = !ratios.empty();
    if (!by_ratio) ratios = {kNaN};
    for (double ratio : ratios)
        for (double off : offsets)
            for (long long k = 0; k < runs; ++k) {
                Case c{ratio, off, r.seed + cases.size(), r.fb};
                if (by_ratio) {
                    FeedbackConfig unit = r.fb;
                    unit.gain_a0 = 1.0;
                    c.fb.gain_a0 = ratio * p.gamma / gamma_fb(p, r.tones.probe, unit);
                }
                c.fb.phase_phi = r.fb.phase_phi + off;
                cases.push_back(c);
            }

    std::vector<SimResult> results(cases.size());
    std::vector<SimConfig> sims(cases.size());
    for (std::size_t i = 0; i < cases.size(); ++i) {
        const double ge = gamma_eff(p, r.tones.probe, cases[i].fb);
        const double g_abs = std::abs(ge) > 0.0 ? std::abs(ge) : p.gamma;
        SimConfig sc;
        sc.dt = kTwoPi / (p.omega_m * spp);
        sc.scale_q = cfg.has("simulation", "scale_q") ? cfg.get_double("simulation", "scale_q")
                                                      : choose_scale_q(p.omega_m, g_abs, q_target);
        sc.duration = lw / (sc.scale_q * g_abs);
        sc.seed = cases[i].seed;
        sc.adiabatic_cavity = cfg.get_bool("simulation", "adiabatic_cavity", true);
        sc.quantum_noise = cfg.get_bool("simulation", "quantum_noise", true);
        sc.record_stride = i == 0 ? stride : 0;
        sims[i] = sc;
    }
    parallel_for(cases.size(), [&](std::size_t i) {
        results[i] = simulate(p, r.tones, cases[i].fb, sims[i]);
    });

    Table t;
    t.columns = {"gamma_fb_ratio",        "phase_offset_rad",      "seed",
                 "scale_q",               "gamma_eff_fit_hz",      "gamma_eff_fit_error_hz",
                 "gamma_eff_expected_hz", "relative_deviation",    "occupancy",
                 "occupancy_expected",    "unstable"};
    double worst = 0.0;
    for (std::size_t i = 0; i < cases.size(); ++i) {
        const SimResult& s = results[i];
        double n_exp = kNaN;
        try {
            n_exp = (sims[i].quantum_noise ? occupancy_budget(p, r.tones.probe, cases[i].fb)
                                           : classical_budget(p, r.tones.probe, cases[i].fb))
                        .n_m;
        } catch (const InstabilityError&) {
        }
        const double dev = s.gamma_eff_fit / s.gamma_eff_expected - 1.0;
        if (std::isfinite(dev)) worst = std::max(worst, std::abs(dev));
        t.rows.push_back({cases[i].ratio, cases[i].offset, static_cast<double>(cases[i].seed),
                          s.scale_q, to_hz(s.gamma_eff_fit), to_hz(s.gamma_eff_fit_error),
                          to_hz(s.gamma_eff_expected), dev, s.occupancy, n_exp,
                          s.unstable ? 1.0 : 0.0});
    }
    art.add_table("simulation.csv", "simulation", t);
    if (!results.empty() && results[0].envelope_psd.size()) {
        Spectrum e = results[0].envelope_psd;
        art.add_table("envelope_psd.csv", "envelope_psd", spectrum_table(e, ""));
    }
    if (stride && !results.empty()) {
        Table tr;
        tr.columns = {"time_s", "x", "p", "feedback_force"};
        for (const auto& smp : results[0].trajectory) tr.rows.push_back({smp.t, smp.x, smp.p, smp.force});
        art.add_table("trajectory.csv", "trajectory", tr);
    }
    summary["runs"] = cases.size();
    summary["max_abs_relative_deviation"] = worst;
}

void run_fit(const ConfigFile& cfg, Artifacts& art, json& summary) {
    if (!cfg.has("input", "spectrum"))
        throw ConfigError(cfg.origin() + ": fit needs [input] spectrum");
    const Frame frame = frame_from_string(cfg.get_string("input", "frame", "thermometry_rotating"));
    const Spectrum s = spectrum_from_table(Table::load(cfg.get_string("input", "spectrum", "")), frame);
    const bool prop = cfg.get_bool("fit", "proportional_noise", false);
    json j;
    j["frame"] = to_string(frame);
    const bool sidebands = cfg.has("fit", "plus_lo_hz") || cfg.has("fit", "minus_lo_hz");
    if (sidebands) {
        auto window = [&](const char* lo, const char* hi) {
            return std::pair{from_hz(cfg.get_double("fit", lo)), from_hz(cfg.get_double("fit", hi))};
        };
        const auto [pl, ph] = window("plus_lo_hz", "plus_hi_hz");
        const auto [ml, mh] = window("minus_lo_hz", "minus_hi_hz");
        const LorentzianFit fp = fit_lorentzian(s, pl, ph, std::nullopt, prop);
        const LorentzianFit fm = fit_lorentzian(s, ml, mh, std::nullopt, prop);
        const std::pair corr{cfg.get_double("fit", "correction_plus", 1.0),
                             cfg.get_double("fit", "correction_minus", 1.0)};
        j["plus"] = fit_json(fp);
        j["minus"] = fit_json(fm);
        j["eta"] = asymmetry_eta(corr.first * fp.area, corr.second * fm.area);
        const OccupancyEstimate est = extract_occupancy(fp, fm, corr);
        j["occupancy"] = est.n;
        j["occupancy_error"] = est.error;
        summary["occupancy"] = est.n;
    } else {
        const double lo = cfg.has("fit", "lo_hz") ? from_hz(cfg.get_double("fit", "lo_hz"))
                                                 : s.frequencies.front();
        const double hi = cfg.has("fit", "hi_hz") ? from_hz(cfg.get_double("fit", "hi_hz"))
                                                 : s.frequencies.back();
        const LorentzianFit f = fit_lorentzian(s, lo, hi, std::nullopt, prop);
        j["line"] = fit_json(f);
        summary["fwhm_hz"] = to_hz(f.fwhm);
    }
    art.add_json("fit.json", "fit", j);
}

}  // namespace

int run(const RunConfig& rc, std::ostream& log, std::ostream& err) {
    try {
        if (std::find(kExperimentKinds.begin(), kExperimentKinds.end(), rc.kind) ==
            kExperimentKinds.end())
            throw ConfigError("unknown experiment kind '" + rc.kind + "'");
        const std::string text = read_file(rc.config_path);
        const ConfigFile cfg = ConfigFile::parse(text, rc.config_path);
        Resolved r = resolve(cfg, rc.kind != "fit");
        if (rc.seed) r.seed = *rc.seed;
        if (rc.grid_points && *rc.grid_points < 0) throw ConfigError("--grid-points must be >= 0");

        Artifacts art(rc.kind, rc.out_dir);
        json summary;
        if (rc.kind == "spectrum") run_spectrum(cfg, r, rc.grid_points, art, summary);
        else if (rc.kind == "cool-sweep") run_cool_sweep(cfg, r, rc.grid_points, art, summary);
        else if (rc.kind == "asymmetry-sweep") run_asymmetry_sweep(cfg, r, rc.grid_points, art, summary);
        else if (rc.kind == "calibrate-nadd") run_calibrate_nadd(cfg, r, art, summary);
        else if (rc.kind == "calibrate-thermometry") run_calibrate_thermometry(cfg, r, art, summary);
        else if (rc.kind == "simulate-time") run_simulate_time(cfg, r, art, summary);
        else if (rc.kind == "fit-kerr") run_fit_kerr(cfg, r, art, summary);
        else run_fit(cfg, art, summary);

        json manifest;
        manifest["schema"] = "coldamp/manifest/v1";
        manifest["kind"] = rc.kind;
        manifest["seed"] = r.seed;
        manifest["config_file"] = std::filesystem::path(rc.config_path).filename().string();
        manifest["config_sha256"] = sha256_hex(text);
        if (rc.grid_points) manifest["grid_points_override"] = *rc.grid_points;
        manifest["resolved"] = resolved_json(r);
        manifest["summary"] = summary;
        art.write(manifest);
        if (!rc.quiet) {
            log << rc.kind << ": wrote " << art.files().size() + 1 << " files to " << rc.out_dir
                << "\n";
            log << summary.dump() << "\n";
        }
        return kSuccess;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return kConfigError;
    } catch (const std::exception& e) {
        err << "solver error (" << rc.kind << "): " << e.what() << "\n";
        return kSolverError;
    }
}

std::vector<ColumnDeviation> compare_tables(const std::string& model_csv,
                                            const std::string& reference_csv) {
    const Table a = Table::load(model_csv), b = Table::load(reference_csv);
    if (a.columns != b.columns) throw ConfigError("column schemas differ");
    if (a.rows.size() != b.rows.size())
        throw ConfigError("row counts differ (" + std::to_string(a.rows.size()) + " vs " +
                          std::to_string(b.rows.size()) + ")");
    std::vector<ColumnDeviation> out;
    for (std::size_t j = 0; j < a.columns.size(); ++j) {
        ColumnDeviation d{a.columns[j]};
        double sum = 0.0;
        for (std::size_t i = 0; i < a.rows.size(); ++i) {
            const double x = a.rows[i][j], y = b.rows[i][j];
            double rel = 0.0;
            if (std::isnan(x) || std::isnan(y)) rel = std::isnan(x) && std::isnan(y) ? 0.0 : kNaN;
            else if (x != y) rel = std::abs(x - y) / std::max(std::abs(x), std::abs(y));
            if (std::isnan(rel)) rel = std::numeric_limits<double>::infinity();
            d.max_relative = std::max(d.max_relative, rel);
            sum += rel;
        }
        d.mean_relative = a.rows.empty() ? 0.0 : sum / static_cast<double>(a.rows.size());
        out.push_back(d);
    }
    return out;
}

int compare(const std::string& model_csv, const std::string& reference_csv, double tolerance,
            const std::string& out_dir, bool quiet, std::ostream& log, std::ostream& err) {
    try {
        const auto devs = compare_tables(model_csv, reference_csv);
        bool ok = true;
        Table t;
        t.comment = "schema=coldamp/compare/deviations/v1 manifest=" + std::string(kManifest);
        t.columns = {"column_index", "max_relative", "mean_relative", "within_tolerance"};
        for (std::size_t j = 0; j < devs.size(); ++j) {
            const bool pass = devs[j].max_relative <= tolerance;
            ok = ok && pass;
            t.rows.push_back({static_cast<double>(j), devs[j].max_relative, devs[j].mean_relative,
                              pass ? 1.0 : 0.0});
            if (!quiet)
                log << devs[j].column << ": max " << format_double(devs[j].max_relative)
                    << " mean " << format_double(devs[j].mean_relative)
                    << (pass ? "" : "  EXCEEDS TOLERANCE") << "\n";
        }
        if (!out_dir.empty()) {
            std::filesystem::create_directories(out_dir);
            const std::string csv = t.to_csv();
            write_file((std::filesystem::path(out_dir) / "compare.csv").string(), csv);
            json m;
            m["schema"] = "coldamp/manifest/v1";
            m["kind"] = "compare";
            m["model"] = model_csv;
            m["reference"] = reference_csv;
            m["tolerance"] = tolerance;
            json cols = json::array();
            for (const auto& d : devs) cols.push_back(d.column);
            m["columns"] = cols;
            m["artifacts"] = json::array({{{"file", "compare.csv"}, {"sha256", sha256_hex(csv)}}});
            write_file((std::filesystem::path(out_dir) / kManifest).string(), m.dump(2) + "\n");
        }
        if (!quiet) log << (ok ? "comparison passed" : "comparison FAILED") << "\n";
        return ok ? kSuccess : kComparisonFailure;
    } catch (const ConfigError& e) {
        err << "compare: " << e.what() << "\n";
        return kComparisonFailure;
    }
}

int main_entry(int argc, char** argv) {
    CLI::App app{"coldamp: feedback-cooling and sideband-thermometry modeling"};
    app.require_subcommand(1);
    RunConfig rc;
    std::uint64_t seed = 0;
    int grid = 0;
    for (const auto& kind : kExperimentKinds) {
        auto* sub = app.add_subcommand(kind, "run the " + kind + " experiment");
        sub->add_option("--config", rc.config_path, "parameter file")->required();
        sub->add_option("--out", rc.out_dir, "output directory");
        sub->add_option("--seed", seed, "random seed (overrides [run] seed)");
        sub->add_option("--grid-points", grid, "override the base grid / sweep point count");
        sub->add_flag("--quiet", rc.quiet, "suppress progress output");
    }
    std::string model, reference, cmp_out;
    double tolerance = 1e-10;
    auto* cmp = app.add_subcommand("compare", "per-column relative deviation of two CSV tables");
    cmp->add_option("model", model, "model output CSV")->required();
    cmp->add_option("reference", reference, "reference CSV")->required();
    cmp->add_option("--tolerance", tolerance, "maximum allowed relative deviation");
    cmp->add_option("--out", cmp_out, "write compare.csv here");
    cmp->add_flag("--quiet", rc.quiet, "suppress the deviation table");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kConfigError;
    }
    if (cmp->parsed()) return compare(model, reference, tolerance, cmp_out, rc.quiet, std::cout, std::cerr);
    for (auto* sub : app.get_subcommands()) {
        rc.kind = sub->get_name();
        if (sub->count("--seed")) rc.seed = seed;
        if (sub->count("--grid-points")) rc.grid_points = grid;
    }
    return run(rc, std::cout, std::cerr);
}

}  // namespace coldamp::cli
