#include "coldamp/model.hpp"

#include <cmath>
#include <sstream>

namespace coldamp {

SystemParams SystemParams::membrane_device() {
    SystemParams p;
    p.omega_c = from_hz(4.554e9);
    p.omega_m = from_hz(707.2e3);
    p.gamma = from_hz(9e-3);
    p.kappa_i = from_hz(340e3);
    p.kappa_e = from_hz(1.16e6);
    return p;
}

std::string to_string(Frame f) {
    switch (f) {
    case Frame::LabFrame: return "lab";
    case Frame::ProbeRotatingFrame: return "probe_rotating";
    case Frame::ThermometryRotatingFrame: return "thermometry_rotating";
    case Frame::MechanicalRotatingFrame: return "mechanical_rotating";
    }
    return "unknown";
}

Frame frame_from_string(const std::string& s) {
    for (Frame f : {Frame::LabFrame, Frame::ProbeRotatingFrame,
                    Frame::ThermometryRotatingFrame, Frame::MechanicalRotatingFrame}) {
        if (to_string(f) == s) return f;
    }
    throw InvalidArgument("unknown spectrum frame '" + s + "'");
}

void Spectrum::check() const {
    if (frequencies.size() != psd.size())
        throw InvalidArgument("spectrum: frequency and psd lengths differ");
    for (std::size_t i = 1; i < frequencies.size(); ++i) {
        if (!(frequencies[i] > frequencies[i - 1]))
            throw InvalidArgument("spectrum: frequencies not strictly increasing at index " +
                                  std::to_string(i));
    }
    for (std::size_t i = 0; i < psd.size(); ++i) {
        if (!(psd[i] >= 0.0))
            throw InvalidArgument("spectrum: negative or NaN psd at index " + std::to_string(i));
    }
}

namespace {

void require_positive(ValidationReport& r, const char* name, double v) {
    if (!(v > 0.0) || !std::isfinite(v)) r.violations.push_back(std::string(name) + " must be > 0");
}

void require_nonnegative(ValidationReport& r, const char* name, double v) {
    if (!(v >= 0.0) || !std::isfinite(v))
        r.violations.push_back(std::string(name) + " must be >= 0");
}

}  // namespace

ValidationReport validate(const SystemParams& p) {
    ValidationReport r;
    require_positive(r, "omega_c", p.omega_c);
    require_positive(r, "omega_m", p.omega_m);
    require_positive(r, "gamma", p.gamma);
    require_positive(r, "kappa_i", p.kappa_i);
    require_positive(r, "kappa_e", p.kappa_e);
    require_nonnegative(r, "n_m_thermal", p.n_m_thermal);
    require_nonnegative(r, "n_c_thermal", p.n_c_thermal);
    require_nonnegative(r, "n_add", p.n_add);
    if (p.omega_m > 0.0 && p.omega_c > 0.0 && !(p.omega_m < p.omega_c))
        r.violations.push_back("omega_m must be below omega_c");
    return r;
}

ValidationReport validate(const ToneSet& t) {
    ValidationReport r;
    require_nonnegative(r, "probe.g_eff", t.probe.g_eff);
    require_nonnegative(r, "thermometry.g_eff", t.thermometry.g_eff);
    if (t.delta != t.thermometry.detuning - t.probe.detuning)
        r.violations.push_back("delta must equal thermometry.detuning - probe.detuning");
    return r;
}

ValidationReport validate(const FeedbackConfig& fb) {
    ValidationReport r;
    require_nonnegative(r, "gain_a0", fb.gain_a0);
    if (!std::isfinite(fb.phase_phi)) r.violations.push_back("phase_phi must be finite");
    require_nonnegative(r, "filter_bandwidth", fb.filter_bandwidth);
    return r;
}

ValidationReport validate(const KerrModulation& k) {
    ValidationReport r;
    require_nonnegative(r, "k_eff", k.k_eff);
    if (!std::isfinite(k.phase)) r.violations.push_back("kerr phase must be finite");
    return r;
}

void require_valid(const ValidationReport& report, const std::string& what) {
    if (report.ok()) return;
    std::ostringstream os;
    os << what << ": ";
    for (std::size_t i = 0; i < report.violations.size(); ++i)
        os << (i ? "; " : "") << report.violations[i];
    throw InvalidArgument(os.str());
}

double thermal_occupancy(double temperature_kelvin, double omega) {
    if (temperature_kelvin < 0.0) throw InvalidArgument("temperature must be >= 0");
    if (!(omega > 0.0)) throw InvalidArgument("omega must be > 0");
    if (temperature_kelvin == 0.0) return 0.0;
    const double x = kHbar * omega / (kBoltzmann * temperature_kelvin);
    return 1.0 / std::expm1(x);
}

}  // namespace coldamp
