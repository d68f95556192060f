#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "coldamp/closed_form.hpp"
#include "coldamp/floquet.hpp"
#include "coldamp/inference.hpp"
#include "coldamp/model.hpp"
#include "coldamp/timedomain.hpp"

namespace py = pybind11;
using namespace coldamp;

namespace {

py::array_t<double> to_array(const std::vector<double>& v) {
    py::array_t<double> a(static_cast<py::ssize_t>(v.size()));
    std::copy(v.begin(), v.end(), a.mutable_data());
    return a;
}

std::vector<double> from_array(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    return {a.data(), a.data() + a.size()};
}

Spectrum make_spectrum(const py::array_t<double, py::array::c_style | py::array::forcecast>& f,
                       const py::array_t<double, py::array::c_style | py::array::forcecast>& p,
                       Frame frame) {
    Spectrum s;
    s.frequencies = from_array(f);
    s.psd = from_array(p);
    s.frame = frame;
    s.check();
    return s;
}

}  // namespace

PYBIND11_MODULE(_coldamp, m) {
    m.doc() = "Feedback cold damping and sideband thermometry of an optomechanical mode";

    auto err = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<InvalidArgument>(m, "InvalidArgument", err.ptr());
    py::register_exception<InstabilityError>(m, "InstabilityError", err.ptr());

    m.def("from_hz", &from_hz, py::arg("hz"));
    m.def("to_hz", &to_hz, py::arg("omega"));
    m.def("thermal_occupancy", &thermal_occupancy, py::arg("temperature_kelvin"), py::arg("omega"));

    py::enum_<Frame>(m, "Frame")
        .value("LAB", Frame::LabFrame)
        .value("PROBE_ROTATING", Frame::ProbeRotatingFrame)
        .value("THERMOMETRY_ROTATING", Frame::ThermometryRotatingFrame)
        .value("MECHANICAL_ROTATING", Frame::MechanicalRotatingFrame);

    py::class_<SystemParams>(m, "SystemParams")
        .def(py::init<>())
        .def_static("membrane_device", &SystemParams::membrane_device)
        .def_readwrite("omega_c", &SystemParams::omega_c)
        .def_readwrite("omega_m", &SystemParams::omega_m)
        .def_readwrite("gamma", &SystemParams::gamma)
        .def_readwrite("kappa_i", &SystemParams::kappa_i)
        .def_readwrite("kappa_e", &SystemParams::kappa_e)
        .def_readwrite("n_m_thermal", &SystemParams::n_m_thermal)
        .def_readwrite("n_c_thermal", &SystemParams::n_c_thermal)
        .def_readwrite("n_add", &SystemParams::n_add)
        .def_property_readonly("kappa", &SystemParams::kappa)
        .def("validate", [](const SystemParams& p) { return validate(p).violations; });

    py::class_<Tone>(m, "Tone")
        .def(py::init<double, double>(), py::arg("detuning") = 0.0, py::arg("g_eff") = 0.0)
        .def_readwrite("detuning", &Tone::detuning)
        .def_readwrite("g_eff", &Tone::g_eff);

    py::class_<ToneSet>(m, "ToneSet")
        .def(py::init(&ToneSet::make), py::arg("probe"), py::arg("thermometry"))
        .def_readonly("probe", &ToneSet::probe)
        .def_readonly("thermometry", &ToneSet::thermometry)
        .def_readonly("delta", &ToneSet::delta);

    py::class_<FeedbackConfig>(m, "FeedbackConfig")
        .def(py::init([](double a0, double phi, double bw) { return FeedbackConfig{a0, phi, bw}; }),
             py::arg("gain_a0") = 0.0, py::arg("phase_phi") = 0.0, py::arg("filter_bandwidth") = 0.0)
        .def_readwrite("gain_a0", &FeedbackConfig::gain_a0)
        .def_readwrite("phase_phi", &FeedbackConfig::phase_phi)
        .def_readwrite("filter_bandwidth", &FeedbackConfig::filter_bandwidth);

    py::class_<KerrModulation>(m, "KerrModulation")
        .def(py::init([](double k, double phase) { return KerrModulation{k, phase}; }),
             py::arg("k_eff") = 0.0, py::arg("phase") = 0.0)
        .def_readwrite("k_eff", &KerrModulation::k_eff)
        .def_readwrite("phase", &KerrModulation::phase);

    py::class_<OccupancyBudget>(m, "OccupancyBudget")
        .def_readonly("n_T", &OccupancyBudget::n_T)
        .def_readonly("n_ba", &OccupancyBudget::n_ba)
        .def_readonly("n_fb", &OccupancyBudget::n_fb)
        .def_readonly("n_m", &OccupancyBudget::n_m)
        .def_readonly("gamma_eff", &OccupancyBudget::gamma_eff)
        .def_readonly("c_eff", &OccupancyBudget::c_eff);

    m.def("gamma_fb", &gamma_fb, py::arg("params"), py::arg("probe"), py::arg("fb"));
    m.def("gamma_eff", &gamma_eff, py::arg("params"), py::arg("probe"), py::arg("fb"));
    m.def("optimal_feedback_phase", &optimal_feedback_phase, py::arg("params"));
    m.def("occupancy_budget", &occupancy_budget, py::arg("params"), py::arg("probe"), py::arg("fb"));
    m.def("classical_budget", &classical_budget, py::arg("params"), py::arg("probe"), py::arg("fb"));
    m.def("occupancy_from_asymmetry", &occupancy_from_asymmetry, py::arg("a_plus"), py::arg("a_minus"));
    m.def("asymmetry_eta", &asymmetry_eta, py::arg("a_plus"), py::arg("a_minus"));
    m.def(
        "minimize_occupancy_over_gain",
        [](const SystemParams& p, const Tone& probe, double phi, double lo, double hi) {
            const GainScanResult r = minimize_occupancy_over_gain(p, probe, phi, lo, hi);
            return py::make_tuple(r.gain_a0, r.budget);
        },
        py::arg("params"), py::arg("probe"), py::arg("phase_phi"), py::arg("a0_min"), py::arg("a0_max"));

    py::class_<Spectrum>(m, "Spectrum")
        .def(py::init(&make_spectrum), py::arg("frequencies"), py::arg("psd"),
             py::arg("frame") = Frame::ThermometryRotatingFrame)
        .def_property_readonly("frequencies", [](const Spectrum& s) { return to_array(s.frequencies); })
        .def_property_readonly("psd", [](const Spectrum& s) { return to_array(s.psd); })
        .def_readonly("frame", &Spectrum::frame)
        .def("__len__", &Spectrum::size);

    py::class_<FloquetProblem>(m, "FloquetProblem")
        .def(py::init(&FloquetProblem::from_params), py::arg("params"), py::arg("tones"),
             py::arg("kerr") = KerrModulation{})
        .def_readwrite("params", &FloquetProblem::params)
        .def_readwrite("kerr", &FloquetProblem::kerr)
        .def_readwrite("mech_gamma_eff", &FloquetProblem::mech_gamma_eff)
        .def_readwrite("mech_occupancy_eff", &FloquetProblem::mech_occupancy_eff)
        .def_readwrite("heterodyne_image_noise", &FloquetProblem::heterodyne_image_noise);

    m.def("default_grid", [](const FloquetProblem& fp, int points, int refine) {
        return to_array(default_grid(fp, points, refine));
    }, py::arg("problem"), py::arg("base_points") = 4001, py::arg("refine") = 1);
    m.def("output_spectrum", [](const FloquetProblem& fp,
                                const py::array_t<double, py::array::c_style | py::array::forcecast>& grid) {
        return output_spectrum(fp, from_array(grid));
    }, py::arg("problem"), py::arg("grid"));
    m.def("model_sideband_weights", &model_sideband_weights, py::arg("problem"),
          py::arg("base_points") = 0, py::arg("refine") = 1);
    m.def("transduction_correction", &transduction_correction, py::arg("problem"));
    m.def("mode_occupancy", &mode_occupancy, py::arg("problem"));
    m.def("invert_occupancy", [](const FloquetProblem& fp, double ap, double am) {
        const OccupancyEstimate e = invert_occupancy(fp, ap, am);
        return py::make_tuple(e.n, e.error);
    }, py::arg("problem"), py::arg("a_plus"), py::arg("a_minus"));

    py::class_<LorentzianFit>(m, "LorentzianFit")
        .def_readonly("center", &LorentzianFit::center)
        .def_readonly("fwhm", &LorentzianFit::fwhm)
        .def_readonly("height", &LorentzianFit::height)
        .def_readonly("baseline", &LorentzianFit::baseline)
        .def_readonly("area", &LorentzianFit::area)
        .def_readonly("area_error", &LorentzianFit::area_error)
        .def_readonly("fwhm_error", &LorentzianFit::fwhm_error);
    m.def("fit_lorentzian", [](const Spectrum& s, double lo, double hi, bool prop) {
        return fit_lorentzian(s, lo, hi, std::nullopt, prop);
    }, py::arg("spectrum"), py::arg("lo"), py::arg("hi"), py::arg("proportional_noise") = false);

    py::class_<SimConfig>(m, "SimConfig")
        .def(py::init<>())
        .def_readwrite("dt", &SimConfig::dt)
        .def_readwrite("duration", &SimConfig::duration)
        .def_readwrite("seed", &SimConfig::seed)
        .def_readwrite("scale_q", &SimConfig::scale_q)
        .def_readwrite("adiabatic_cavity", &SimConfig::adiabatic_cavity)
        .def_readwrite("quantum_noise", &SimConfig::quantum_noise)
        .def_readwrite("record_stride", &SimConfig::record_stride);
    m.def("choose_scale_q", &choose_scale_q, py::arg("omega_m"), py::arg("gamma_eff"),
          py::arg("q_target") = 300.0);
    m.def("simulate", [](const SystemParams& p, const ToneSet& t, const FeedbackConfig& fb,
                         const SimConfig& sim) {
        SimResult r;
        {
            py::gil_scoped_release release;
            r = simulate(p, t, fb, sim);
        }
        py::dict d;
        d["gamma_eff_fit"] = r.gamma_eff_fit;
        d["gamma_eff_fit_error"] = r.gamma_eff_fit_error;
        d["gamma_eff_expected"] = r.gamma_eff_expected;
        d["occupancy"] = r.occupancy;
        d["unstable"] = r.unstable;
        d["scale_q"] = r.scale_q;
        d["envelope_psd"] = r.envelope_psd;
        return d;
    }, py::arg("params"), py::arg("tones"), py::arg("fb"), py::arg("sim"));
}
