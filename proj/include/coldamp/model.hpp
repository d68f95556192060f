#pragma once

#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

namespace coldamp {

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;
inline constexpr double kHbar = 1.054571817e-34;    // J s
inline constexpr double kBoltzmann = 1.380649e-23;  // J/K

/// Angular frequency (rad/s) from an ordinary frequency in Hz.
constexpr double from_hz(double hz) { return kTwoPi * hz; }
constexpr double to_hz(double omega) { return omega / kTwoPi; }

/// Base for every typed failure raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// gamma_eff <= 0: feedback or dynamical backaction is anti-damping.
class InstabilityError : public Error {
public:
    InstabilityError(const std::string& what, double gamma_eff)
        : Error(what), gamma_eff_(gamma_eff) {}
    double gamma_eff() const { return gamma_eff_; }

private:
    double gamma_eff_;
};

/// Static device constants. All rates are angular (rad/s).
struct SystemParams {
    double omega_c = 0.0;
    double omega_m = 0.0;
    double gamma = 0.0;
    double kappa_i = 0.0;
    double kappa_e = 0.0;
    double n_m_thermal = 0.0;
    double n_c_thermal = 0.0;
    double n_add = 0.0;

    double kappa() const { return kappa_i + kappa_e; }

    /// Device of the membrane experiment: 4.554 GHz cavity, 707.2 kHz mode,
    /// gamma/2pi = 9 mHz, kappa_i/2pi = 340 kHz, kappa_e/2pi = 1.16 MHz.
    /// Bath and noise occupancies are left at zero.
    static SystemParams membrane_device();
};

struct Tone {
    double detuning = 0.0;  // rad/s, relative to omega_c
    double g_eff = 0.0;     // rad/s
};

/// Probe and thermometry drives. delta = omega_t - omega_p.
struct ToneSet {
    Tone probe;
    Tone thermometry;
    double delta = 0.0;

    static ToneSet make(Tone probe, Tone thermometry) {
        return ToneSet{probe, thermometry, thermometry.detuning - probe.detuning};
    }
};

struct FeedbackConfig {
    double gain_a0 = 0.0;            // rad/s
    double phase_phi = 0.0;          // rad
    double filter_bandwidth = 0.0;   // rad/s, time-domain chain only
};

/// Slow cavity-frequency modulation K_eff cos(delta t) a^dag a.
struct KerrModulation {
    double k_eff = 0.0;  // rad/s
    double phase = 0.0;  // rad
};

enum class Frame {
    LabFrame,
    ProbeRotatingFrame,
    ThermometryRotatingFrame,
    MechanicalRotatingFrame,
};

std::string to_string(Frame f);
Frame frame_from_string(const std::string& s);

/// Sampled power spectral density. psd is in quanta for solver output.
struct Spectrum {
    std::vector<double> frequencies;  // rad/s, strictly increasing
    std::vector<double> psd;
    Frame frame = Frame::ThermometryRotatingFrame;

    std::size_t size() const { return frequencies.size(); }
    /// Throws InvalidArgument unless the grid/psd invariants hold.
    void check() const;
};

struct ValidationReport {
    std::vector<std::string> violations;
    bool ok() const { return violations.empty(); }
};

ValidationReport validate(const SystemParams& params);
ValidationReport validate(const ToneSet& tones);
ValidationReport validate(const FeedbackConfig& fb);
ValidationReport validate(const KerrModulation& kerr);

/// Throws InvalidArgument listing every violation if the report is not empty.
void require_valid(const ValidationReport& report, const std::string& what);

/// Bose occupation 1/(exp(hbar omega / k_B T) - 1); exactly 0 at T = 0.
double thermal_occupancy(double temperature_kelvin, double omega);

}  // namespace coldamp
