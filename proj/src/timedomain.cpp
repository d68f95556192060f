#include "coldamp/timedomain.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include <unsupported/Eigen/MatrixFunctions>

#include "coldamp/closed_form.hpp"
#include "coldamp/inference.hpp"
#include "coldamp/psd.hpp"

namespace coldamp {

namespace {

using cd = std::complex<double>;
constexpr cd I{0.0, 1.0};

double sinc(double x) { return x == 0.0 ? 1.0 : std::sin(x) / x; }

/// Continuous-time equivalent of holding each output sample for one step.
cd zoh_response(double omega, double dt) {
    return std::exp(-I * omega * dt / 2.0) * sinc(omega * dt / 2.0);
}

/// Loop constants in simulated (Q-scaled) units.
struct Scaled {
    double gamma, g_p, a0;
    double kappa, abs_chi, theta;
    double kappa0;    // measurement transduction, I = kappa0 * quadrature + noise
    double fb_gain;   // F = -fb_gain * chain(I)
    double half;      // 1/2 with vacuum noise, 0 classical
    double gamma_eff_expected;
    double occupancy_expected;
};

Scaled scaled_constants(const SystemParams& p, const ToneSet& tones, const FeedbackConfig& fb,
                        const SimConfig& sim) {
    Scaled s;
    const double q = sim.scale_q;
    s.gamma = q * p.gamma;
    s.g_p = std::sqrt(q) * tones.probe.g_eff;
    s.a0 = std::sqrt(q) * fb.gain_a0;
    s.kappa = p.kappa();
    const double norm = std::sqrt(s.kappa * s.kappa + 4.0 * p.omega_m * p.omega_m);
    s.abs_chi = 2.0 / norm;
    s.theta = std::atan2(2.0 * p.omega_m, s.kappa);
    s.kappa0 = 2.0 * s.g_p * std::sqrt(p.kappa_e) * s.abs_chi;
    s.fb_gain = s.a0 / (2.0 * std::sqrt(p.kappa_e));
    s.half = sim.quantum_noise ? 0.5 : 0.0;
    s.gamma_eff_expected = q * gamma_eff(p, tones.probe, fb);
    s.occupancy_expected = p.n_m_thermal;
    if (s.gamma_eff_expected > 0.0) {
        const auto b = sim.quantum_noise ? occupancy_budget(p, tones.probe, fb)
                                         : classical_budget(p, tones.probe, fb);
        s.occupancy_expected = b.n_m;
    }
    return s;
}

void check_config(const SystemParams& p, const FeedbackConfig& fb, const SimConfig& sim,
                  double gamma_expected) {
    require_valid(validate(p), "system parameters");
    require_valid(validate(fb), "feedback");
    if (!(sim.dt > 0.0)) throw InvalidArgument("dt must be > 0");
    if (!(sim.scale_q >= 1.0)) throw InvalidArgument("scale_q must be >= 1");
    if (!(sim.dt < kTwoPi / (20.0 * p.omega_m)))
        throw InvalidArgument("dt must resolve the oscillation: dt < 2pi/(20 omega_m)");
    if (!(fb.filter_bandwidth > 0.0))
        throw InvalidArgument("time-domain simulation needs filter_bandwidth > 0");
    if (!(sim.duration > 20.0 / std::abs(gamma_expected)))
        throw InvalidArgument("duration must exceed 20 / gamma_eff (steady state)");
}

/// Exact one-step propagation of the linear cavity + mechanics system with
/// piecewise-constant inputs: s' = Phi s + Gamma u.
struct FullCavityStepper {
    Eigen::Matrix4d phi;
    Eigen::Matrix<double, 4, 7> gamma;
    // inputs: thermal x, thermal p, ext X, ext Y, int X, int Y, force
};

FullCavityStepper make_full_stepper(const SystemParams& p, const ToneSet& tones, const Scaled& s,
                                    double dt) {
    Eigen::Matrix<double, 11, 11> aug = Eigen::Matrix<double, 11, 11>::Zero();
    const double wm = p.omega_m, hg = 0.5 * s.gamma, hk = 0.5 * s.kappa;
    const double d = tones.probe.detuning;
    // state: x, p, Xc, Yc
    aug(0, 0) = -hg;  aug(0, 1) = wm;
    aug(1, 0) = -wm;  aug(1, 1) = -hg; aug(1, 2) = 2.0 * s.g_p;
    aug(2, 2) = -hk;  aug(2, 3) = -d;
    aug(3, 2) = d;    aug(3, 3) = -hk; aug(3, 0) = 2.0 * s.g_p;
    const double sg = std::sqrt(s.gamma), ske = std::sqrt(p.kappa_e), ski = std::sqrt(p.kappa_i);
    aug(0, 4) = sg;
    aug(1, 5) = sg;
    aug(2, 6) = ske;
    aug(3, 7) = ske;
    aug(2, 8) = ski;
    aug(3, 9) = ski;
    aug(1, 10) = 2.0;
    const Eigen::Matrix<double, 11, 11> e = (aug * dt).exp();
    FullCavityStepper st;
    st.phi = e.topLeftCorner<4, 4>();
    st.gamma = e.topRightCorner<4, 7>();
    return st;
}

struct RunOutput {
    std::vector<cd> envelope;  // one sample per period, after burn-in
    double mean_energy = 0.0;
    bool unstable = false;
    std::vector<TrajectorySample> trajectory;
    double block_dt = 0.0;
};

/// Core time stepper. noise = false gives the deterministic ring-down.
RunOutput run(const SystemParams& p, const ToneSet& tones, const FeedbackConfig& fb,
              const SimConfig& sim, const Scaled& s, bool noise, cd b_init, double duration,
              double burn_in) {
    const double dt = sim.dt;
    const double wm = p.omega_m;
    FeedbackChain chain(wm, dt, fb.filter_bandwidth, fb.phase_phi);

    std::mt19937_64 rng(sim.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    auto gauss = [&] { return noise ? normal(rng) : 0.0; };

    const std::size_t steps = static_cast<std::size_t>(std::ceil(duration / dt));
    const std::size_t burn = std::min(steps / 2, static_cast<std::size_t>(burn_in / dt));
    const std::size_t spp =
        std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(kTwoPi / (wm * dt))));

    // adiabatic-cavity constants
    const cd lambda{-0.5 * s.gamma, -wm};
    const cd E = std::exp(lambda * dt);
    const cd Kf = (E - 1.0) / lambda;
    const double n_bath = p.n_m_thermal + s.half;
    const double sig_th = std::sqrt(n_bath * (1.0 - std::exp(-s.gamma * dt)) / 2.0);
    const double s2 = s.kappa * s.kappa + 4.0 * wm * wm;
    const double meas_psd =
        2.0 * (p.n_add + s.half + 8.0 * s.kappa * p.kappa_e * p.n_c_thermal / s2);
    const double sig_meas = std::sqrt(meas_psd / dt);
    const double sinc2 = std::pow(sinc(wm * dt / 2.0), 2);
    const double ba_psd = s.g_p * s.g_p * s.abs_chi * s.abs_chi * s.kappa *
                          (2.0 * s.half + 2.0 * p.n_c_thermal);
    const double sig_ba = std::sqrt(ba_psd / (dt * sinc2));
    const cd meas_rot = std::exp(I * s.theta);

    // full-cavity constants (quadrature-noise PSDs are 2n+1 per port)
    FullCavityStepper full;
    Eigen::Vector4d st = Eigen::Vector4d::Zero();
    double sig_u[6] = {0, 0, 0, 0, 0, 0};
    double sig_amp = 0.0;
    if (!sim.adiabatic_cavity) {
        full = make_full_stepper(p, tones, s, dt);
        const double n_int = p.n_c_thermal * s.kappa / p.kappa_i;
        const double th = std::sqrt(2.0 * n_bath / (dt * sinc2));
        const double ext = std::sqrt(2.0 * s.half / dt);
        const double in = std::sqrt((2.0 * n_int + 2.0 * s.half) / dt);
        sig_u[0] = sig_u[1] = th;
        sig_u[2] = sig_u[3] = ext;
        sig_u[4] = sig_u[5] = in;
        sig_amp = std::sqrt(2.0 * p.n_add / dt);
        st(0) = 2.0 * b_init.real();
        st(1) = 2.0 * b_init.imag();
    }

    RunOutput out;
    out.block_dt = static_cast<double>(spp) * dt;
    out.envelope.reserve((steps - burn) / spp + 1);

    cd b = b_init;
    cd rot{1.0, 0.0};
    const cd rot_step = std::exp(I * wm * dt);
    cd block_sum{0.0, 0.0};
    std::size_t in_block = 0;
    long double energy_sum = 0.0L;
    std::size_t energy_count = 0;

    // instability monitor: 5 blocks over the final 20%
    const std::size_t tail_start = steps - steps / 5;
    const std::size_t tail_block = std::max<std::size_t>(1, (steps - tail_start) / 5);
    double tail_energy[5] = {0, 0, 0, 0, 0};
    const double runaway = 1e20 * (s.occupancy_expected + 1.0) + 1e20 * std::norm(b_init);

    for (std::size_t n = 0; n < steps; ++n) {
        double F;
        if (sim.adiabatic_cavity) {
            const double quad = 2.0 * (b * meas_rot).real();
            const double meas = s.kappa0 * quad + sig_meas * gauss();
            F = -s.fb_gain * chain.process(meas) + sig_ba * gauss();
            const double n1 = gauss(), n2 = gauss();
            b = E * b + I * F * Kf + sig_th * cd(n1, n2);
        } else {
            double u[7];
            for (int k = 0; k < 6; ++k) u[k] = sig_u[k] * gauss();
            const double meas =
                std::sqrt(p.kappa_e) * st(3) - u[3] + sig_amp * gauss();
            F = -s.fb_gain * chain.process(meas);
            u[6] = F;
            st = full.phi * st + full.gamma * Eigen::Map<const Eigen::Matrix<double, 7, 1>>(u);
            b = cd(0.5 * st(0), 0.5 * st(1));
        }

        const double e = std::norm(b);
        if (!std::isfinite(e) || e > runaway) {
            out.unstable = true;
            break;
        }
        if (n >= burn) {
            energy_sum += e;
            ++energy_count;
        }
        if (n >= tail_start) {
            const std::size_t k = std::min<std::size_t>(4, (n - tail_start) / tail_block);
            tail_energy[k] += e;
        }
        if (sim.record_stride && n % sim.record_stride == 0)
            out.trajectory.push_back({n * dt, 2.0 * b.real(), 2.0 * b.imag(), F});

        rot *= rot_step;
        if (n >= burn) {
            block_sum += b * rot;
            if (++in_block == spp) {
                out.envelope.push_back(block_sum / static_cast<double>(spp));
                block_sum = 0.0;
                in_block = 0;
                rot /= std::abs(rot);
            }
        }
    }
    if (!out.unstable) {
        bool rising = true;
        for (int k = 1; k < 5; ++k) rising = rising && tail_energy[k] > tail_energy[k - 1];
        if (rising && tail_energy[4] > 1.5 * tail_energy[0]) out.unstable = true;
    }
    out.mean_energy = energy_count ? static_cast<double>(energy_sum / energy_count) : 0.0;
    return out;
}

}  // namespace

double choose_scale_q(double omega_m, double gamma_eff, double q_target) {
    if (!(gamma_eff > 0.0) || !(q_target > 0.0))
        throw InvalidArgument("choose_scale_q needs gamma_eff > 0 and q_target > 0");
    return std::max(1.0, omega_m / (q_target * gamma_eff));
}

FeedbackChain::FeedbackChain(double omega_m, double dt, double bandwidth, double phase)
    : dt_(dt) {
    const double w0 = omega_m * dt;
    if (!(w0 > 0.0 && w0 < 0.5 * std::numbers::pi))
        throw InvalidArgument("feedback chain needs omega_m dt in (0, pi/2)");
    if (!(bandwidth > 0.0)) throw InvalidArgument("filter bandwidth must be > 0");
    const double q = omega_m / bandwidth;
    const double alpha = std::sin(w0) / (2.0 * q);
    const double a0 = 1.0 + alpha;
    b0_ = alpha / a0;
    b2_ = -alpha / a0;
    a1_ = -2.0 * std::cos(w0) / a0;
    a2_ = (1.0 - alpha) / a0;

    const cd base = bandpass_response(omega_m) * zoh_response(omega_m, dt);
    // lag the delay must add so that the total phase equals +phase
    double lag = std::arg(base) - phase;
    lag = std::fmod(lag, kTwoPi);
    if (lag < 0.0) lag += kTwoPi;
    delay_int_ = static_cast<std::size_t>(std::floor(lag / w0));
    double psi = lag - static_cast<double>(delay_int_) * w0;
    if (psi >= w0) psi = 0.0, ++delay_int_;
    const double t = std::tan(psi);
    delay_frac_ = t / (std::sin(w0) + t * (1.0 - std::cos(w0)));

    line_.assign(delay_int_ + 2, 0.0);
    gain_ = 1.0;
    gain_ = 1.0 / std::abs(response(omega_m));
}

cd FeedbackChain::bandpass_response(double omega) const {
    const cd z1 = std::exp(-I * omega * dt_);
    return (b0_ + b2_ * z1 * z1) / (1.0 + a1_ * z1 + a2_ * z1 * z1);
}

cd FeedbackChain::response(double omega) const {
    const cd z1 = std::exp(-I * omega * dt_);
    const cd delay = std::pow(z1, static_cast<double>(delay_int_)) *
                     ((1.0 - delay_frac_) + delay_frac_ * z1);
    return gain_ * bandpass_response(omega) * delay * zoh_response(omega, dt_);
}

bool FeedbackChain::filter_stable() const {
    // poles of z^2 + a1 z + a2: stable iff |a2| < 1 and |a1| < 1 + a2
    return std::abs(a2_) < 1.0 && std::abs(a1_) < 1.0 + a2_;
}

double FeedbackChain::process(double u) {
    const double y = b0_ * u + z1_;
    z1_ = -a1_ * y + z2_;
    z2_ = b2_ * u - a2_ * y;
    const std::size_t n = line_.size();
    line_[head_] = y;
    const double d0 = line_[(head_ + n - delay_int_) % n];
    const double d1 = line_[(head_ + n - delay_int_ - 1) % n];
    head_ = (head_ + 1) % n;
    return gain_ * ((1.0 - delay_frac_) * d0 + delay_frac_ * d1);
}

SimResult simulate(const SystemParams& params, const ToneSet& tones, const FeedbackConfig& fb,
                   const SimConfig& sim) {
    const Scaled s = scaled_constants(params, tones, fb, sim);
    const double g_ref = s.gamma_eff_expected > 0.0 ? s.gamma_eff_expected : s.gamma;
    check_config(params, fb, sim, g_ref);

    std::mt19937_64 init_rng(sim.seed ^ 0x9e3779b97f4a7c15ULL);
    std::normal_distribution<double> normal(0.0, 1.0);
    const double init_sd = std::sqrt(0.5 * (s.occupancy_expected + s.half));
    const cd b0{init_sd * normal(init_rng), init_sd * normal(init_rng)};

    const double burn = std::min(10.0 / g_ref, 0.25 * sim.duration);
    RunOutput r = run(params, tones, fb, sim, s, true, b0, sim.duration, burn);

    SimResult res;
    res.scale_q = sim.scale_q;
    res.gamma_eff_expected = gamma_eff(params, tones.probe, fb);
    res.unstable = r.unstable;
    res.mean_energy = r.mean_energy;
    res.occupancy = r.mean_energy - s.half;
    res.trajectory = std::move(r.trajectory);
    res.gamma_eff_fit = std::numeric_limits<double>::quiet_NaN();
    res.gamma_eff_fit_error = std::numeric_limits<double>::quiet_NaN();
    if (res.unstable || !(s.gamma_eff_expected > 0.0)) return res;

    // Welch segment so that the line spans ~30 bins, keeping >= 8 segments.
    const double bins = 30.0 * kTwoPi / (s.gamma_eff_expected * r.block_dt);
    std::size_t len = 64;
    while (len < bins) len *= 2;
    while (len > 64 && (r.envelope.size() < len || (r.envelope.size() - len) / (len / 2) + 1 < 8))
        len /= 2;
    if ((r.envelope.size() - std::min(len, r.envelope.size())) / (len / 2) + 1 < 8) return res;

    res.envelope_psd = estimate_psd_complex(r.envelope, r.block_dt, len, 0.5);
    const Spectrum& ps = res.envelope_psd;
    const double w = s.gamma_eff_expected;
    std::size_t ipk = 0;
    double vmax = -1.0;
    for (std::size_t i = 0; i < ps.size(); ++i) {
        if (std::abs(ps.frequencies[i]) < 4.0 * w && ps.psd[i] > vmax) vmax = ps.psd[i], ipk = i;
    }
    const double c = ps.frequencies[ipk];
    const LorentzianFit fit =
        fit_lorentzian(ps, c - 8.0 * w, c + 8.0 * w, LorentzianGuess{c, w, vmax, 0.0}, true);
    res.gamma_eff_fit = fit.fwhm / sim.scale_q;
    res.gamma_eff_fit_error = fit.fwhm_error / sim.scale_q;
    return res;
}

double ringdown_gamma_eff(const SystemParams& params, const ToneSet& tones,
                          const FeedbackConfig& fb, const SimConfig& sim) {
    const Scaled s = scaled_constants(params, tones, fb, sim);
    if (!(s.gamma_eff_expected > 0.0))
        throw InstabilityError("ring-down requested for an anti-damped loop", s.gamma_eff_expected);
    SimConfig quiet = sim;
    quiet.record_stride = 0;
    const double g = s.gamma_eff_expected;
    const double duration = 4.0 / g;
    check_config(params, fb, SimConfig{sim.dt, 21.0 / g, 0, sim.scale_q}, g);
    RunOutput r = run(params, tones, fb, quiet, s, false, cd{1e3, 0.0}, duration, 0.0);
    if (r.unstable) throw InstabilityError("ring-down diverged", g);

    // least-squares slope of log energy over t in [0.5, 4] / g
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    std::size_t n = 0;
    for (std::size_t k = 0; k < r.envelope.size(); ++k) {
        const double t = (k + 0.5) * r.block_dt;
        if (t < 0.5 / g) continue;
        const double y = std::log(std::norm(r.envelope[k]));
        sx += t, sy += y, sxx += t * t, sxy += t * y;
        ++n;
    }
    if (n < 10) throw InvalidArgument("ring-down too short to fit");
    const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    return -slope / sim.scale_q;
}

}  // namespace coldamp
