#include "coldamp/psd.hpp"

#include <cmath>
#include <mutex>

#include <fftw3.h>

namespace coldamp {

namespace {

std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}

std::vector<double> hann(std::size_t n) {
    std::vector<double> w(n);
    for (std::size_t i = 0; i < n; ++i)
        w[i] = 0.5 - 0.5 * std::cos(kTwoPi * static_cast<double>(i) / static_cast<double>(n));
    return w;
}

std::size_t segment_count(std::size_t n, std::size_t len, double overlap, std::size_t& step) {
    if (len < 8) throw LengthError("segment length must be >= 8 samples");
    if (!(overlap >= 0.0 && overlap < 1.0)) throw InvalidArgument("overlap must be in [0, 1)");
    step = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(len * (1.0 - overlap))));
    if (n < len) throw LengthError("record shorter than one segment");
    const std::size_t segs = (n - len) / step + 1;
    if (segs < 8)
        throw LengthError("record too short: " + std::to_string(segs) +
                          " segments, at least 8 required");
    return segs;
}

struct ComplexPlan {
    fftw_complex* buf;
    fftw_plan plan;
    explicit ComplexPlan(std::size_t n) {
        std::lock_guard lk(planner_mutex());
        buf = fftw_alloc_complex(n);
        plan = fftw_plan_dft_1d(static_cast<int>(n), buf, buf, FFTW_FORWARD, FFTW_ESTIMATE);
    }
    ~ComplexPlan() {
        std::lock_guard lk(planner_mutex());
        fftw_destroy_plan(plan);
        fftw_free(buf);
    }
    ComplexPlan(const ComplexPlan&) = delete;
    ComplexPlan& operator=(const ComplexPlan&) = delete;
};

struct RealPlan {
    double* in;
    fftw_complex* out;
    fftw_plan plan;
    explicit RealPlan(std::size_t n) {
        std::lock_guard lk(planner_mutex());
        in = fftw_alloc_real(n);
        out = fftw_alloc_complex(n / 2 + 1);
        plan = fftw_plan_dft_r2c_1d(static_cast<int>(n), in, out, FFTW_ESTIMATE);
    }
    ~RealPlan() {
        std::lock_guard lk(planner_mutex());
        fftw_destroy_plan(plan);
        fftw_free(in);
        fftw_free(out);
    }
    RealPlan(const RealPlan&) = delete;
    RealPlan& operator=(const RealPlan&) = delete;
};

}  // namespace

Spectrum estimate_psd(const std::vector<double>& x, double dt, std::size_t len, double overlap) {
    if (!(dt > 0.0)) throw InvalidArgument("dt must be > 0");
    std::size_t step = 0;
    const std::size_t segs = segment_count(x.size(), len, overlap, step);
    const auto w = hann(len);
    double wss = 0.0;
    for (double v : w) wss += v * v;

    const std::size_t nf = len / 2 + 1;
    std::vector<double> acc(nf, 0.0);
    RealPlan p(len);
    for (std::size_t s = 0; s < segs; ++s) {
        const std::size_t off = s * step;
        for (std::size_t i = 0; i < len; ++i) p.in[i] = w[i] * x[off + i];
        fftw_execute(p.plan);
        for (std::size_t k = 0; k < nf; ++k)
            acc[k] += p.out[k][0] * p.out[k][0] + p.out[k][1] * p.out[k][1];
    }
    Spectrum out;
    out.frame = Frame::LabFrame;
    out.frequencies.resize(nf);
    out.psd.resize(nf);
    const double scale = dt / (wss * static_cast<double>(segs));
    for (std::size_t k = 0; k < nf; ++k) {
        const bool edge = (k == 0) || (len % 2 == 0 && k == nf - 1);
        out.frequencies[k] = kTwoPi * static_cast<double>(k) / (static_cast<double>(len) * dt);
        out.psd[k] = acc[k] * scale * (edge ? 1.0 : 2.0);
    }
    return out;
}

Spectrum estimate_psd_complex(const std::vector<std::complex<double>>& z, double dt,
                              std::size_t len, double overlap) {
    if (!(dt > 0.0)) throw InvalidArgument("dt must be > 0");
    std::size_t step = 0;
    const std::size_t segs = segment_count(z.size(), len, overlap, step);
    const auto w = hann(len);
    double wss = 0.0;
    for (double v : w) wss += v * v;

    std::vector<double> acc(len, 0.0);
    ComplexPlan p(len);
    for (std::size_t s = 0; s < segs; ++s) {
        const std::size_t off = s * step;
        for (std::size_t i = 0; i < len; ++i) {
            p.buf[i][0] = w[i] * z[off + i].real();
            p.buf[i][1] = w[i] * z[off + i].imag();
        }
        fftw_execute(p.plan);
        for (std::size_t k = 0; k < len; ++k)
            acc[k] += p.buf[k][0] * p.buf[k][0] + p.buf[k][1] * p.buf[k][1];
    }
    // FFTW uses exp(-i w t); with the exp(-i w t) Fourier convention of the
    // solvers, a component z ~ exp(-i w0 t) appears at bin -w0. Reverse the axis.
    Spectrum out;
    out.frame = Frame::MechanicalRotatingFrame;
    out.frequencies.resize(len);
    out.psd.resize(len);
    const double scale = dt / (wss * static_cast<double>(segs));
    const long n = static_cast<long>(len);
    const long kmin = -(n - 1) / 2;
    for (long j = 0; j < n; ++j) {
        const long k = kmin + j;                     // physical frequency index
        const long bin = ((-k) % n + n) % n;         // FFTW bin holding it
        out.frequencies[j] = kTwoPi * static_cast<double>(k) / (static_cast<double>(len) * dt);
        out.psd[j] = acc[bin] * scale;
    }
    return out;
}

double integrate_psd(const Spectrum& s) {
    double a = 0.0;
    for (std::size_t i = 1; i < s.size(); ++i)
        a += 0.5 * (s.psd[i] + s.psd[i - 1]) * (s.frequencies[i] - s.frequencies[i - 1]);
    return a / kTwoPi;
}

}  // namespace coldamp
