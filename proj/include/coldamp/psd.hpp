#pragma once

#include <complex>
#include <cstddef>
#include <vector>

#include "coldamp/model.hpp"

namespace coldamp {

class LengthError : public Error {
public:
    using Error::Error;
};

/// Welch averaged periodogram (Hann window) of a real record sampled at dt.
/// One-sided, frequencies 0..pi/dt in rad/s, normalized so that
/// sum(psd * d_omega) / 2pi equals the record variance.
Spectrum estimate_psd(const std::vector<double>& x, double dt, std::size_t segment_length,
                      double overlap = 0.5);

/// Two-sided Welch spectrum of a complex record; frequencies -pi/dt..pi/dt
/// (ascending), normalized so that sum(psd * d_omega) / 2pi equals <|z|^2>.
/// exp(-i omega t) convention: a component z ~ exp(-i w0 t) appears at +w0.
Spectrum estimate_psd_complex(const std::vector<std::complex<double>>& z, double dt,
                              std::size_t segment_length, double overlap = 0.5);

/// Trapezoid integral of psd over d_omega / 2pi.
double integrate_psd(const Spectrum& s);

}  // namespace coldamp
