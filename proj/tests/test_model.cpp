#include "doctest.h"

#include <cmath>

#include "coldamp/model.hpp"

using namespace coldamp;

TEST_SUITE("model") {

TEST_CASE("unit conversion round trip") {
    CHECK(to_hz(from_hz(707.2e3)) == doctest::Approx(707.2e3).epsilon(1e-15));
    CHECK(from_hz(1.0) == doctest::Approx(2.0 * M_PI));
}

TEST_CASE("Bose occupancy matches direct formula and high-temperature limit") {
    const double w = from_hz(707.2e3);
    const double T = 0.020;
    const double direct = 1.0 / std::expm1(kHbar * w / (kBoltzmann * T));
    CHECK(thermal_occupancy(T, w) == doctest::Approx(direct).epsilon(1e-12));
    const double classical = kBoltzmann * T / (kHbar * w) - 0.5;
    CHECK(thermal_occupancy(T, w) == doctest::Approx(classical).epsilon(1e-4));
    CHECK(thermal_occupancy(0.0, w) == 0.0);
    CHECK_THROWS_AS(thermal_occupancy(-1.0, w), InvalidArgument);
}

TEST_CASE("membrane device rates") {
    const SystemParams p = SystemParams::membrane_device();
    CHECK(to_hz(p.omega_m) == doctest::Approx(707.2e3));
    CHECK(to_hz(p.kappa()) == doctest::Approx(1.5e6));
    CHECK(validate(p).ok());
}

TEST_CASE("validation reports each violation") {
    SystemParams p = SystemParams::membrane_device();
    p.gamma = -1.0;
    p.n_add = -0.1;
    const auto rep = validate(p);
    CHECK_FALSE(rep.ok());
    CHECK(rep.violations.size() >= 2);
    CHECK_THROWS_AS(require_valid(rep, "params"), InvalidArgument);
}

TEST_CASE("tone set stores thermometry minus probe detuning") {
    const ToneSet t = ToneSet::make(Tone{from_hz(-2e3), 1.0}, Tone{from_hz(-50e3), 1.0});
    CHECK(to_hz(t.delta) == doctest::Approx(-48e3));
    CHECK(validate(t).ok());
    ToneSet bad = t;
    bad.delta = -bad.delta;
    CHECK_FALSE(validate(bad).ok());
}

TEST_CASE("frame names round trip") {
    for (Frame f : {Frame::LabFrame, Frame::ProbeRotatingFrame, Frame::ThermometryRotatingFrame,
                    Frame::MechanicalRotatingFrame})
        CHECK(frame_from_string(to_string(f)) == f);
    CHECK_THROWS_AS(frame_from_string("nonsense"), InvalidArgument);
}

TEST_CASE("spectrum check rejects unsorted grids") {
    Spectrum s;
    s.frequencies = {1.0, 0.5};
    s.psd = {1.0, 1.0};
    CHECK_THROWS_AS(s.check(), InvalidArgument);
}

}
