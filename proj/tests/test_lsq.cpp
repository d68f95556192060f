#include "doctest.h"

#include <cmath>
#include <random>

#include "coldamp/lsq.hpp"

using namespace coldamp;

TEST_SUITE("lsq") {

TEST_CASE("linear model reproduces the normal-equation solution and covariance") {
    std::mt19937_64 rng(1);
    std::normal_distribution<double> nd(0.0, 0.1);
    const int n = 50;
    Eigen::MatrixXd A(n, 2);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) {
        A(i, 0) = 1.0;
        A(i, 1) = i / 10.0;
        y(i) = 0.7 + 2.0 * A(i, 1) + nd(rng);
    }
    const auto fn = [&](const Eigen::VectorXd& x) -> Eigen::VectorXd { return A * x - y; };
    const LsqResult r = levenberg_marquardt(fn, Eigen::Vector2d(0.0, 0.0));
    const Eigen::VectorXd direct = (A.transpose() * A).ldlt().solve(A.transpose() * y);
    CHECK(r.converged);
    CHECK(r.x(0) == doctest::Approx(direct(0)).epsilon(1e-7));
    CHECK(r.x(1) == doctest::Approx(direct(1)).epsilon(1e-7));
    const double s2 = (A * direct - y).squaredNorm() / (n - 2);
    const Eigen::MatrixXd cov = s2 * (A.transpose() * A).inverse();
    CHECK(r.covariance(1, 1) == doctest::Approx(cov(1, 1)).epsilon(1e-4));
    CHECK(r.covariance(0, 1) == doctest::Approx(cov(0, 1)).epsilon(1e-4));
}

TEST_CASE("nonlinear exponential decay") {
    std::vector<double> t, y;
    for (int i = 0; i < 40; ++i) {
        t.push_back(0.1 * i);
        y.push_back(3.0 * std::exp(-1.7 * t.back()));
    }
    const auto fn = [&](const Eigen::VectorXd& x) {
        Eigen::VectorXd r(t.size());
        for (std::size_t i = 0; i < t.size(); ++i) r(i) = x(0) * std::exp(-x(1) * t[i]) - y[i];
        return r;
    };
    const LsqResult r = levenberg_marquardt(fn, Eigen::Vector2d(1.0, 0.3));
    CHECK(r.x(0) == doctest::Approx(3.0).epsilon(1e-8));
    CHECK(r.x(1) == doctest::Approx(1.7).epsilon(1e-8));
}

TEST_CASE("parameter starting at zero still moves") {
    const auto fn = [](const Eigen::VectorXd& x) {
        Eigen::VectorXd r(2);
        r << x(0) - 0.05, 2.0 * (x(0) - 0.05);
        return r;
    };
    const LsqResult r = levenberg_marquardt(fn, Eigen::VectorXd::Zero(1));
    CHECK(r.x(0) == doctest::Approx(0.05).epsilon(1e-9));
}

TEST_CASE("iteration budget exhaustion") {
    const auto fn = [](const Eigen::VectorXd& x) {
        Eigen::VectorXd r(2);
        r << 10.0 * (x(1) - x(0) * x(0)), 1.0 - x(0);
        return r;
    };
    LsqOptions o;
    o.max_iterations = 2;
    CHECK_THROWS_AS(levenberg_marquardt(fn, Eigen::Vector2d(-1.2, 1.0), o), NonConvergenceError);
    o.throw_on_failure = false;
    CHECK_FALSE(levenberg_marquardt(fn, Eigen::Vector2d(-1.2, 1.0), o).converged);
}

}
