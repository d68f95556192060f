#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "coldamp/model.hpp"

namespace coldamp {

class NonConvergenceError : public Error {
public:
    NonConvergenceError(const std::string& what, double final_residual)
        : Error(what), final_residual_(final_residual) {}
    double final_residual() const { return final_residual_; }

private:
    double final_residual_;
};

using ResidualFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

struct LsqOptions {
    int max_iterations = 200;
    double x_tolerance = 1e-10;  // step norm relative to the parameter norm
    double initial_lambda = 1e-3;
    /// Finite-difference step relative to max(|x|, 1).
    double jacobian_step = 1e-7;
    /// Scale covariance by the reduced chi^2 (set false when residuals are
    /// already normalized by known standard errors).
    bool scale_covariance = true;
    /// Throw NonConvergenceError when max_iterations is reached.
    bool throw_on_failure = true;
};

struct LsqResult {
    Eigen::VectorXd x;
    Eigen::VectorXd residual;
    Eigen::MatrixXd covariance;
    double chi2 = 0.0;
    int iterations = 0;
    bool converged = false;

    double standard_error(int i) const { return std::sqrt(covariance(i, i)); }
};

/// Forward-difference Jacobian of fn at x.
Eigen::MatrixXd numeric_jacobian(const ResidualFn& fn, const Eigen::VectorXd& x,
                                 const Eigen::VectorXd& f0, double rel_step);

/// Damped least squares (Levenberg-Marquardt with Marquardt diagonal scaling).
LsqResult levenberg_marquardt(const ResidualFn& fn, const Eigen::VectorXd& x0,
                              const LsqOptions& opts = {});

}  // namespace coldamp
