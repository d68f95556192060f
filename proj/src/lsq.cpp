#include "coldamp/lsq.hpp"

#include <cmath>
#include <limits>

namespace coldamp {

Eigen::MatrixXd numeric_jacobian(const ResidualFn& fn, const Eigen::VectorXd& x,
                                 const Eigen::VectorXd& f0, double rel_step) {
    Eigen::MatrixXd J(f0.size(), x.size());
    Eigen::VectorXd xp = x;
    for (Eigen::Index j = 0; j < x.size(); ++j) {
        const double h = rel_step * std::max(std::abs(x[j]), 1.0);
        xp[j] = x[j] + h;
        J.col(j) = (fn(xp) - f0) / (xp[j] - x[j]);
        xp[j] = x[j];
    }
    return J;
}

LsqResult levenberg_marquardt(const ResidualFn& fn, const Eigen::VectorXd& x0,
                              const LsqOptions& opts) {
    const Eigen::Index n = x0.size();
    LsqResult res;
    res.x = x0;
    Eigen::VectorXd f = fn(res.x);
    const Eigen::Index m = f.size();
    if (m < n) throw InvalidArgument("least squares: fewer residuals than parameters");
    if (!f.allFinite()) throw InvalidArgument("least squares: residuals not finite at start");
    double chi2 = f.squaredNorm();
    double lambda = opts.initial_lambda;
    Eigen::MatrixXd J = numeric_jacobian(fn, res.x, f, opts.jacobian_step);

    int it = 0;
    for (; it < opts.max_iterations; ++it) {
        const Eigen::MatrixXd JtJ = J.transpose() * J;
        const Eigen::VectorXd g = J.transpose() * f;
        Eigen::VectorXd diag = JtJ.diagonal().cwiseMax(1e-300);

        bool accepted = false;
        Eigen::VectorXd step;
        for (int tries = 0; tries < 40; ++tries) {
            Eigen::MatrixXd A = JtJ;
            A.diagonal() += lambda * diag;
            step = -A.ldlt().solve(g);
            const Eigen::VectorXd xn = res.x + step;
            const Eigen::VectorXd fnew = fn(xn);
            const double c2 = fnew.allFinite() ? fnew.squaredNorm()
                                               : std::numeric_limits<double>::infinity();
            if (c2 <= chi2) {
                res.x = xn;
                f = fnew;
                const double rel_drop = (chi2 - c2) / std::max(chi2, 1e-300);
                chi2 = c2;
                lambda = std::max(lambda / 3.0, 1e-12);
                accepted = true;
                const double xs = step.norm() / (res.x.norm() + opts.x_tolerance);
                if (xs < opts.x_tolerance || rel_drop < 1e-15) {
                    res.converged = true;
                }
                break;
            }
            lambda *= 4.0;
        }
        if (!accepted) {
            // No downhill step at any damping: at a (numerical) minimum.
            res.converged = true;
        }
        if (res.converged) break;
        J = numeric_jacobian(fn, res.x, f, opts.jacobian_step);
    }
    res.iterations = it;
    res.residual = f;
    res.chi2 = chi2;

    J = numeric_jacobian(fn, res.x, f, opts.jacobian_step);
    const Eigen::MatrixXd JtJ = J.transpose() * J;
    Eigen::MatrixXd cov = JtJ.completeOrthogonalDecomposition().pseudoInverse();
    if (opts.scale_covariance && m > n) cov *= chi2 / static_cast<double>(m - n);
    res.covariance = cov;

    if (!res.converged && opts.throw_on_failure)
        throw NonConvergenceError("least squares did not converge in " +
                                      std::to_string(opts.max_iterations) +
                                      " iterations (chi2 = " + std::to_string(chi2) + ")",
                                  chi2);
    return res;
}

}  // namespace coldamp
