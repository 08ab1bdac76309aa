#pragma once

#include <Eigen/Dense>
#include <functional>

namespace latdiff {

struct LevmarOptions {
    int max_iterations = 120;
    double ftol = 1e-12;  // relative SSR decrease
    double xtol = 1e-10;  // relative step size
    double lambda0 = 1e-3;
    double fd_step = 1e-6; // central-difference step scale for the Jacobian
};

struct LevmarResult {
    Eigen::VectorXd p;
    double ssr = 0.0;
    int iterations = 0;
    bool converged = false;
    Eigen::MatrixXd covariance; // ssr/(m-n) * (J^T J)^{-1} at the final iterate
};

// Plain damped least squares with a numeric Jacobian. residual(p) fills r;
// dimension of r must not depend on p.
inline LevmarResult levmar(
    const std::function<void(const Eigen::VectorXd&, Eigen::VectorXd&)>& residual,
    Eigen::VectorXd p0, const LevmarOptions& opt = {}) {
    using Eigen::MatrixXd;
    using Eigen::VectorXd;

    const auto n = static_cast<int>(p0.size());
    VectorXd r;
    residual(p0, r);
    const auto m = static_cast<int>(r.size());
    double ssr = r.squaredNorm();

    LevmarResult out;
    out.p = p0;
    out.ssr = ssr;

    double lambda = opt.lambda0;
    MatrixXd J(m, n);
    VectorXd rp(m), rm(m);

    for (int iter = 1; iter <= opt.max_iterations; ++iter) {
        out.iterations = iter;
        for (int j = 0; j < n; ++j) {
            double h = opt.fd_step * std::max(1.0, std::abs(out.p[j]));
            VectorXd pp = out.p, pm = out.p;
            pp[j] += h;
            pm[j] -= h;
            residual(pp, rp);
            residual(pm, rm);
            J.col(j) = (rp - rm) / (2.0 * h);
        }
        residual(out.p, r);
        MatrixXd jtj = J.transpose() * J;
        VectorXd g = J.transpose() * r;

        bool stepped = false;
        for (int tries = 0; tries < 30; ++tries) {
            MatrixXd a = jtj;
            for (int j = 0; j < n; ++j) a(j, j) += lambda * std::max(jtj(j, j), 1e-12);
            VectorXd step = a.ldlt().solve(-g);
            VectorXd pt = out.p + step;
            VectorXd rt(m);
            residual(pt, rt);
            double st = rt.squaredNorm();
            if (st < ssr) {
                double rel_f = (ssr - st) / std::max(ssr, 1e-300);
                double rel_x = step.norm() / std::max(out.p.norm(), 1.0);
                out.p = pt;
                ssr = st;
                lambda = std::max(lambda * 0.3, 1e-12);
                stepped = true;
                if (rel_f < opt.ftol || rel_x < opt.xtol) {
                    out.converged = true;
                }
                break;
            }
            lambda *= 4.0;
        }
        out.ssr = ssr;
        if (out.converged) break;
        if (!stepped) {
            // no downhill direction found within the damping budget; with a
            // tiny gradient that is convergence, otherwise a failure
            out.converged = g.norm() < 1e-8 * std::max(1.0, ssr);
            break;
        }
    }

    // covariance at the final iterate
    for (int j = 0; j < n; ++j) {
        double h = opt.fd_step * std::max(1.0, std::abs(out.p[j]));
        VectorXd pp = out.p, pm = out.p;
        pp[j] += h;
        pm[j] -= h;
        residual(pp, rp);
        residual(pm, rm);
        J.col(j) = (rp - rm) / (2.0 * h);
    }
    MatrixXd jtj = J.transpose() * J;
    double dof = std::max(1, m - n);
    Eigen::FullPivLU<MatrixXd> lu(jtj);
    if (lu.isInvertible())
        out.covariance = (ssr / dof) * lu.inverse();
    else
        out.covariance = MatrixXd::Zero(n, n);
    return out;
}

} // namespace latdiff
