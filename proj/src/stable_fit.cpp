#include <algorithm>
#include <cmath>

#include "latdiff/errors.hpp"
#include "latdiff/levmar.hpp"
#include "latdiff/stable.hpp"

namespace latdiff {

namespace {

// Internal fit coordinates: alpha through a logistic squeeze onto
// (alpha_min, alpha_max), scale and amplitude through logs, location free.
double alpha_of(double t, const FitOptions& o) {
    return o.alpha_min + (o.alpha_max - o.alpha_min) / (1.0 + std::exp(-t));
}

double alpha_to_t(double a, const FitOptions& o) {
    double f = (a - o.alpha_min) / (o.alpha_max - o.alpha_min);
    f = std::clamp(f, 1e-6, 1.0 - 1e-6);
    return std::log(f / (1.0 - f));
}

double dalpha_dt(double t, const FitOptions& o) {
    double s = 1.0 / (1.0 + std::exp(-t));
    return (o.alpha_max - o.alpha_min) * s * (1.0 - s);
}

} // namespace

StableFitResult stable_fit(const DensitySnapshot& curve, const FitOptions& opt) {
    const std::size_t n = curve.x_grid.size();
    if (n < 20 || curve.density.size() != n)
        throw input_error("stable_fit needs a curve with >= 20 matched points");
    double total = 0.0, peak = 0.0;
    std::size_t peak_i = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (curve.density[i] < 0.0) throw input_error("stable_fit needs non-negative values");
        total += curve.density[i];
        if (curve.density[i] > peak) {
            peak = curve.density[i];
            peak_i = i;
        }
    }
    if (total <= 0.0 || peak <= 0.0) throw input_error("stable_fit: degenerate curve");

    // starting point: location at the peak, scale from the raw half-max width
    double delta0 = curve.x_grid[peak_i];
    double half = 0.5 * peak;
    double left = curve.x_grid.front(), right = curve.x_grid.back();
    for (std::size_t i = peak_i; i-- > 0;) {
        if (curve.density[i] < half) {
            double t = (half - curve.density[i]) / (curve.density[i + 1] - curve.density[i]);
            left = curve.x_grid[i] + t * (curve.x_grid[i + 1] - curve.x_grid[i]);
            break;
        }
    }
    for (std::size_t i = peak_i; i + 1 < n; ++i) {
        if (curve.density[i + 1] < half) {
            double t = (curve.density[i] - half) / (curve.density[i] - curve.density[i + 1]);
            right = curve.x_grid[i] + t * (curve.x_grid[i + 1] - curve.x_grid[i]);
            break;
        }
    }
    double raw_fwhm = std::max(right - left, 2.0 * (curve.x_grid[1] - curve.x_grid[0]));
    double alpha0 = std::clamp(1.5, opt.alpha_min + 0.05, opt.alpha_max - 0.05);
    double gamma0 = raw_fwhm / 3.0;
    // peak density of the model is amplitude * Gamma(1 + 1/alpha) / (pi * scale)
    double amp0 = peak * M_PI * gamma0 / std::tgamma(1.0 + 1.0 / alpha0);

    // fixed inclusion mask; the exclusion window is anchored at the initial
    // location estimate so the residual dimension is stable
    std::vector<std::size_t> idx;
    idx.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
        if (opt.exclusion_halfwidth <= 0.0 ||
            std::abs(curve.x_grid[i] - delta0) >= opt.exclusion_halfwidth)
            idx.push_back(i);
    if (idx.size() < 8) throw input_error("stable_fit: exclusion window leaves too few points");

    std::vector<double> xs(idx.size()), ys(idx.size());
    for (std::size_t j = 0; j < idx.size(); ++j) {
        xs[j] = curve.x_grid[idx[j]];
        ys[j] = curve.density[idx[j]];
    }

    auto residual = [&](const Eigen::VectorXd& p, Eigen::VectorXd& r) {
        StableParams sp;
        sp.alpha = alpha_of(p[0], opt);
        sp.scale = std::exp(p[1]);
        sp.location = p[3];
        double amp = std::exp(p[2]);
        std::vector<double> model = stable_pdf_batch(sp, xs);
        r.resize(static_cast<Eigen::Index>(xs.size()));
        for (std::size_t j = 0; j < xs.size(); ++j)
            r[static_cast<Eigen::Index>(j)] = amp * model[j] - ys[j];
    };

    Eigen::VectorXd p0(4);
    p0 << alpha_to_t(alpha0, opt), std::log(gamma0), std::log(amp0), delta0;
    LevmarOptions lopt;
    lopt.max_iterations = opt.max_iterations;
    LevmarResult lm = levmar(residual, p0, lopt);

    StableFitResult out;
    out.params.alpha = alpha_of(lm.p[0], opt);
    out.params.scale = std::exp(lm.p[1]);
    out.params.location = lm.p[3];
    out.params.sided = Sidedness::symmetric;
    out.amplitude = std::exp(lm.p[2]);
    out.iterations = lm.iterations;

    double mean_y = 0.0;
    for (double y : ys) mean_y += y;
    mean_y /= static_cast<double>(ys.size());
    double sst = 0.0;
    for (double y : ys) sst += (y - mean_y) * (y - mean_y);
    out.r_squared = sst > 0.0 ? std::max(0.0, 1.0 - lm.ssr / sst) : 0.0;

    if (!lm.converged)
        throw fit_error("stable_fit did not converge", out.params.alpha, out.params.scale,
                        out.params.location, out.amplitude, lm.ssr);

    // map the covariance back to (alpha, scale, location, amplitude)
    Eigen::Matrix4d d = Eigen::Matrix4d::Zero();
    d(0, 0) = dalpha_dt(lm.p[0], opt);
    d(1, 1) = out.params.scale;
    d(2, 2) = out.amplitude;
    d(3, 3) = 1.0;
    Eigen::Matrix4d cov_t = lm.covariance;
    // internal order is (t, ln scale, ln amp, location); external order is
    // (alpha, scale, location, amplitude)
    Eigen::Matrix4d perm = Eigen::Matrix4d::Zero();
    perm(0, 0) = 1.0; // alpha <- t
    perm(1, 1) = 1.0; // scale <- ln scale
    perm(2, 3) = 1.0; // location <- p3
    perm(3, 2) = 1.0; // amplitude <- ln amp
    Eigen::Matrix4d cov = perm * (d * cov_t * d.transpose()) * perm.transpose();
    for (int a = 0; a < 4; ++a)
        for (int b = 0; b < 4; ++b)
            out.covariance[static_cast<std::size_t>(a * 4 + b)] = cov(a, b);
    out.alpha_err = std::sqrt(std::max(0.0, cov(0, 0)));
    out.scale_err = std::sqrt(std::max(0.0, cov(1, 1)));
    out.location_err = std::sqrt(std::max(0.0, cov(2, 2)));
    out.amplitude_err = std::sqrt(std::max(0.0, cov(3, 3)));
    return out;
}

} // namespace latdiff
