#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "latdiff/errors.hpp"

namespace latdiff {

// Piecewise linear interpolation with constant extension outside the range.
inline double lerp_at(const std::vector<double>& xs, const std::vector<double>& ys, double x) {
    if (xs.size() < 2) throw param_error("lerp_at needs >= 2 points");
    if (x <= xs.front()) return ys.front();
    if (x >= xs.back()) return ys.back();
    auto it = std::upper_bound(xs.begin(), xs.end(), x);
    std::size_t i = static_cast<std::size_t>(it - xs.begin()) - 1;
    double t = (x - xs[i]) / (xs[i + 1] - xs[i]);
    return ys[i] * (1.0 - t) + ys[i + 1] * t;
}

// Monotone cubic interpolant (Fritsch-Carlson). Preserves monotonicity of the
// data on each interval, which keeps interpolated log-densities overshoot-free.
class Pchip {
public:
    Pchip(std::vector<double> x, std::vector<double> y)
        : x_(std::move(x)), y_(std::move(y)) {
        const std::size_t n = x_.size();
        if (n < 2 || y_.size() != n) throw param_error("Pchip needs >= 2 matched points");
        for (std::size_t i = 1; i < n; ++i)
            if (!(x_[i] > x_[i - 1])) throw param_error("Pchip abscissae must increase");
        d_.assign(n, 0.0);
        if (n == 2) {
            double s = (y_[1] - y_[0]) / (x_[1] - x_[0]);
            d_[0] = d_[1] = s;
            return;
        }
        std::vector<double> h(n - 1), delta(n - 1);
        for (std::size_t i = 0; i + 1 < n; ++i) {
            h[i] = x_[i + 1] - x_[i];
            delta[i] = (y_[i + 1] - y_[i]) / h[i];
        }
        for (std::size_t i = 1; i + 1 < n; ++i) {
            if (delta[i - 1] * delta[i] <= 0.0) {
                d_[i] = 0.0;
            } else {
                double w1 = 2.0 * h[i] + h[i - 1];
                double w2 = h[i] + 2.0 * h[i - 1];
                d_[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
            }
        }
        d_[0] = edge_slope(h[0], h[1], delta[0], delta[1]);
        d_[n - 1] = edge_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
    }

    double operator()(double x) const {
        const std::size_t n = x_.size();
        std::size_t i;
        if (x <= x_.front()) {
            i = 0;
        } else if (x >= x_.back()) {
            i = n - 2;
        } else {
            auto it = std::upper_bound(x_.begin(), x_.end(), x);
            i = static_cast<std::size_t>(it - x_.begin()) - 1;
        }
        double h = x_[i + 1] - x_[i];
        double t = (x - x_[i]) / h;
        double t2 = t * t, t3 = t2 * t;
        double h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        double h10 = t3 - 2.0 * t2 + t;
        double h01 = -2.0 * t3 + 3.0 * t2;
        double h11 = t3 - t2;
        return h00 * y_[i] + h * h10 * d_[i] + h01 * y_[i + 1] + h * h11 * d_[i + 1];
    }

private:
    // Non-centered three-point end slope with the usual monotonicity clamps.
    static double edge_slope(double h0, double h1, double del0, double del1) {
        double d = ((2.0 * h0 + h1) * del0 - h0 * del1) / (h0 + h1);
        if (d * del0 <= 0.0) return 0.0;
        if (del0 * del1 < 0.0 && std::abs(d) > 3.0 * std::abs(del0)) return 3.0 * del0;
        return d;
    }

    std::vector<double> x_, y_, d_;
};

} // namespace latdiff
