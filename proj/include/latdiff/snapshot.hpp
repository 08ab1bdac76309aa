#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "latdiff/errors.hpp"

namespace latdiff {

// Spatial density curve W(x, t) at one time. x_grid is uniformly spaced bin
// centers; density is normalized so the trapezoid integral over x_grid is 1.
struct DensitySnapshot {
    double time_ms = 0.0;
    std::vector<double> x_grid;
    std::vector<double> density;
    std::map<std::string, std::string> meta;
};

inline double trapezoid(const std::vector<double>& x, const std::vector<double>& y) {
    double s = 0.0;
    for (std::size_t i = 1; i < x.size(); ++i)
        s += 0.5 * (y[i] + y[i - 1]) * (x[i] - x[i - 1]);
    return s;
}

// Linear-interpolated quantile of an already sorted sample.
inline double sorted_quantile(const std::vector<double>& sorted, double q) {
    if (sorted.empty()) throw param_error("quantile of empty sample");
    if (sorted.size() == 1) return sorted[0];
    double pos = q * static_cast<double>(sorted.size() - 1);
    auto lo = static_cast<std::size_t>(pos);
    if (lo >= sorted.size() - 1) return sorted.back();
    double frac = pos - static_cast<double>(lo);
    return sorted[lo] * (1.0 - frac) + sorted[lo + 1] * frac;
}

// Histogram positions onto a uniform grid spanning their central `coverage`
// quantile range. Counts are accumulated as integers and the result is
// renormalized to unit trapezoid integral, so the output depends only on the
// multiset of positions, not on accumulation order.
inline DensitySnapshot histogram_snapshot(std::vector<double> positions, double time_ms,
                                          int bins = 512, double coverage = 0.999) {
    if (positions.empty()) throw param_error("histogram of empty sample");
    if (bins < 64) throw param_error("histogram needs >= 64 bins");
    std::sort(positions.begin(), positions.end());
    double tail = 0.5 * (1.0 - coverage);
    double lo = sorted_quantile(positions, tail);
    double hi = sorted_quantile(positions, 1.0 - tail);
    if (!(hi - lo > 0.0)) {
        // degenerate sample (e.g. all atoms frozen at one point): widen
        double c = 0.5 * (lo + hi);
        double w = std::max(1e-9, std::abs(c) * 1e-9);
        lo = c - w;
        hi = c + w;
    }
    double dx = (hi - lo) / bins;

    std::vector<std::int64_t> counts(static_cast<std::size_t>(bins), 0);
    for (double p : positions) {
        if (p < lo || p > hi) continue;
        auto b = static_cast<std::int64_t>((p - lo) / dx);
        if (b < 0) b = 0;
        if (b >= bins) b = bins - 1;
        ++counts[static_cast<std::size_t>(b)];
    }

    DensitySnapshot snap;
    snap.time_ms = time_ms;
    snap.x_grid.resize(static_cast<std::size_t>(bins));
    snap.density.resize(static_cast<std::size_t>(bins));
    for (int i = 0; i < bins; ++i)
        snap.x_grid[static_cast<std::size_t>(i)] = lo + (i + 0.5) * dx;
    // trapezoid integral of raw counts over bin centers
    double raw = 0.0;
    for (int i = 0; i < bins; ++i) {
        double w = (i == 0 || i == bins - 1) ? 0.5 : 1.0;
        raw += w * static_cast<double>(counts[static_cast<std::size_t>(i)]);
    }
    raw *= dx;
    if (raw <= 0.0) throw numeric_error("histogram normalization vanished", raw);
    for (int i = 0; i < bins; ++i)
        snap.density[static_cast<std::size_t>(i)] =
            static_cast<double>(counts[static_cast<std::size_t>(i)]) / raw;
    return snap;
}

// Normalize an existing curve (e.g. a wavefunction marginal) in place.
inline void normalize_density(DensitySnapshot& snap) {
    double s = trapezoid(snap.x_grid, snap.density);
    if (s <= 0.0) throw numeric_error("density integral vanished", s);
    for (double& d : snap.density) d /= s;
}

// Gaussian convolution on a uniform grid (finite imaging resolution). The
// truncated kernel is renormalized near the edges so unit mass is kept.
inline void blur_density(DensitySnapshot& snap, double sigma) {
    if (!(sigma > 0.0) || snap.x_grid.size() < 2) return;
    double h = snap.x_grid[1] - snap.x_grid[0];
    int half = static_cast<int>(std::ceil(4.0 * sigma / h));
    if (half < 1) return;
    std::vector<double> kernel(static_cast<std::size_t>(2 * half + 1));
    for (int j = -half; j <= half; ++j)
        kernel[static_cast<std::size_t>(j + half)] =
            std::exp(-0.5 * (j * h) * (j * h) / (sigma * sigma));
    const int n = static_cast<int>(snap.density.size());
    std::vector<double> out(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        double acc = 0.0, wsum = 0.0;
        int lo = std::max(0, i - half), hi = std::min(n - 1, i + half);
        for (int j = lo; j <= hi; ++j) {
            double w = kernel[static_cast<std::size_t>(j - i + half)];
            acc += w * snap.density[static_cast<std::size_t>(j)];
            wsum += w;
        }
        out[static_cast<std::size_t>(i)] = acc / wsum;
    }
    snap.density = std::move(out);
    normalize_density(snap);
}

} // namespace latdiff
