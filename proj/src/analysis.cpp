#include "latdiff/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "latdiff/errors.hpp"
#include "latdiff/interpolate.hpp"

namespace latdiff {

namespace {

// Two-sided 95% Student-t quantiles, dof 1..30, then standard table bands.
double t_quantile_975(int dof) {
    static constexpr double kTable[30] = {
        12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228,
        2.201,  2.179, 2.160, 2.145, 2.131, 2.120, 2.110, 2.101, 2.093, 2.086,
        2.080,  2.074, 2.069, 2.064, 2.060, 2.056, 2.052, 2.048, 2.045, 2.042};
    if (dof < 1) throw param_error("t quantile needs dof >= 1");
    if (dof <= 30) return kTable[dof - 1];
    if (dof <= 40) return 2.021;
    if (dof <= 60) return 2.000;
    if (dof <= 120) return 1.980;
    return 1.960;
}

void check_curve(const DensitySnapshot& snap, std::size_t min_points, const char* what) {
    const std::size_t n = snap.x_grid.size();
    if (n < min_points || snap.density.size() != n) {
        std::ostringstream os;
        os << what << " needs >= " << min_points << " matched grid points, got " << n
           << " x " << snap.density.size();
        throw input_error(os.str());
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (!std::isfinite(snap.x_grid[i]) || !std::isfinite(snap.density[i]) ||
            snap.density[i] < 0.0)
            throw input_error(std::string(what) + ": non-finite or negative snapshot entry");
        if (i > 0 && !(snap.x_grid[i] > snap.x_grid[i - 1]))
            throw input_error(std::string(what) + ": grid must be strictly increasing");
    }
}

double unit_fwhm(double alpha) {
    StableParams p;
    p.alpha = alpha;
    return stable_fwhm(p);
}

// Interpolant over one snapshot: monotone cubic on the log-density inside each
// maximal run of positive bins (tails decay smoothly in log space), linear
// through bins that touch zero, zero outside the measured support.
class DensityInterp {
public:
    explicit DensityInterp(const DensitySnapshot& snap)
        : xs_(snap.x_grid), ys_(snap.density) {
        const std::size_t n = xs_.size();
        run_id_.assign(n, -1);
        std::size_t i = 0;
        while (i < n) {
            if (!(ys_[i] > 0.0)) {
                ++i;
                continue;
            }
            std::size_t j = i;
            while (j + 1 < n && ys_[j + 1] > 0.0) ++j;
            if (j > i) {
                std::vector<double> rx(xs_.begin() + static_cast<std::ptrdiff_t>(i),
                                       xs_.begin() + static_cast<std::ptrdiff_t>(j + 1));
                std::vector<double> ry(rx.size());
                for (std::size_t k = 0; k < rx.size(); ++k)
                    ry[k] = std::log(ys_[i + k]);
                int id = static_cast<int>(runs_.size());
                runs_.emplace_back(std::move(rx), std::move(ry));
                for (std::size_t k = i; k <= j; ++k) run_id_[k] = id;
            }
            i = j + 1;
        }
    }

    double front() const { return xs_.front(); }
    double back() const { return xs_.back(); }

    double operator()(double x) const {
        if (x <= xs_.front()) return x == xs_.front() ? ys_.front() : 0.0;
        if (x >= xs_.back()) return x == xs_.back() ? ys_.back() : 0.0;
        auto it = std::upper_bound(xs_.begin(), xs_.end(), x);
        std::size_t i = static_cast<std::size_t>(it - xs_.begin()) - 1;
        if (run_id_[i] >= 0 && run_id_[i] == run_id_[i + 1])
            return std::exp(runs_[static_cast<std::size_t>(run_id_[i])](x));
        double t = (x - xs_[i]) / (xs_[i + 1] - xs_[i]);
        return ys_[i] * (1.0 - t) + ys_[i + 1] * t;
    }

private:
    std::vector<double> xs_, ys_;
    std::vector<int> run_id_;
    std::vector<Pchip> runs_;
};

struct PreparedFamily {
    std::vector<DensityInterp> interps;
    std::vector<double> times;
    std::vector<double> norms; // trapezoid integral of each snapshot
};

PreparedFamily prepare_family(const std::vector<DensitySnapshot>& snaps, const char* what) {
    if (snaps.size() < 2)
        throw input_error(std::string(what) + " needs >= 2 snapshots");
    PreparedFamily fam;
    fam.interps.reserve(snaps.size());
    fam.times.reserve(snaps.size());
    fam.norms.reserve(snaps.size());
    for (const auto& s : snaps) {
        check_curve(s, 8, what);
        if (!(s.time_ms > 0.0))
            throw input_error(std::string(what) + ": snapshot times must be positive");
        double norm = trapezoid(s.x_grid, s.density);
        if (!(norm > 0.9) || !(norm < 1.1)) {
            std::ostringstream os;
            os << what << ": snapshot at t=" << s.time_ms
               << " ms is not normalized (integral " << norm << ")";
            throw input_error(os.str());
        }
        fam.interps.emplace_back(s);
        fam.times.push_back(s.time_ms);
        fam.norms.push_back(norm);
    }
    return fam;
}

constexpr int kMeasureGrid = 512;

// Core of the self-similarity measure on prebuilt interpolants. When curves
// is non-null, the rescaled family on the common grid is written there.
double measure_core(const PreparedFamily& fam, double alpha,
                    std::vector<double>* grid_out,
                    std::vector<std::vector<double>>* curves_out) {
    const std::size_t n = fam.interps.size();
    std::vector<double> scale(n), lo(n), hi(n);
    std::size_t arg_lo = 0, arg_hi = 0;
    for (std::size_t i = 0; i < n; ++i) {
        scale[i] = std::pow(fam.times[i], 1.0 / alpha);
        lo[i] = fam.interps[i].front() / scale[i];
        hi[i] = fam.interps[i].back() / scale[i];
        if (lo[i] > lo[arg_lo]) arg_lo = i;
        if (hi[i] < hi[arg_hi]) arg_hi = i;
    }
    double left = lo[arg_lo], right = hi[arg_hi];
    if (!(right > left)) {
        std::ostringstream os;
        os << "rescaled supports of snapshots at t=" << fam.times[arg_lo] << " ms and t="
           << fam.times[arg_hi] << " ms do not overlap at alpha=" << alpha;
        throw data_error(os.str());
    }

    std::vector<double> grid(kMeasureGrid), mean(kMeasureGrid, 0.0);
    std::vector<std::vector<double>> vals(n, std::vector<double>(kMeasureGrid));
    for (int q = 0; q < kMeasureGrid; ++q)
        grid[static_cast<std::size_t>(q)] =
            left + (right - left) * q / (kMeasureGrid - 1);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& interp = fam.interps[i];
        for (int q = 0; q < kMeasureGrid; ++q) {
            double x = std::clamp(grid[static_cast<std::size_t>(q)] * scale[i],
                                  interp.front(), interp.back());
            // renormalize exactly so small histogram truncation cannot bias m
            double v = scale[i] * interp(x) / fam.norms[i];
            vals[i][static_cast<std::size_t>(q)] = v;
            mean[static_cast<std::size_t>(q)] += v;
        }
    }
    for (double& v : mean) v /= static_cast<double>(n);

    double denom = trapezoid(grid, mean);
    if (!(denom > 0.0)) throw numeric_error("mean rescaled density integral vanished", denom);
    double m = 0.0;
    std::vector<double> absdev(kMeasureGrid);
    for (std::size_t i = 0; i < n; ++i) {
        for (int q = 0; q < kMeasureGrid; ++q)
            absdev[static_cast<std::size_t>(q)] =
                std::abs(vals[i][static_cast<std::size_t>(q)] - mean[static_cast<std::size_t>(q)]);
        m += trapezoid(grid, absdev) / denom;
    }
    if (grid_out) *grid_out = std::move(grid);
    if (curves_out) *curves_out = std::move(vals);
    return m;
}

std::string format_g(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

} // namespace

FwhmResult extract_fwhm(const DensitySnapshot& curve, double exclusion_halfwidth) {
    check_curve(curve, 5, "fwhm extraction");
    FwhmResult out;
    bool fit_failed = false;
    try {
        FitOptions opt;
        opt.exclusion_halfwidth = exclusion_halfwidth;
        out.fit = stable_fit(curve, opt);
        out.from_fit = true;
        out.fwhm = stable_fwhm(out.fit.params);

        // FWHM(alpha, scale) = scale * w(alpha); propagate the (alpha, scale)
        // covariance block, with w'(alpha) by finite difference kept inside
        // the admissible alpha interval.
        double a = out.fit.params.alpha;
        double g = out.fit.params.scale;
        double w = out.fwhm / g;
        const double h = 1e-3;
        double dwda;
        if (a + h > 2.0)
            dwda = (unit_fwhm(a) - unit_fwhm(a - h)) / h;
        else if (a - h < 0.31)
            dwda = (unit_fwhm(a + h) - unit_fwhm(a)) / h;
        else
            dwda = (unit_fwhm(a + h) - unit_fwhm(a - h)) / (2.0 * h);
        double dF_da = g * dwda;
        double dF_dg = w;
        const auto& C = out.fit.covariance;
        double var = dF_da * dF_da * C[0] + dF_dg * dF_dg * C[5] +
                     2.0 * dF_da * dF_dg * C[1];
        out.sigma = var > 0.0 ? std::sqrt(var) : 0.0;
        return out;
    } catch (const error&) {
        fit_failed = true;
    }
    (void)fit_failed;
    return crossing_fwhm(curve);
}

FwhmResult crossing_fwhm(const DensitySnapshot& curve) {
    check_curve(curve, 5, "fwhm extraction");
    FwhmResult out;

    // Direct half-maximum crossings, linearly interpolated on each side of the
    // peak. Resolution-limited: the quoted uncertainty is one grid spacing.
    const auto& xs = curve.x_grid;
    const auto& ys = curve.density;
    std::size_t ip = static_cast<std::size_t>(
        std::max_element(ys.begin(), ys.end()) - ys.begin());
    double peak = ys[ip];
    if (!(peak > 0.0)) throw input_error("fwhm extraction: density has no positive peak");
    double half = 0.5 * peak;

    double xl = std::numeric_limits<double>::quiet_NaN();
    for (std::size_t i = ip; i > 0; --i) {
        if (ys[i - 1] < half && ys[i] >= half) {
            double t = (half - ys[i - 1]) / (ys[i] - ys[i - 1]);
            xl = xs[i - 1] + t * (xs[i] - xs[i - 1]);
            break;
        }
    }
    double xr = std::numeric_limits<double>::quiet_NaN();
    for (std::size_t i = ip; i + 1 < xs.size(); ++i) {
        if (ys[i] >= half && ys[i + 1] < half) {
            double t = (ys[i] - half) / (ys[i] - ys[i + 1]);
            xr = xs[i] + t * (xs[i + 1] - xs[i]);
            break;
        }
    }
    if (std::isnan(xl) || std::isnan(xr))
        throw input_error("fwhm extraction: half-maximum crossing not found on both sides");

    out.fwhm = xr - xl;
    out.sigma = xs[1] - xs[0];
    out.from_fit = false;
    out.fit = StableFitResult{};
    return out;
}

ExponentFit fit_dynamical_exponent(const std::vector<std::pair<double, double>>& time_width) {
    const std::size_t n = time_width.size();
    if (n < 4) throw input_error("exponent fit needs >= 4 (time, width) points");
    for (const auto& [t, w] : time_width)
        if (!std::isfinite(t) || !std::isfinite(w) || !(t > 0.0) || !(w > 0.0))
            throw input_error("exponent fit needs positive finite times and widths");

    // Normalizing by the first point keeps a power-of-two rescaling of either
    // axis from perturbing any intermediate rounding.
    const double t0 = time_width[0].first;
    const double w0 = time_width[0].second;
    std::vector<double> xs(n), ys(n);
    for (std::size_t i = 0; i < n; ++i) {
        xs[i] = std::log(time_width[i].first / t0);
        ys[i] = std::log(time_width[i].second / w0);
    }
    double xbar = 0.0, ybar = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        xbar += xs[i];
        ybar += ys[i];
    }
    xbar /= static_cast<double>(n);
    ybar /= static_cast<double>(n);
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double dx = xs[i] - xbar, dy = ys[i] - ybar;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if (!(sxx > 0.0)) throw input_error("exponent fit needs at least two distinct times");
    double slope = sxy / sxx;
    if (!(slope > 0.0)) throw data_error("widths do not grow with time; exponent undefined");

    double ssr = syy - slope * sxy;
    if (ssr < 0.0) ssr = 0.0;
    int dof = static_cast<int>(n) - 2;
    double se = std::sqrt(ssr / dof / sxx);

    ExponentFit fit;
    fit.exponent = 1.0 / slope;
    // delta method for 1/slope
    fit.ci95 = t_quantile_975(dof) * se / (slope * slope);
    fit.r_squared = syy > 0.0 ? std::clamp(1.0 - ssr / syy, 0.0, 1.0) : 1.0;
    fit.method = ExponentMethod::fwhm_power_law;
    return fit;
}

DensitySnapshot rescale_snapshot(const DensitySnapshot& snap, double alpha, int grid_points) {
    if (!(alpha > 0.0) || !std::isfinite(alpha))
        throw param_error("rescale needs finite alpha > 0");
    if (grid_points < 16) throw param_error("rescale needs >= 16 grid points");
    check_curve(snap, 8, "rescale");
    if (!(snap.time_ms > 0.0)) throw input_error("rescale: snapshot time must be positive");

    double s = std::pow(snap.time_ms, 1.0 / alpha);
    DensityInterp interp(snap);
    DensitySnapshot out;
    out.time_ms = snap.time_ms;
    out.meta = snap.meta;
    out.meta["rescale_alpha"] = format_g(alpha);
    double lo = snap.x_grid.front() / s;
    double hi = snap.x_grid.back() / s;
    out.x_grid.resize(static_cast<std::size_t>(grid_points));
    out.density.resize(static_cast<std::size_t>(grid_points));
    for (int i = 0; i < grid_points; ++i) {
        double x = lo + (hi - lo) * i / (grid_points - 1);
        out.x_grid[static_cast<std::size_t>(i)] = x;
        double xi = std::clamp(x * s, interp.front(), interp.back());
        out.density[static_cast<std::size_t>(i)] = s * interp(xi);
    }
    return out;
}

double self_similarity_measure(const std::vector<DensitySnapshot>& snapshots, double alpha) {
    if (!(alpha > 0.0) || !std::isfinite(alpha))
        throw param_error("self-similarity needs finite alpha > 0");
    PreparedFamily fam = prepare_family(snapshots, "self-similarity");
    return measure_core(fam, alpha, nullptr, nullptr);
}

CollapseResult find_alpha_star(const std::vector<DensitySnapshot>& snapshots,
                               double alpha_lo, double alpha_hi, int grid_points) {
    if (!(alpha_lo > 0.5) || !(alpha_hi < 4.0) || !(alpha_lo < alpha_hi))
        throw param_error("alpha scan range must satisfy 0.5 < lo < hi < 4");
    if (grid_points < 8) throw param_error("alpha scan needs >= 8 grid points");
    PreparedFamily fam = prepare_family(snapshots, "collapse");

    CollapseResult res;
    res.alpha_grid.resize(static_cast<std::size_t>(grid_points));
    res.m_values.resize(static_cast<std::size_t>(grid_points));
    for (int k = 0; k < grid_points; ++k) {
        double a = alpha_lo + (alpha_hi - alpha_lo) * k / (grid_points - 1);
        res.alpha_grid[static_cast<std::size_t>(k)] = a;
        res.m_values[static_cast<std::size_t>(k)] =
            measure_core(fam, a, nullptr, nullptr);
    }
    std::size_t imin = static_cast<std::size_t>(
        std::min_element(res.m_values.begin(), res.m_values.end()) - res.m_values.begin());

    if (imin == 0 || imin + 1 == res.alpha_grid.size()) {
        // minimum pinned at an edge: refining would extrapolate the range
        res.boundary_warning = true;
        res.alpha_star = res.alpha_grid[imin];
        res.m_star = res.m_values[imin];
    } else {
        double a = res.alpha_grid[imin - 1];
        double b = res.alpha_grid[imin + 1];
        const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
        double c = b - gr * (b - a);
        double d = a + gr * (b - a);
        double fc = measure_core(fam, c, nullptr, nullptr);
        double fd = measure_core(fam, d, nullptr, nullptr);
        while (b - a > 1e-3) {
            if (fc < fd) {
                b = d;
                d = c;
                fd = fc;
                c = b - gr * (b - a);
                fc = measure_core(fam, c, nullptr, nullptr);
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + gr * (b - a);
                fd = measure_core(fam, d, nullptr, nullptr);
            }
        }
        double astar = 0.5 * (a + b);
        double mstar = measure_core(fam, astar, nullptr, nullptr);
        if (mstar <= res.m_values[imin]) {
            res.alpha_star = astar;
            res.m_star = mstar;
            auto pos = std::lower_bound(res.alpha_grid.begin(), res.alpha_grid.end(), astar);
            if (pos == res.alpha_grid.end() || *pos != astar) {
                auto idx = static_cast<std::size_t>(pos - res.alpha_grid.begin());
                res.alpha_grid.insert(pos, astar);
                res.m_values.insert(res.m_values.begin() + static_cast<std::ptrdiff_t>(idx),
                                    mstar);
            }
        } else {
            res.alpha_star = res.alpha_grid[imin];
            res.m_star = res.m_values[imin];
        }
    }

    std::vector<double> grid;
    std::vector<std::vector<double>> curves;
    measure_core(fam, res.alpha_star, &grid, &curves);
    res.collapsed_curves.reserve(snapshots.size());
    for (std::size_t i = 0; i < snapshots.size(); ++i) {
        DensitySnapshot snap;
        snap.time_ms = snapshots[i].time_ms;
        snap.meta = snapshots[i].meta;
        snap.meta["rescale_alpha"] = format_g(res.alpha_star);
        snap.x_grid = grid;
        snap.density = std::move(curves[i]);
        res.collapsed_curves.push_back(std::move(snap));
    }
    return res;
}

ShapeSeries fit_shape_exponent(const std::vector<DensitySnapshot>& snapshots,
                               double exclusion_halfwidth) {
    if (snapshots.empty()) throw input_error("shape fit needs >= 1 snapshot");
    ShapeSeries out;
    out.points.reserve(snapshots.size());
    for (const auto& snap : snapshots) {
        ShapePoint p;
        p.time_ms = snap.time_ms;
        p.fit.method = ExponentMethod::levy_shape;
        try {
            FitOptions opt;
            opt.exclusion_halfwidth = exclusion_halfwidth;
            StableFitResult fit = stable_fit(snap, opt);
            p.fit.exponent = fit.params.alpha;
            p.fit.ci95 = 1.96 * fit.alpha_err;
            p.fit.r_squared = fit.r_squared;
            p.fit_ok = true;
        } catch (const fit_error& fe) {
            p.fit.exponent = fe.best_alpha; // diagnostic only, excluded below
            p.fit_ok = false;
        } catch (const error&) {
            p.fit_ok = false;
        }
        out.points.push_back(p);
    }

    std::vector<double> usable;
    for (const auto& p : out.points)
        if (p.fit_ok) usable.push_back(p.fit.exponent);
    if (usable.empty()) throw data_error("no snapshot admitted a stable shape fit");
    std::size_t k = std::max<std::size_t>(1, usable.size() / 3);
    double acc = 0.0;
    for (std::size_t i = usable.size() - k; i < usable.size(); ++i) acc += usable[i];
    out.asymptote = acc / static_cast<double>(k);
    return out;
}

} // namespace latdiff
