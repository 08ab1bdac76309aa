#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include "latdiff/analysis.hpp"
#include "latdiff/errors.hpp"
#include "latdiff/snapshot.hpp"
#include "latdiff/stable.hpp"

using namespace latdiff;

namespace {

template <typename F>
DensitySnapshot analytic_snapshot(double time_ms, double lo, double hi, int n, F f) {
    DensitySnapshot s;
    s.time_ms = time_ms;
    s.x_grid.resize(static_cast<std::size_t>(n));
    s.density.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        double x = lo + (hi - lo) * i / (n - 1);
        s.x_grid[static_cast<std::size_t>(i)] = x;
        s.density[static_cast<std::size_t>(i)] = f(x);
    }
    return s;
}

// Spreading family generated through the fitted-law evaluator; the evaluator
// itself is verified against independent oracles in the stable-law suite.
std::vector<DensitySnapshot> stable_family(double alpha, const std::vector<double>& times,
                                           double halfwidth_scales, int n) {
    std::vector<DensitySnapshot> out;
    for (double t : times) {
        StableParams p;
        p.alpha = alpha;
        p.scale = std::pow(t, 1.0 / alpha);
        double span = halfwidth_scales * p.scale;
        DensitySnapshot s;
        s.time_ms = t;
        s.x_grid.resize(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i)
            s.x_grid[static_cast<std::size_t>(i)] = -span + 2.0 * span * i / (n - 1);
        s.density = stable_pdf_batch(p, s.x_grid);
        out.push_back(std::move(s));
    }
    return out;
}

} // namespace

TEST_CASE("fwhm of an exact gaussian curve matches the closed form") {
    // variance 2*g^2 normal: f(x) = exp(-x^2/(4g^2)) / (2g sqrt(pi))
    const double g = 1.7;
    auto snap = analytic_snapshot(1.0, -17.0, 17.0, 301, [&](double x) {
        return std::exp(-x * x / (4.0 * g * g)) / (2.0 * g * std::sqrt(M_PI));
    });
    FwhmResult r = extract_fwhm(snap);
    const double expected = 4.0 * g * std::sqrt(std::log(2.0));
    CHECK(r.from_fit);
    CHECK(r.fwhm == doctest::Approx(expected).epsilon(1e-4));
    CHECK(r.fit.params.alpha == doctest::Approx(2.0).epsilon(1e-3));
    CHECK(r.sigma >= 0.0);
    CHECK(r.sigma < 1e-3 * r.fwhm); // noise-free curve: near-zero propagated error
}

TEST_CASE("fwhm of an exact lorentzian curve matches the closed form") {
    const double g = 0.8;
    auto snap = analytic_snapshot(1.0, -32.0, 32.0, 401, [&](double x) {
        return g / (M_PI * (x * x + g * g));
    });
    FwhmResult r = extract_fwhm(snap);
    CHECK(r.from_fit);
    CHECK(r.fwhm == doctest::Approx(2.0 * g).epsilon(1e-3));
    CHECK(r.fit.params.alpha == doctest::Approx(1.0).epsilon(5e-3));
}

TEST_CASE("fwhm is amplitude independent") {
    const double g = 0.8;
    auto snap = analytic_snapshot(1.0, -32.0, 32.0, 401, [&](double x) {
        return 2.7 * g / (M_PI * (x * x + g * g));
    });
    FwhmResult r = extract_fwhm(snap);
    CHECK(r.from_fit);
    CHECK(r.fwhm == doctest::Approx(2.0 * g).epsilon(1e-3));
    CHECK(r.fit.amplitude == doctest::Approx(2.7).epsilon(1e-3));
}

TEST_CASE("fwhm falls back to direct crossings when the curve cannot be fit") {
    // 7 points is below the fit minimum; the triangle is linear everywhere so
    // the interpolated crossings are exact: peak 1.5, half level 0.75
    DensitySnapshot tri;
    tri.time_ms = 1.0;
    tri.x_grid = {-3.0, -2.0, -1.0, 0.0, 1.0, 2.0, 3.0};
    tri.density = {0.0, 0.5, 1.0, 1.5, 1.0, 0.5, 0.0};
    FwhmResult r = extract_fwhm(tri);
    CHECK_FALSE(r.from_fit);
    CHECK(r.fwhm == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(r.sigma == doctest::Approx(1.0)); // one grid spacing
}

TEST_CASE("fwhm extraction rejects degenerate input") {
    DensitySnapshot s;
    s.x_grid = {0.0, 1.0};
    s.density = {1.0, 1.0};
    CHECK_THROWS_AS(extract_fwhm(s), input_error);

    // monotone curve: no two-sided crossing anywhere
    auto mono = analytic_snapshot(1.0, 0.0, 6.0, 7, [](double x) { return x; });
    CHECK_THROWS_AS(extract_fwhm(mono), input_error);
}

TEST_CASE("dynamical exponent recovers an exact power law") {
    std::vector<std::pair<double, double>> tw;
    for (double t : {1.0, 2.0, 5.0, 10.0, 30.0, 100.0})
        tw.emplace_back(t, 3.0 * std::pow(t, 1.0 / 1.7));
    ExponentFit f = fit_dynamical_exponent(tw);
    CHECK(f.exponent == doctest::Approx(1.7).epsilon(1e-10));
    CHECK(f.r_squared == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(f.ci95 >= 0.0);
    CHECK(f.ci95 < 1e-6);
    CHECK(f.method == ExponentMethod::fwhm_power_law);
}

TEST_CASE("dynamical exponent is invariant under axis rescaling") {
    std::vector<std::pair<double, double>> tw;
    for (int i = 0; i < 9; ++i) {
        double t = std::pow(10.0, i / 4.0);
        tw.emplace_back(t, 2.0 * std::pow(t, 0.55) * std::exp(0.03 * std::sin(2.399 * i)));
    }
    ExponentFit base = fit_dynamical_exponent(tw);

    // powers of two scale both axes without any rounding change
    auto scaled = tw;
    for (auto& [t, w] : scaled) w *= 4.0;
    ExponentFit fw = fit_dynamical_exponent(scaled);
    CHECK(fw.exponent == base.exponent);
    CHECK(fw.ci95 == base.ci95);
    CHECK(fw.r_squared == base.r_squared);

    scaled = tw;
    for (auto& [t, w] : scaled) t *= 8.0;
    ExponentFit ft = fit_dynamical_exponent(scaled);
    CHECK(ft.exponent == base.exponent);

    // a general factor only perturbs the last bits of the logs
    scaled = tw;
    for (auto& [t, w] : scaled) w *= 3.7;
    ExponentFit fg = fit_dynamical_exponent(scaled);
    CHECK(fg.exponent == doctest::Approx(base.exponent).epsilon(1e-12));
}

TEST_CASE("dynamical exponent confidence interval tightens with more points") {
    auto make = [](int n) {
        std::vector<std::pair<double, double>> tw;
        for (int i = 0; i < n; ++i) {
            double t = std::pow(10.0, 2.0 * i / (n - 1));
            tw.emplace_back(t, 3.0 * std::pow(t, 1.0 / 1.7) * std::exp(0.05 * std::sin(2.399 * i)));
        }
        return fit_dynamical_exponent(tw);
    };
    ExponentFit few = make(6);
    ExponentFit many = make(24);
    CHECK(std::abs(few.exponent - 1.7) < 0.25);
    CHECK(std::abs(many.exponent - 1.7) < 0.25);
    CHECK(few.ci95 > 0.0);
    CHECK(many.ci95 < few.ci95);
    CHECK(few.r_squared < 1.0);
}

TEST_CASE("dynamical exponent rejects unusable series") {
    using tws = std::vector<std::pair<double, double>>;
    CHECK_THROWS_AS(fit_dynamical_exponent(tws{{1, 1}, {2, 2}, {3, 3}}), input_error);
    CHECK_THROWS_AS(fit_dynamical_exponent(tws{{1, 1}, {2, -2}, {3, 3}, {4, 4}}), input_error);
    CHECK_THROWS_AS(fit_dynamical_exponent(tws{{2, 1}, {2, 2}, {2, 3}, {2, 4}}), input_error);
    // shrinking widths: slope is negative, the exponent is undefined
    CHECK_THROWS_AS(fit_dynamical_exponent(tws{{1, 8}, {2, 4}, {4, 2}, {8, 1}}), data_error);
}

TEST_CASE("rescaling preserves the curve integral and the limiting shape") {
    // W(x, t) = f(x/t)/t with f a unit lorentzian; at alpha = 1 the rescaled
    // curve is f itself
    const double t = 9.0;
    auto snap = analytic_snapshot(t, -600.0, 600.0, 1025, [&](double x) {
        double u = x / t;
        return 1.0 / (M_PI * (1.0 + u * u)) / t;
    });
    double integral_before = trapezoid(snap.x_grid, snap.density);

    DensitySnapshot scaled = rescale_snapshot(snap, 1.0, 1024);
    double integral_after = trapezoid(scaled.x_grid, scaled.density);
    CHECK(std::abs(integral_after - integral_before) < 1e-3);
    CHECK(scaled.time_ms == t);

    for (double x : {0.0, 0.7, 2.0, 5.0}) {
        double want = 1.0 / (M_PI * (1.0 + x * x));
        double got = scaled.density[static_cast<std::size_t>(
            std::lower_bound(scaled.x_grid.begin(), scaled.x_grid.end(), x) -
            scaled.x_grid.begin())];
        CHECK(got == doctest::Approx(want).epsilon(5e-3));
    }
}

TEST_CASE("self-similarity measure vanishes for identical snapshots") {
    auto snap = analytic_snapshot(2.0, -12.0, 12.0, 301, [](double x) {
        return std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
    });
    std::vector<DensitySnapshot> fam{snap, snap, snap};
    CHECK(self_similarity_measure(fam, 1.7) <= 1e-14);
}

TEST_CASE("self-similarity measure is minimized at the true scaling of a diffusive family") {
    // sigma^2 = t gaussians: exactly self-similar with exponent 2
    std::vector<DensitySnapshot> fam;
    for (double t : {1.0, 4.0, 16.0}) {
        double sig = std::sqrt(t);
        fam.push_back(analytic_snapshot(t, -8.0 * sig, 8.0 * sig, 1201, [&](double x) {
            return std::exp(-0.5 * x * x / t) / (sig * std::sqrt(2.0 * M_PI));
        }));
    }
    double m_true = self_similarity_measure(fam, 2.0);
    CHECK(m_true >= 0.0);
    CHECK(m_true < 5e-3);
    CHECK(self_similarity_measure(fam, 1.4) > 5.0 * m_true);
    CHECK(self_similarity_measure(fam, 2.9) > 5.0 * m_true);
}

TEST_CASE("self-similarity measure rejects non-overlapping rescaled supports") {
    auto a = analytic_snapshot(1.0, 10.0, 20.0, 11, [](double) { return 0.1; });
    auto b = analytic_snapshot(100.0, 0.5, 0.9, 11, [](double) { return 2.5; });
    try {
        self_similarity_measure({a, b}, 1.0);
        FAIL("expected data_error");
    } catch (const data_error& e) {
        std::string msg = e.what();
        CHECK(msg.find("t=1 ") != std::string::npos);
        CHECK(msg.find("t=100 ") != std::string::npos);
    }
}

TEST_CASE("self-similarity measure validates its inputs") {
    auto good = analytic_snapshot(1.0, -12.0, 12.0, 101, [](double x) {
        return std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
    });
    CHECK_THROWS_AS(self_similarity_measure({good}, 1.5), input_error);
    CHECK_THROWS_AS(self_similarity_measure({good, good}, -1.0), param_error);

    auto unnorm = good;
    for (double& d : unnorm.density) d *= 2.0;
    CHECK_THROWS_AS(self_similarity_measure({good, unnorm}, 1.5), input_error);

    auto zero_t = good;
    zero_t.time_ms = 0.0;
    CHECK_THROWS_AS(self_similarity_measure({good, zero_t}, 1.5), input_error);
}

TEST_CASE("alpha scan locates the scaling exponent of a heavy-tailed family") {
    auto fam = stable_family(1.5, {1.0, 3.2, 10.0, 32.0, 100.0}, 20.0, 512);
    CollapseResult res = find_alpha_star(fam);
    CHECK_FALSE(res.boundary_warning);
    CHECK(std::abs(res.alpha_star - 1.5) <= 0.05);

    // refined point is part of the returned scan and carries its minimum
    auto it = std::find(res.alpha_grid.begin(), res.alpha_grid.end(), res.alpha_star);
    REQUIRE(it != res.alpha_grid.end());
    CHECK(res.m_star == *std::min_element(res.m_values.begin(), res.m_values.end()));
    CHECK(std::is_sorted(res.alpha_grid.begin(), res.alpha_grid.end()));
    CHECK(res.alpha_grid.size() == res.m_values.size());

    // the scan dips once: exactly one strict interior local minimum
    int local_minima = 0;
    for (std::size_t i = 1; i + 1 < res.m_values.size(); ++i)
        if (res.m_values[i] < res.m_values[i - 1] && res.m_values[i] < res.m_values[i + 1])
            ++local_minima;
    CHECK(local_minima == 1);

    // collapsed curves share the common grid and overlay each other
    REQUIRE(res.collapsed_curves.size() == fam.size());
    for (const auto& c : res.collapsed_curves)
        CHECK(c.x_grid == res.collapsed_curves[0].x_grid);
}

TEST_CASE("alpha scan locates a gaussian family at the diffusive value") {
    std::vector<DensitySnapshot> fam;
    for (double t : {1.0, 4.0, 16.0, 64.0}) {
        double sig = std::sqrt(t);
        fam.push_back(analytic_snapshot(t, -8.0 * sig, 8.0 * sig, 801, [&](double x) {
            return std::exp(-0.5 * x * x / t) / (sig * std::sqrt(2.0 * M_PI));
        }));
    }
    CollapseResult res = find_alpha_star(fam);
    CHECK_FALSE(res.boundary_warning);
    CHECK(std::abs(res.alpha_star - 2.0) <= 0.05);
}

TEST_CASE("alpha scan flags a minimum pinned to the range edge") {
    auto fam = stable_family(0.9, {1.0, 10.0, 100.0}, 25.0, 512);
    CollapseResult res = find_alpha_star(fam, 1.5, 3.0, 16);
    CHECK(res.boundary_warning);
    CHECK(res.alpha_star == res.alpha_grid.front());
    CHECK(res.m_star == res.m_values.front());
}

TEST_CASE("shape exponent tracks the profile while ignoring the spreading rate") {
    // fixed shape 1.2, widths growing diffusively: the two exponents decouple
    std::vector<double> times{1.0, 2.0, 4.0, 8.0, 16.0, 32.0};
    std::vector<DensitySnapshot> fam;
    for (double t : times) {
        StableParams p;
        p.alpha = 1.2;
        p.scale = std::sqrt(t);
        double span = 30.0 * p.scale;
        DensitySnapshot s;
        s.time_ms = t;
        s.x_grid.resize(513);
        for (int i = 0; i < 513; ++i)
            s.x_grid[static_cast<std::size_t>(i)] = -span + 2.0 * span * i / 512.0;
        s.density = stable_pdf_batch(p, s.x_grid);
        fam.push_back(std::move(s));
    }
    ShapeSeries series = fit_shape_exponent(fam);
    REQUIRE(series.points.size() == times.size());
    for (const auto& p : series.points) {
        CHECK(p.fit_ok);
        CHECK(p.fit.method == ExponentMethod::levy_shape);
        CHECK(p.fit.exponent == doctest::Approx(1.2).epsilon(0.02));
    }
    CHECK(series.asymptote == doctest::Approx(1.2).epsilon(0.02));

    // while the widths fit a dynamical exponent of 2
    std::vector<std::pair<double, double>> tw;
    for (std::size_t i = 0; i < times.size(); ++i) {
        FwhmResult r = extract_fwhm(fam[i]);
        CHECK(r.from_fit);
        tw.emplace_back(times[i], r.fwhm);
    }
    ExponentFit dyn = fit_dynamical_exponent(tw);
    CHECK(dyn.exponent == doctest::Approx(2.0).epsilon(0.02));
}

TEST_CASE("shape series tolerates individual fit failures") {
    auto fam = stable_family(1.3, {1.0, 4.0, 16.0, 64.0, 256.0}, 25.0, 512);
    DensitySnapshot junk;
    junk.time_ms = 8.0;
    junk.x_grid = {-3.0, -2.0, -1.0, 0.0, 1.0, 2.0, 3.0};
    junk.density = {0.0, 0.5, 1.0, 1.5, 1.0, 0.5, 0.0};
    fam.insert(fam.begin() + 2, junk);

    ShapeSeries series = fit_shape_exponent(fam);
    REQUIRE(series.points.size() == 6);
    CHECK_FALSE(series.points[2].fit_ok);
    int ok = 0;
    for (const auto& p : series.points) ok += p.fit_ok ? 1 : 0;
    CHECK(ok == 5);
    CHECK(series.asymptote == doctest::Approx(1.3).epsilon(0.02));
}

TEST_CASE("shape series with no usable fit is an error") {
    DensitySnapshot junk;
    junk.time_ms = 1.0;
    junk.x_grid = {-3.0, -2.0, -1.0, 0.0, 1.0, 2.0, 3.0};
    junk.density = {0.0, 0.5, 1.0, 1.5, 1.0, 0.5, 0.0};
    CHECK_THROWS_AS(fit_shape_exponent({junk, junk}), data_error);
}
