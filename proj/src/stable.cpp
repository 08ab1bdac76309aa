#include "latdiff/stable.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "latdiff/errors.hpp"

namespace latdiff {

void StableParams::validate() const {
    if (!std::isfinite(alpha) || !std::isfinite(scale) || !std::isfinite(location))
        throw param_error("stable params must be finite");
    if (scale <= 0.0) throw param_error("stable scale must be > 0");
    if (sided == Sidedness::symmetric) {
        if (alpha <= 0.0 || alpha > 2.0)
            throw param_error("symmetric stable needs 0 < alpha <= 2");
    } else {
        if (alpha <= 0.0 || alpha >= 1.0)
            throw param_error("one-sided stable needs 0 < alpha < 1");
    }
}

const char* exponent_method_name(ExponentMethod m) {
    switch (m) {
    case ExponentMethod::fwhm_power_law: return "fwhm_power_law";
    case ExponentMethod::self_similarity: return "self_similarity";
    case ExponentMethod::levy_shape: return "levy_shape";
    case ExponentMethod::tail: return "tail";
    }
    return "unknown";
}

namespace {

// Gauss-Legendre 16 and 8 point rules on [-1,1]; the 8-point sum doubles as
// the error estimate for the 16-point one.
constexpr int kGl16 = 8;
constexpr double kGl16X[kGl16] = {
    0.0950125098376374401853193, 0.2816035507792589132304605,
    0.4580167776572273863424194, 0.6178762444026437484466718,
    0.7554044083550030338951012, 0.8656312023878317438804679,
    0.9445750230732325760779884, 0.9894009349916499325961542};
constexpr double kGl16W[kGl16] = {
    0.1894506104550684962853967, 0.1826034150449235888667637,
    0.1691565193950025381893121, 0.1495959888165767320815017,
    0.1246289712555338720524763, 0.0951585116824927848099251,
    0.0622535239386478928628438, 0.0271524594117540948517806};
constexpr int kGl8 = 4;
constexpr double kGl8X[kGl8] = {
    0.1834346424956498049394761, 0.5255324099163289858177390,
    0.7966664774136267395915539, 0.9602898564975362316835609};
constexpr double kGl8W[kGl8] = {
    0.3626837833783619829651504, 0.3137066458778872873379622,
    0.2223810344533744705443560, 0.1012285362903762591525314};

constexpr double kTailSwitch = 10.0;    // |x-loc|/scale where series takes over
constexpr double kCrossTol = 1e-8;      // series vs quadrature agreement at handover
constexpr double kQuadTol = 1e-11;

// For alpha < 1 the tail series converges for every u > 0, and the quadrature
// cutoff 45^{1/alpha} makes the oscillatory integral explode, so the series
// takes over much earlier there. The cross-check window sits just above the
// switch in both regimes.
double series_switch(double alpha) { return alpha < 1.0 ? 2.0 : kTailSwitch; }

// exp(-K^alpha) = e^-45 ~ 3e-20: integration beyond K is negligible.
double cutoff_k(double alpha) { return std::pow(45.0, 1.0 / alpha); }

// exp(-k^alpha) has unbounded low-order derivatives at k = 0 for fractional
// alpha, which stalls any polynomial rule. Substituting k = s^q with
// q*alpha >= 3 makes the integrand smooth enough for Gauss panels.
int smoothing_power(double alpha) {
    return std::max(2, static_cast<int>(std::ceil(3.0 / alpha)));
}

double int_pow(double s, int q) {
    double r = 1.0;
    for (int i = 0; i < q; ++i) r *= s;
    return r;
}

// Panel edges on the s axis: width capped to resolve the exponential factor,
// and per-panel cosine phase u*(s_hi^q - s_lo^q) capped at max_phase.
std::vector<double> panel_edges(double S, int q, double u, double max_phase, double cap_frac) {
    std::vector<double> edges{0.0};
    double s = 0.0;
    const double cap = S * cap_frac;
    while (s < S) {
        double next = s + cap;
        if (u > 0.0) {
            double by_phase = std::pow(int_pow(s, q) + max_phase / u, 1.0 / q);
            next = std::min(next, by_phase);
        }
        s = std::min(next, S);
        edges.push_back(s);
    }
    return edges;
}

// (1/pi) * integral_0^K cos(u k) exp(-k^alpha) dk after the k = s^q
// substitution; err_out gets the embedded |GL16-GL8| estimate.
double cosine_integral(double alpha, double u, double max_phase, double cap_frac,
                       double* err_out) {
    const int q = smoothing_power(alpha);
    const double S = std::pow(cutoff_k(alpha), 1.0 / q);
    const double qa = q * alpha;
    auto f = [&](double s) {
        return std::cos(u * int_pow(s, q)) * std::exp(-std::pow(s, qa)) * q * int_pow(s, q - 1);
    };
    auto edges = panel_edges(S, q, u, max_phase, cap_frac);
    double s16 = 0.0, s8 = 0.0;
    for (std::size_t p = 0; p + 1 < edges.size(); ++p) {
        const double mid = 0.5 * (edges[p] + edges[p + 1]);
        const double half = 0.5 * (edges[p + 1] - edges[p]);
        double a16 = 0.0, a8 = 0.0;
        for (int j = 0; j < kGl16; ++j) {
            const double d = half * kGl16X[j];
            a16 += kGl16W[j] * (f(mid - d) + f(mid + d));
        }
        for (int j = 0; j < kGl8; ++j) {
            const double d = half * kGl8X[j];
            a8 += kGl8W[j] * (f(mid - d) + f(mid + d));
        }
        s16 += half * a16;
        s8 += half * a8;
    }
    if (err_out) *err_out = std::abs(s16 - s8);
    return s16 / M_PI;
}

// Unit-scale symmetric density at reduced coordinate u >= 0, by quadrature
// with panel refinement until the embedded error estimate is small.
double symmetric_core_quad(double alpha, double u) {
    double max_phase = 0.5 * M_PI;
    double cap_frac = 0.125;
    double err = 0.0;
    double val = cosine_integral(alpha, u, max_phase, cap_frac, &err);
    for (int r = 0; r < 4 && err > kQuadTol; ++r) {
        max_phase *= 0.5;
        cap_frac *= 0.5;
        val = cosine_integral(alpha, u, max_phase, cap_frac, &err);
    }
    if (err > 100.0 * kQuadTol)
        throw numeric_error("stable pdf quadrature did not converge", err);
    return val;
}

// Tail series (1/pi) sum (-1)^{n+1} Gamma(n a + 1)/n! sin(n pi a / 2) u^{-n a - 1}.
// Convergent for alpha < 1 (magnitudes decay monotonically at the u where it
// is used), asymptotic otherwise; truncated at the smallest term.
double symmetric_core_series(double alpha, double u) {
    double sum = 0.0;
    double prev = std::numeric_limits<double>::infinity();
    double log_u = std::log(u);
    double log_nfact = 0.0;
    const int max_terms = alpha < 1.0 ? 200 : 18;
    for (int n = 1; n <= max_terms; ++n) {
        log_nfact += std::log(static_cast<double>(n));
        double na = n * alpha;
        if (na + 1.0 > 170.0) break;
        double mag = std::exp(std::lgamma(na + 1.0) - log_nfact - (na + 1.0) * log_u);
        double term = ((n % 2) ? 1.0 : -1.0) * mag * std::sin(0.5 * M_PI * na);
        if (mag > prev) break; // asymptotic series started diverging
        sum += term;
        prev = mag;
        if (mag < 1e-17 * std::max(std::abs(sum), 1e-300)) break;
    }
    return sum / M_PI;
}

double symmetric_core(double alpha, double u) {
    u = std::abs(u);
    const double sw = series_switch(alpha);
    if (u < sw) return symmetric_core_quad(alpha, u);
    double s = symmetric_core_series(alpha, u);
    if (u <= sw + 0.5) {
        double q = symmetric_core_quad(alpha, u);
        double diff = std::abs(q - s);
        if (diff > kCrossTol)
            throw numeric_error("stable pdf series/quadrature mismatch at handover", diff);
    }
    return s;
}

// a(phi) of the Kanter sampler and the Zolotarev integral: for 0 < alpha < 1,
// a(phi) = sin(alpha phi)^{alpha/(1-alpha)} sin((1-alpha) phi) / sin(phi)^{1/(1-alpha)}.
double zolotarev_a(double alpha, double phi) {
    double r = alpha / (1.0 - alpha);
    return std::exp(r * std::log(std::sin(alpha * phi)) +
                    std::log(std::sin((1.0 - alpha) * phi)) -
                    (1.0 + r) * std::log(std::sin(phi)));
}

double zolotarev_integrand(double alpha, double c, double phi) {
    if (phi <= 0.0) {
        double a0 = std::pow(alpha, alpha / (1.0 - alpha)) * (1.0 - alpha);
        return a0 * std::exp(-a0 * c);
    }
    if (phi >= M_PI) return 0.0;
    double a = zolotarev_a(alpha, phi);
    double e = a * c;
    if (e > 745.0) return 0.0;
    return a * std::exp(-e);
}

double adaptive_simpson(double alpha, double c, double a, double b, double fa, double fm,
                        double fb, double whole, double tol, int depth) {
    double m = 0.5 * (a + b);
    double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    double flm = zolotarev_integrand(alpha, c, lm);
    double frm = zolotarev_integrand(alpha, c, rm);
    double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    double delta = left + right - whole;
    if (depth <= 0 || std::abs(delta) < 15.0 * tol) return left + right + delta / 15.0;
    return adaptive_simpson(alpha, c, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
           adaptive_simpson(alpha, c, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

// One-sided unit-scale density at x > 0 via the Zolotarev integral
// f(x) = alpha/(1-alpha) x^{-1/(1-alpha)} (1/pi) int_0^pi a(phi) exp(-a(phi) x^{-alpha/(1-alpha)}) dphi.
double one_sided_core_integral(double alpha, double x) {
    double c = std::pow(x, -alpha / (1.0 - alpha));
    double fa = zolotarev_integrand(alpha, c, 0.0);
    double fb = 0.0;
    double fm = zolotarev_integrand(alpha, c, 0.5 * M_PI);
    double whole = M_PI / 6.0 * (fa + 4.0 * fm + fb);
    double integral =
        adaptive_simpson(alpha, c, 0.0, M_PI, fa, fm, fb, whole, 1e-12, 48);
    return alpha / (1.0 - alpha) * std::pow(x, -1.0 / (1.0 - alpha)) * integral / M_PI;
}

// Convergent series for the one-sided density, good for x >= 1.5:
// (1/pi) sum (-1)^{n+1} Gamma(n a + 1)/n! sin(pi n a) x^{-n a - 1}.
double one_sided_core_series(double alpha, double x) {
    double sum = 0.0;
    double log_x = std::log(x);
    double log_nfact = 0.0;
    for (int n = 1; n <= 200; ++n) {
        log_nfact += std::log(static_cast<double>(n));
        double na = n * alpha;
        if (na + 1.0 > 170.0) break;
        double mag = std::exp(std::lgamma(na + 1.0) - log_nfact - (na + 1.0) * log_x);
        sum += ((n % 2) ? 1.0 : -1.0) * mag * std::sin(M_PI * na);
        if (mag < 1e-17 * std::max(std::abs(sum), 1e-300)) break;
    }
    return sum / M_PI;
}

double one_sided_core(double alpha, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.5) return one_sided_core_series(alpha, x);
    return one_sided_core_integral(alpha, x);
}

} // namespace

double stable_pdf(const StableParams& p, double x) {
    p.validate();
    if (!std::isfinite(x)) throw param_error("stable_pdf needs finite x");
    double u = (x - p.location) / p.scale;
    if (p.sided == Sidedness::symmetric)
        return symmetric_core(p.alpha, u) / p.scale;
    return one_sided_core(p.alpha, u) / p.scale;
}

std::vector<double> stable_pdf_batch(const StableParams& p, const std::vector<double>& xs) {
    p.validate();
    if (p.sided != Sidedness::symmetric) {
        std::vector<double> out(xs.size());
        for (std::size_t i = 0; i < xs.size(); ++i) out[i] = stable_pdf(p, xs[i]);
        return out;
    }
    // Shared quadrature table: panels sized for the largest quadrature-path
    // |u| so the damped-weight table is computed once for the whole batch.
    const double sw = series_switch(p.alpha);
    double u_max = std::min(1.0, 0.5 * sw);
    for (double x : xs) {
        double u = std::abs(x - p.location) / p.scale;
        if (u < sw && u > u_max) u_max = u;
    }
    const int q = smoothing_power(p.alpha);
    const double S = std::pow(cutoff_k(p.alpha), 1.0 / q);
    const double qa = q * p.alpha;
    auto edges = panel_edges(S, q, u_max, 0.5 * M_PI, 0.125);
    std::vector<double> node_k, damp;
    node_k.reserve((edges.size() - 1) * 2 * kGl16);
    damp.reserve(node_k.capacity());
    for (std::size_t pn = 0; pn + 1 < edges.size(); ++pn) {
        const double mid = 0.5 * (edges[pn] + edges[pn + 1]);
        const double half = 0.5 * (edges[pn + 1] - edges[pn]);
        for (int j = 0; j < kGl16; ++j) {
            for (double s : {mid - half * kGl16X[j], mid + half * kGl16X[j]}) {
                node_k.push_back(int_pow(s, q));
                damp.push_back(half * kGl16W[j] * std::exp(-std::pow(s, qa)) * q *
                               int_pow(s, q - 1));
            }
        }
    }

    std::vector<double> out(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
        double u = std::abs(xs[i] - p.location) / p.scale;
        if (u >= sw) {
            out[i] = symmetric_core(p.alpha, u) / p.scale;
            continue;
        }
        double s = 0.0;
        for (std::size_t j = 0; j < node_k.size(); ++j) s += damp[j] * std::cos(u * node_k[j]);
        out[i] = s / (M_PI * p.scale);
    }
    return out;
}

double symmetric_tail_mass(double alpha, double u) {
    if (u < kTailSwitch) throw param_error("symmetric_tail_mass valid for u >= 10 only");
    // integral of the tail series term by term: u^{-na-1} integrates to u^{-na}/(na)
    double sum = 0.0;
    double prev = std::numeric_limits<double>::infinity();
    double log_u = std::log(u);
    double log_nfact = 0.0;
    for (int n = 1; n <= 18; ++n) {
        log_nfact += std::log(static_cast<double>(n));
        double na = n * alpha;
        if (na + 1.0 > 170.0) break;
        double mag = std::exp(std::lgamma(na + 1.0) - log_nfact - na * log_u) / na;
        if (mag > prev) break;
        sum += ((n % 2) ? 1.0 : -1.0) * mag * std::sin(0.5 * M_PI * na);
        prev = mag;
        if (mag < 1e-17 * std::max(std::abs(sum), 1e-300)) break;
    }
    return sum / M_PI;
}

double draw_symmetric_stable(Rng& rng, double alpha) {
    double U = rng.uniform(-0.5 * M_PI, 0.5 * M_PI);
    if (alpha == 1.0) return std::tan(U);
    double E = rng.exponential();
    double t = std::sin(alpha * U) / std::pow(std::cos(U), 1.0 / alpha);
    double s = std::pow(std::cos((1.0 - alpha) * U) / E, (1.0 - alpha) / alpha);
    return t * s;
}

double draw_one_sided_stable(Rng& rng, double alpha) {
    double U = rng.uniform(0.0, M_PI);
    double E = rng.exponential();
    double r = (1.0 - alpha) / alpha;
    return std::exp(r * (std::log(zolotarev_a(alpha, U)) - std::log(E)));
}

SampleBatch stable_sample(const StableParams& p, std::uint64_t seed, std::size_t count) {
    p.validate();
    if (count < 1) throw param_error("stable_sample needs count >= 1");
    SampleBatch batch;
    batch.seed = seed;
    batch.count = count;
    batch.values.resize(count);
    Rng rng(seed);
    if (p.sided == Sidedness::symmetric) {
        for (std::size_t i = 0; i < count; ++i)
            batch.values[i] = p.location + p.scale * draw_symmetric_stable(rng, p.alpha);
    } else {
        for (std::size_t i = 0; i < count; ++i)
            batch.values[i] = p.location + p.scale * draw_one_sided_stable(rng, p.alpha);
    }
    return batch;
}

double stable_fwhm(const StableParams& p) {
    p.validate();
    if (p.sided != Sidedness::symmetric)
        throw param_error("stable_fwhm defined for the symmetric family");
    const double half = 0.5 * symmetric_core(p.alpha, 0.0);
    double lo = 0.0, hi = 4.0;
    while (symmetric_core(p.alpha, hi) > half) {
        lo = hi;
        hi *= 2.0;
        if (hi > 1e6) throw numeric_error("stable_fwhm bracket expansion failed", hi);
    }
    while (hi - lo > 1e-6) {
        double mid = 0.5 * (lo + hi);
        if (symmetric_core(p.alpha, mid) > half)
            lo = mid;
        else
            hi = mid;
    }
    return 2.0 * p.scale * 0.5 * (lo + hi);
}

namespace {

// Hill point estimate over the top k exceedances of |x - median|.
double hill_point(std::vector<double>& work, std::size_t k) {
    // median
    std::size_t n = work.size();
    std::nth_element(work.begin(), work.begin() + n / 2, work.end());
    double med = work[n / 2];
    if (n % 2 == 0) {
        auto lower = std::max_element(work.begin(), work.begin() + n / 2);
        med = 0.5 * (med + *lower);
    }
    for (double& v : work) v = std::abs(v - med);
    // top k+1 order statistics, descending
    std::nth_element(work.begin(), work.begin() + k, work.end(), std::greater<double>());
    std::sort(work.begin(), work.begin() + k + 1, std::greater<double>());
    double pivot = work[k];
    if (pivot <= 0.0) throw input_error("tail pivot is non-positive");
    double s = 0.0;
    for (std::size_t i = 0; i < k; ++i) s += std::log(work[i] / pivot);
    return static_cast<double>(k) / s;
}

} // namespace

ExponentFit tail_exponent(const SampleBatch& samples, double tail_fraction) {
    const std::size_t n = samples.values.size();
    if (n < 1000) throw input_error("tail_exponent needs >= 1000 samples");
    if (!(tail_fraction > 0.0 && tail_fraction <= 0.2))
        throw param_error("tail_fraction must be in (0, 0.2]");
    const auto k = static_cast<std::size_t>(tail_fraction * static_cast<double>(n));
    if (k < 10) throw input_error("tail_exponent: too few tail points");

    std::vector<double> work = samples.values;
    double point = hill_point(work, k);

    const int n_boot = 200;
    std::vector<double> boot(n_boot);
    for (int b = 0; b < n_boot; ++b) {
        Rng rng(derive_seed(samples.seed, "hill_bootstrap", static_cast<std::uint64_t>(b)));
        work.resize(n);
        for (std::size_t i = 0; i < n; ++i)
            work[i] = samples.values[rng.bits() % n];
        boot[b] = hill_point(work, k);
    }
    std::sort(boot.begin(), boot.end());
    double lo = sorted_quantile(boot, 0.025);
    double hi = sorted_quantile(boot, 0.975);

    ExponentFit fit;
    fit.exponent = point;
    fit.ci95 = 0.5 * (hi - lo);
    fit.r_squared = 0.0;
    fit.method = ExponentMethod::tail;
    return fit;
}

namespace detail {

double symmetric_pdf_quad(double alpha, double u) {
    return symmetric_core_quad(alpha, std::abs(u));
}

double symmetric_pdf_series(double alpha, double u) {
    return symmetric_core_series(alpha, std::abs(u));
}

double one_sided_pdf_series(double alpha, double x) { return one_sided_core_series(alpha, x); }

double one_sided_pdf_integral(double alpha, double x) {
    return one_sided_core_integral(alpha, x);
}

} // namespace detail

} // namespace latdiff
