#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "latdiff/rng.hpp"
#include "latdiff/snapshot.hpp"

namespace latdiff {

enum class Sidedness { symmetric, one_sided };

// Symmetric family: characteristic function exp(ik*location - |scale*k|^alpha),
// 0 < alpha <= 2. One-sided family: positive subordinator of index alpha in
// (0,1), normalized so the Laplace transform at scale 1 is exp(-s^alpha).
struct StableParams {
    double alpha = 2.0;
    double scale = 1.0;
    double location = 0.0;
    Sidedness sided = Sidedness::symmetric;

    void validate() const;
};

struct SampleBatch {
    std::vector<double> values;
    std::uint64_t seed = 0;
    std::size_t count = 0;
};

enum class ExponentMethod { fwhm_power_law, self_similarity, levy_shape, tail };

struct ExponentFit {
    double exponent = 0.0;
    double ci95 = 0.0; // 95% confidence half-width
    double r_squared = 0.0;
    ExponentMethod method = ExponentMethod::fwhm_power_law;
};

const char* exponent_method_name(ExponentMethod m);

// Density at x. Symmetric case: quadrature of the cosine transform for
// |x-location|/scale <= 10, tail series beyond, cross-checked against each
// other in the handover window. One-sided case: convergent power series for
// large argument, Zolotarev integral for small.
double stable_pdf(const StableParams& p, double x);

// Shared-node evaluation for fitting: the exp(-k^alpha) quadrature table is
// built once and reused for every abscissa.
std::vector<double> stable_pdf_batch(const StableParams& p, const std::vector<double>& xs);

// Upper tail mass P((X-location)/scale > u) of the symmetric law, u >= 10,
// from the term-by-term integrated tail series.
double symmetric_tail_mass(double alpha, double u);

// Unit-scale draws on a caller-owned stream (Chambers-Mallows-Stuck and the
// Kanter one-sided specialization).
double draw_symmetric_stable(Rng& rng, double alpha);
double draw_one_sided_stable(Rng& rng, double alpha);

SampleBatch stable_sample(const StableParams& p, std::uint64_t seed, std::size_t count);

// FWHM of the symmetric law by bisection on the density; tolerance 1e-6*scale.
double stable_fwhm(const StableParams& p);

struct FitOptions {
    // Points with |x - center| < exclusion_halfwidth are dropped from the
    // residuals (central-window exclusion); the window is anchored at the
    // initial location estimate, not re-evaluated per iteration.
    double exclusion_halfwidth = 0.0;
    // Fit window for the stability index. The floor keeps the optimizer out of
    // the small-alpha regime where the density evaluation becomes expensive;
    // physical shape fits in this project live well inside [1, 2].
    double alpha_min = 0.6;
    double alpha_max = 2.0;
    int max_iterations = 120;
};

struct StableFitResult {
    StableParams params;     // fitted symmetric law
    double amplitude = 1.0;  // multiplicative amplitude of the fitted curve
    double r_squared = 0.0;
    int iterations = 0;
    // 1-sigma uncertainties and covariance in (alpha, scale, location,
    // amplitude) order, mapped back from the internal fit coordinates.
    double alpha_err = 0.0;
    double scale_err = 0.0;
    double location_err = 0.0;
    double amplitude_err = 0.0;
    std::array<double, 16> covariance{}; // row-major 4x4
};

// Least-squares fit of amplitude * symmetric stable density to a curve.
// Throws input_error for degenerate curves, fit_error (best iterate attached)
// when the optimizer fails to converge.
StableFitResult stable_fit(const DensitySnapshot& curve, const FitOptions& opt = {});

// Hill estimator over order statistics of |x - median|, with a 200-resample
// bootstrap percentile confidence interval seeded from the batch seed.
ExponentFit tail_exponent(const SampleBatch& samples, double tail_fraction = 0.05);

// The two evaluation routes behind each density, exposed so they can be
// compared against each other at the same argument. Unit scale, zero location.
namespace detail {
double symmetric_pdf_quad(double alpha, double u);
double symmetric_pdf_series(double alpha, double u);
double one_sided_pdf_series(double alpha, double x);
double one_sided_pdf_integral(double alpha, double x);
} // namespace detail

} // namespace latdiff
