#pragma once

#include <utility>
#include <vector>

#include "latdiff/snapshot.hpp"
#include "latdiff/stable.hpp"

namespace latdiff {

struct FwhmResult {
    double fwhm = 0.0;     // same units as the snapshot grid
    double sigma = 0.0;    // 1-sigma uncertainty
    bool from_fit = true;  // false: direct half-maximum crossing fallback
    StableFitResult fit;   // populated when from_fit
};

// Width of a density curve from a symmetric-stable shape fit (free amplitude),
// FWHM by bisection on the fitted law, uncertainty propagated from the fit
// covariance. Falls back to direct half-maximum crossings when the fit fails.
FwhmResult extract_fwhm(const DensitySnapshot& curve, double exclusion_halfwidth = 0.0);

// Width between the linearly interpolated half-maximum crossings on either
// side of the empirical peak, with no model assumption. Preferred for lattice
// densities, whose wings leave the stable family and drag a global fit's
// width systematically; uncertainty is one grid spacing.
FwhmResult crossing_fwhm(const DensitySnapshot& curve);

// Log-log least squares of width versus time; exponent is the inverse slope.
// ci95 follows from the slope's t-based 95% interval through the delta method.
ExponentFit fit_dynamical_exponent(const std::vector<std::pair<double, double>>& time_width);

// One snapshot rescaled by t^{1/alpha} onto its own full rescaled support:
// x -> x / t^{1/alpha}, density -> t^{1/alpha} * density.
DensitySnapshot rescale_snapshot(const DensitySnapshot& snap, double alpha,
                                 int grid_points = 512);

// L1 spread of the t^{1/alpha}-rescaled snapshots about their pointwise mean,
// normalized by the mean's integral, on the common support intersection.
double self_similarity_measure(const std::vector<DensitySnapshot>& snapshots, double alpha);

struct CollapseResult {
    std::vector<double> alpha_grid;
    std::vector<double> m_values;
    double alpha_star = 0.0;
    double m_star = 0.0;
    bool boundary_warning = false;             // minimum pinned at a range edge
    std::vector<DensitySnapshot> collapsed_curves; // rescaled at alpha_star, common grid
};

// Grid scan of the self-similarity measure plus golden-section refinement of
// the bracketed minimum; the refined point is inserted into the returned grid.
CollapseResult find_alpha_star(const std::vector<DensitySnapshot>& snapshots,
                               double alpha_lo = 0.8, double alpha_hi = 3.0,
                               int grid_points = 45);

struct ShapePoint {
    double time_ms = 0.0;
    ExponentFit fit;
    bool fit_ok = false;
};

struct ShapeSeries {
    std::vector<ShapePoint> points;
    double asymptote = 0.0; // mean exponent over the final third of usable fits
};

// Per-snapshot stable shape fits over a time series of snapshots.
ShapeSeries fit_shape_exponent(const std::vector<DensitySnapshot>& snapshots,
                               double exclusion_halfwidth = 0.0);

} // namespace latdiff
