#include "latdiff/ctrw.hpp"

#include <omp.h>

#include <cmath>
#include <cstddef>
#include <sstream>
#include <string>

#include "latdiff/errors.hpp"
#include "latdiff/rng.hpp"
#include "latdiff/stable.hpp"

namespace latdiff {

namespace {

// Cap on the (snapshot x atom) position matrix: 4 GB of doubles.
constexpr std::size_t kMaxMatrixDoubles = 500u * 1000u * 1000u;

// One atom's walk. Positions at each snapshot time are written to
// out[s * stride] in snapshot order; the stream is consumed in a fixed
// per-segment order so the walk depends only on the derived seed.
void walk_one(const WalkConfig& c, Rng& rng, double* out, std::size_t stride) {
    const auto& times = c.snapshot_times;
    const std::size_t nsnap = times.size();

    double pos = c.initial_width > 0.0 ? c.initial_width * rng.normal() : 0.0;
    double t = 0.0;
    std::size_t next = 0;

    while (next < nsnap) {
        // trapped interval: the atom sits still
        double tau_d;
        if (c.beta_dwell >= 1.0)
            tau_d = c.dwell_scale * rng.exponential();
        else if (c.pareto_dwell)
            tau_d = c.dwell_scale * rng.pareto(c.beta_dwell);
        else
            tau_d = c.dwell_scale * draw_one_sided_stable(rng, c.beta_dwell);
        double t_end = t + tau_d;
        while (next < nsnap && times[next] <= t_end) {
            out[next * stride] = pos;
            ++next;
        }
        t = t_end;
        if (next >= nsnap) break;

        // flight at constant velocity
        double v_unit = draw_symmetric_stable(rng, c.mu);
        double v = c.v_scale * v_unit;
        double tau_f;
        if (c.correlation == CorrelationMode::coupled)
            tau_f = c.flight_scale * std::pow(std::abs(v_unit), c.chi) * rng.pareto(c.noise_index);
        else
            tau_f = c.flight_scale * rng.exponential();
        t_end = t + tau_f;
        while (next < nsnap && times[next] <= t_end) {
            out[next * stride] = pos + v * (times[next] - t);
            ++next;
        }
        pos += v * tau_f;
        t = t_end;
    }
}

std::vector<DensitySnapshot> assemble(const WalkConfig& c, std::uint64_t seed,
                                      const std::vector<double>& matrix) {
    const std::size_t n = static_cast<std::size_t>(c.n_atoms);
    const std::size_t nsnap = c.snapshot_times.size();
    std::vector<DensitySnapshot> out;
    out.reserve(nsnap);
    for (std::size_t s = 0; s < nsnap; ++s) {
        std::vector<double> positions(matrix.begin() + static_cast<std::ptrdiff_t>(s * n),
                                      matrix.begin() + static_cast<std::ptrdiff_t>((s + 1) * n));
        DensitySnapshot snap = histogram_snapshot(std::move(positions), c.snapshot_times[s],
                                                  c.bins, c.coverage);
        snap.meta["seed"] = std::to_string(seed);
        snap.meta["n_atoms"] = std::to_string(c.n_atoms);
        snap.meta["simulator"] = "ctrw";
        snap.meta["correlation"] =
            c.correlation == CorrelationMode::coupled ? "coupled" : "none";
        out.push_back(std::move(snap));
    }
    return out;
}

std::vector<double> position_matrix(const WalkConfig& c) {
    const std::size_t need =
        static_cast<std::size_t>(c.n_atoms) * c.snapshot_times.size();
    if (need > kMaxMatrixDoubles) {
        std::ostringstream os;
        os << "walk would need " << need << " recorded positions (cap "
           << kMaxMatrixDoubles << "); reduce atoms or snapshot count";
        throw resource_error(os.str());
    }
    return std::vector<double>(need);
}

} // namespace

void WalkConfig::validate() const {
    if (!(mu > 0.0) || !(mu <= 2.0)) throw param_error("walk: mu must be in (0, 2]");
    if (!(beta_dwell > 0.0) || !(beta_dwell <= 1.0))
        throw param_error("walk: beta_dwell must be in (0, 1]");
    if (!(v_scale > 0.0) || !std::isfinite(v_scale) || !(flight_scale > 0.0) ||
        !std::isfinite(flight_scale) || !(dwell_scale > 0.0) || !std::isfinite(dwell_scale))
        throw param_error("walk: scales must be positive and finite");
    if (!(chi > 0.0) || !std::isfinite(chi)) throw param_error("walk: chi must be positive");
    if (!(noise_index > 0.0) || !std::isfinite(noise_index))
        throw param_error("walk: noise_index must be positive");
    if (!(initial_width >= 0.0) || !std::isfinite(initial_width))
        throw param_error("walk: initial_width must be non-negative");
    if (n_atoms < 1) throw param_error("walk: n_atoms must be >= 1");
    if (snapshot_times.empty()) throw param_error("walk: needs at least one snapshot time");
    for (std::size_t i = 0; i < snapshot_times.size(); ++i) {
        if (!(snapshot_times[i] > 0.0) || !std::isfinite(snapshot_times[i]))
            throw param_error("walk: snapshot times must be positive and finite");
        if (i > 0 && !(snapshot_times[i] > snapshot_times[i - 1]))
            throw param_error("walk: snapshot times must be strictly increasing");
    }
    if (bins < 64) throw param_error("walk: needs >= 64 histogram bins");
    if (!(coverage > 0.9) || !(coverage < 1.0))
        throw param_error("walk: coverage must be in (0.9, 1)");
}

std::vector<DensitySnapshot> simulate_walk(const WalkConfig& config, std::uint64_t seed,
                                           int workers) {
    config.validate();
    std::vector<double> matrix = position_matrix(config);
    const long n = config.n_atoms;
    const std::size_t stride = static_cast<std::size_t>(n);
    const int nw = workers > 0 ? workers : omp_get_max_threads();

#pragma omp parallel for schedule(static) num_threads(nw)
    for (long a = 0; a < n; ++a) {
        Rng rng(derive_seed(seed, "ctrw", static_cast<std::uint64_t>(a)));
        walk_one(config, rng, matrix.data() + a, stride);
    }
    return assemble(config, seed, matrix);
}

std::vector<DensitySnapshot> simulate_walk_serial(const WalkConfig& config, std::uint64_t seed) {
    config.validate();
    std::vector<double> matrix = position_matrix(config);
    const long n = config.n_atoms;
    const std::size_t stride = static_cast<std::size_t>(n);
    for (long a = 0; a < n; ++a) {
        Rng rng(derive_seed(seed, "ctrw", static_cast<std::uint64_t>(a)));
        walk_one(config, rng, matrix.data() + a, stride);
    }
    return assemble(config, seed, matrix);
}

std::vector<DensitySnapshot> decoupled_reference(const WalkConfig& config, std::uint64_t seed,
                                                 int workers) {
    WalkConfig c = config;
    c.correlation = CorrelationMode::none;
    return simulate_walk(c, seed, workers);
}

} // namespace latdiff
