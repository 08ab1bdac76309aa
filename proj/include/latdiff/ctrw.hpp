#pragma once

#include <cstdint>
#include <vector>

#include "latdiff/snapshot.hpp"

namespace latdiff {

enum class CorrelationMode { none, coupled };

// Random walk alternating heavy-tailed trapping periods with constant-velocity
// flights. Velocities are symmetric stable(mu); dwell times are one-sided
// stable(beta_dwell) below 1 and exponential at 1; flight durations are either
// exponential (uncorrelated) or |V|^chi times Pareto noise (coupled), which
// ties long flights to fast atoms.
struct WalkConfig {
    double mu = 1.5;          // velocity stability exponent, (0, 2]
    double beta_dwell = 1.0;  // dwell heavy-tail index, (0, 1]
    double v_scale = 1.0;     // µm/ms
    double flight_scale = 1.0; // ms
    double dwell_scale = 1.0;  // ms
    CorrelationMode correlation = CorrelationMode::none;
    double chi = 1.0;         // speed/flight-duration coupling exponent
    double noise_index = 1.5; // Pareto index of the multiplicative flight noise
    bool pareto_dwell = false; // sensitivity option: Pareto(beta_dwell) dwell law
    double initial_width = 200.0; // Gaussian initial cloud sigma, µm; 0 = point source
    long n_atoms = 100000;
    std::vector<double> snapshot_times; // ms, strictly increasing, positive
    int bins = 512;
    double coverage = 0.999; // central quantile range spanned by the histogram

    void validate() const;
};

// One density snapshot per requested time. Atom streams are derived from
// (seed, atom index), so the result is bit-identical for any worker count.
// workers <= 0 uses the OpenMP default.
std::vector<DensitySnapshot> simulate_walk(const WalkConfig& config, std::uint64_t seed,
                                           int workers = 0);

// Plain sequential loop over atoms, no OpenMP. Kept as the reference the
// parallel kernel is compared against.
std::vector<DensitySnapshot> simulate_walk_serial(const WalkConfig& config, std::uint64_t seed);

// Control arm: identical dynamics with the correlation forced off.
std::vector<DensitySnapshot> decoupled_reference(const WalkConfig& config, std::uint64_t seed,
                                                 int workers = 0);

} // namespace latdiff
