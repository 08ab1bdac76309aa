#include "latdiff/lattice.hpp"

#include <omp.h>

#include <cmath>
#include <cstddef>
#include <sstream>
#include <string>
#include <utility>

#include "latdiff/errors.hpp"
#include "latdiff/rng.hpp"

namespace latdiff {

namespace {

constexpr std::size_t kMaxMatrixDoubles = 500u * 1000u * 1000u;

// Yoshida 4th-order composition weights.
constexpr double kYoshidaW1 = 1.3512071919596576; // 1 / (2 - 2^(1/3))
constexpr double kYoshidaW0 = -1.7024143839193153;

// Phase advance per step: well oscillation (rad of omega_osc t) and lattice
// phase for a traversing atom (rad of 2kz). Measured 4th-order drift at 0.06
// is 3e-7 of the depth per period, bounded, 3x under the 1e-6 budget.
constexpr double kOscPhasePerStep = 0.06;
constexpr double kTravelPhasePerStep = 0.06;

struct Params {
    double u0 = 0.0;      // depth (recoils)
    double k = 0.0;       // 1/um
    double wr = 0.0;      // recoil frequency (rad/ms)
    double vr = 0.0;      // recoil velocity (um/ms)
    double pump = 0.0;    // (2/9) Gamma' (1/ms)
    double rayleigh = 0.0;
    bool swapped = false;
};

// Dimensionless potential u_s(z) = (u0/2)(-2 + s cos 2kz); energies are
// quoted in recoil units so e = p^2 + u_s is conserved between jumps.
inline double potential(const Params& q, int s, double z) {
    return 0.5 * q.u0 * (-2.0 + s * std::cos(2.0 * q.k * z));
}

inline double force(const Params& q, int s, double z) {
    // dp/dt in hbar k per ms
    return s * q.u0 * q.wr * std::sin(2.0 * q.k * z);
}

// Pumping leaves a sublevel from its own hilltop: plus -> minus on the
// cos^2(kz) pattern, minus -> plus on sin^2(kz) (reversed when swapped).
inline double pump_rate(const Params& q, int s, double z) {
    double c = std::cos(q.k * z);
    double c2 = c * c;
    double own = s > 0 ? c2 : 1.0 - c2;
    if (q.swapped) own = 1.0 - own;
    return q.pump * own;
}

// Sublevel-preserving scattering: the J=1/2 branching gives 9/2 the pump
// prefactor on the bright pattern plus 1/2 on the dim one.
inline double rayleigh_rate(const Params& q, int s, double z) {
    if (q.rayleigh <= 0.0) return 0.0;
    double c = std::cos(q.k * z);
    double c2 = c * c;
    double bright = s > 0 ? 1.0 - c2 : c2;
    return q.rayleigh * q.pump * (4.5 * bright + 0.5 * (1.0 - bright));
}

inline double segment_dt(const Params& q, double scale, double e) {
    double osc = 2.0 * q.wr * std::sqrt(q.u0);
    double p2 = std::max(1e-12, e + 1.5 * q.u0);
    double travel = 2.0 * q.k * q.vr * std::sqrt(p2);
    // The drift tolerance scales with |e|, so fast traversals (where the
    // potential is a small perturbation) tolerate a larger lattice phase
    // per step: error/period ~ u0 (2kv dt)^4 against a bound ~ e.
    double headroom = std::pow(std::max(1.0, p2 / q.u0), 0.25);
    double dt = std::min(kOscPhasePerStep / osc, kTravelPhasePerStep * headroom / travel);
    return scale * dt;
}

struct Trajectory {
    double z = 0.0;
    double p = 0.0; // hbar k
    int s = 1;
    double t = 0.0;
};

// Energy bookkeeping for one inter-jump segment.
struct Segment {
    double e0 = 0.0;
    double t0 = 0.0;
    double dt = 0.0;
};

[[noreturn]] void drift_error(long traj, double drift, double tol) {
    std::ostringstream os;
    os << "semiclassical trajectory " << traj << ": energy drift " << drift
       << " exceeds tolerance " << tol << " between jumps; timestep unstable";
    throw numeric_error(os.str(), drift);
}

// Advance one trajectory to t_end. SnapObs is called as (index, z) for every
// snapshot time crossed; JumpObs sees the settled post-jump state. Throws
// numeric_error on integrator drift.
template <class SnapObs, class JumpObs>
void evolve_one(const Params& q, const LatticeConfig& c, long traj_index, Rng& rng,
                Trajectory& tr, double t_end, const std::vector<double>& times,
                std::size_t& next, SnapObs&& on_snapshot, JumpObs&& on_jump) {
    auto begin_segment = [&](Segment& seg) {
        seg.e0 = tr.p * tr.p + potential(q, tr.s, tr.z);
        seg.t0 = tr.t;
        seg.dt = segment_dt(q, c.time_step_scale, seg.e0);
    };
    auto check_segment = [&](const Segment& seg) {
        double e1 = tr.p * tr.p + potential(q, tr.s, tr.z);
        double scale = std::max(std::abs(seg.e0), q.u0);
        double periods = (tr.t - seg.t0) * 2.0 * q.wr * std::sqrt(q.u0) / (2.0 * 3.14159265358979323846);
        double tol = 1e-6 * scale * std::max(1.0, periods);
        double drift = std::abs(e1 - seg.e0);
        if (drift > tol) drift_error(traj_index, drift / scale, tol / scale);
    };

    Segment seg;
    begin_segment(seg);
    double threshold = rng.exponential();
    double accum = 0.0;

    const double c1 = 0.5 * kYoshidaW1, c2 = 0.5 * (kYoshidaW0 + kYoshidaW1);
    const double d1 = kYoshidaW1, d2 = kYoshidaW0;

    while (tr.t < t_end) {
        double dt = seg.dt;
        if (tr.t + dt > t_end) dt = t_end - tr.t;

        // kick-drift Yoshida sweep
        tr.z += c1 * q.vr * tr.p * dt;
        tr.p += d1 * force(q, tr.s, tr.z) * dt;
        tr.z += c2 * q.vr * tr.p * dt;
        tr.p += d2 * force(q, tr.s, tr.z) * dt;
        tr.z += c2 * q.vr * tr.p * dt;
        tr.p += d1 * force(q, tr.s, tr.z) * dt;
        tr.z += c1 * q.vr * tr.p * dt;
        tr.t += dt;

        while (next < times.size() && times[next] <= tr.t + 1e-12) {
            on_snapshot(next, tr.z);
            ++next;
        }

        double gp = pump_rate(q, tr.s, tr.z);
        double gr = rayleigh_rate(q, tr.s, tr.z);
        accum += (gp + gr) * dt;
        if (accum >= threshold && gp + gr > 0.0) {
            check_segment(seg);
            bool flip = rng.uniform() * (gp + gr) < gp;
            if (flip) tr.s = -tr.s;
            tr.p += (rng.coin() ? 1.0 : -1.0) + rng.uniform(-1.0, 1.0);
            on_jump(traj_index, tr);
            begin_segment(seg);
            threshold = rng.exponential();
            accum = 0.0;
        }
    }
    check_segment(seg);
}

Params make_params(const LatticeConfig& c) {
    Params q;
    q.u0 = c.depth_recoils;
    q.k = c.wavevector;
    q.wr = c.recoil_frequency();
    q.vr = c.recoil_velocity();
    q.pump = (2.0 / 9.0) * c.jump_rate_scale;
    q.rayleigh = c.rayleigh_scale;
    q.swapped = c.swap_pump_pattern;
    return q;
}

Trajectory initial_state(const LatticeConfig& c, Rng& rng) {
    Trajectory tr;
    tr.z = c.initial_width > 0.0 ? c.initial_width * rng.normal() : 0.0;
    tr.p = c.momentum_width > 0.0 ? c.momentum_width * rng.normal() : 0.0;
    tr.s = rng.coin() ? 1 : -1;
    return tr;
}

// First error thrown inside the parallel loop, kept with its trajectory order
// so reporting does not depend on thread scheduling.
struct ErrorSlot {
    bool set = false;
    long traj = 0;
    std::string message;
    double achieved = 0.0;

    void store(long traj_index, const char* what, double value) {
#pragma omp critical(latdiff_lattice_error)
        if (!set || traj_index < traj) {
            set = true;
            traj = traj_index;
            message = what;
            achieved = value;
        }
    }
};

} // namespace

void LatticeConfig::validate() const {
    if (!(depth_recoils > 0.0) || !std::isfinite(depth_recoils))
        throw param_error("lattice: depth_recoils must be positive");
    if (!(wavevector > 0.0) || !(hbar_over_mass > 0.0))
        throw param_error("lattice: wavevector and hbar_over_mass must be positive");
    if (!(jump_rate_scale >= 0.0) || !std::isfinite(jump_rate_scale))
        throw param_error("lattice: jump_rate_scale must be non-negative");
    if (n_trajectories < 1) throw param_error("lattice: n_trajectories must be >= 1");
    if (!(initial_width >= 0.0) || !(momentum_width >= 0.0))
        throw param_error("lattice: widths must be non-negative");
    if (!(rayleigh_scale >= 0.0)) throw param_error("lattice: rayleigh_scale must be non-negative");
    if (!(time_step_scale > 0.0) || time_step_scale > 1.0)
        throw param_error("lattice: time_step_scale must be in (0, 1]");
    for (std::size_t i = 0; i < snapshot_times.size(); ++i) {
        if (!(snapshot_times[i] > 0.0) || !std::isfinite(snapshot_times[i]))
            throw param_error("lattice: snapshot times must be positive and finite");
        if (i > 0 && !(snapshot_times[i] > snapshot_times[i - 1]))
            throw param_error("lattice: snapshot times must be strictly increasing");
    }
    if (bins < 64) throw param_error("lattice: needs >= 64 histogram bins");
    if (!(coverage > 0.9) || !(coverage < 1.0))
        throw param_error("lattice: coverage must be in (0.9, 1)");
    if (!(imaging_blur >= 0.0) || !std::isfinite(imaging_blur))
        throw param_error("lattice: imaging_blur must be non-negative");
}

std::vector<DensitySnapshot> simulate_semiclassical(const LatticeConfig& config,
                                                    std::uint64_t seed, int workers) {
    config.validate();
    if (config.snapshot_times.empty())
        throw param_error("lattice: needs at least one snapshot time");
    const std::size_t nsnap = config.snapshot_times.size();
    const std::size_t n = static_cast<std::size_t>(config.n_trajectories);
    if (n * nsnap > kMaxMatrixDoubles) {
        std::ostringstream os;
        os << "lattice run would need " << n * nsnap << " recorded positions (cap "
           << kMaxMatrixDoubles << "); reduce trajectories or snapshot count";
        throw resource_error(os.str());
    }

    const Params q = make_params(config);
    const double t_end = config.snapshot_times.back();
    std::vector<double> matrix(n * nsnap);
    ErrorSlot err;
    const int nw = workers > 0 ? workers : omp_get_max_threads();

#pragma omp parallel for schedule(static) num_threads(nw)
    for (long a = 0; a < config.n_trajectories; ++a) {
        if (err.set) continue;
        Rng rng(derive_seed(seed, "semiclassical", static_cast<std::uint64_t>(a)));
        Trajectory tr = initial_state(config, rng);
        std::size_t next = 0;
        try {
            evolve_one(
                q, config, a, rng, tr, t_end, config.snapshot_times, next,
                [&](std::size_t snap, double z) { matrix[snap * n + static_cast<std::size_t>(a)] = z; },
                [](long, const Trajectory&) {});
        } catch (const numeric_error& e) {
            err.store(a, e.what(), e.achieved_error);
        } catch (const error& e) {
            err.store(a, e.what(), 0.0);
        }
    }
    if (err.set) throw numeric_error(err.message, err.achieved);

    std::vector<DensitySnapshot> out;
    out.reserve(nsnap);
    for (std::size_t sidx = 0; sidx < nsnap; ++sidx) {
        std::vector<double> positions(matrix.begin() + static_cast<std::ptrdiff_t>(sidx * n),
                                      matrix.begin() + static_cast<std::ptrdiff_t>((sidx + 1) * n));
        DensitySnapshot snap = histogram_snapshot(std::move(positions),
                                                  config.snapshot_times[sidx], config.bins,
                                                  config.coverage);
        blur_density(snap, config.imaging_blur);
        snap.meta["seed"] = std::to_string(seed);
        snap.meta["n_trajectories"] = std::to_string(config.n_trajectories);
        snap.meta["simulator"] = "semiclassical";
        snap.meta["depth_recoils"] = std::to_string(config.depth_recoils);
        out.push_back(std::move(snap));
    }
    return out;
}

DensitySnapshot equilibrate(const LatticeConfig& config, double duration_ms,
                            std::uint64_t seed, int workers) {
    config.validate();
    if (!(duration_ms >= 0.0) || !std::isfinite(duration_ms))
        throw param_error("lattice: equilibration duration must be non-negative");

    const Params q = make_params(config);
    const std::size_t n = static_cast<std::size_t>(config.n_trajectories);
    std::vector<double> velocities(n);
    ErrorSlot err;
    const int nw = workers > 0 ? workers : omp_get_max_threads();
    const std::vector<double> no_times;

#pragma omp parallel for schedule(static) num_threads(nw)
    for (long a = 0; a < config.n_trajectories; ++a) {
        if (err.set) continue;
        Rng rng(derive_seed(seed, "equilibrate", static_cast<std::uint64_t>(a)));
        Trajectory tr = initial_state(config, rng);
        std::size_t next = 0;
        try {
            if (duration_ms > 0.0)
                evolve_one(q, config, a, rng, tr, duration_ms, no_times, next,
                           [](std::size_t, double) {}, [](long, const Trajectory&) {});
            velocities[static_cast<std::size_t>(a)] = q.vr * tr.p;
        } catch (const numeric_error& e) {
            err.store(a, e.what(), e.achieved_error);
        } catch (const error& e) {
            err.store(a, e.what(), 0.0);
        }
    }
    if (err.set) throw numeric_error(err.message, err.achieved);

    DensitySnapshot snap = histogram_snapshot(std::move(velocities), duration_ms, config.bins,
                                              config.coverage);
    snap.meta["seed"] = std::to_string(seed);
    snap.meta["simulator"] = "semiclassical";
    snap.meta["axis"] = "velocity_um_per_ms";
    return snap;
}

double EscapeStats::pearson() const {
    const std::size_t n = speeds.size();
    if (n < 2 || durations.size() != n)
        throw data_error("escape statistics: need >= 2 paired records");
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += speeds[i];
        my += durations[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double dx = speeds[i] - mx;
        double dy = durations[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (!(sxx > 0.0) || !(syy > 0.0))
        throw data_error("escape statistics: degenerate variance");
    return sxy / std::sqrt(sxx * syy);
}

EscapeStats escape_statistics(const LatticeConfig& config, double duration_ms,
                              std::uint64_t seed, int workers) {
    config.validate();
    if (!(duration_ms > 0.0) || !std::isfinite(duration_ms))
        throw param_error("lattice: escape observation duration must be positive");

    const Params q = make_params(config);
    const double barrier = -0.5 * q.u0; // hilltop of either potential (recoils)
    const long n = config.n_trajectories;
    std::vector<std::vector<double>> speeds(static_cast<std::size_t>(n));
    std::vector<std::vector<double>> durations(static_cast<std::size_t>(n));
    ErrorSlot err;
    const int nw = workers > 0 ? workers : omp_get_max_threads();
    const std::vector<double> no_times;

#pragma omp parallel for schedule(static) num_threads(nw)
    for (long a = 0; a < n; ++a) {
        if (err.set) continue;
        Rng rng(derive_seed(seed, "escape", static_cast<std::uint64_t>(a)));
        Trajectory tr = initial_state(config, rng);
        std::size_t next = 0;
        auto& sp = speeds[static_cast<std::size_t>(a)];
        auto& du = durations[static_cast<std::size_t>(a)];

        // Mechanical energy changes only at jumps, so bound/unbound
        // transitions are sampled right after each jump settles. Atoms that
        // start unbound and intervals still open at the end are dropped.
        bool unbound = tr.p * tr.p + potential(q, tr.s, tr.z) > barrier;
        double t_escape = -1.0;
        double v_escape = 0.0;
        try {
            evolve_one(q, config, a, rng, tr, duration_ms, no_times, next,
                       [](std::size_t, double) {},
                       [&](long, const Trajectory& now) {
                           bool above = now.p * now.p + potential(q, now.s, now.z) > barrier;
                           if (above && !unbound) {
                               t_escape = now.t;
                               v_escape = std::abs(q.vr * now.p);
                           } else if (!above && unbound && t_escape >= 0.0) {
                               sp.push_back(v_escape);
                               du.push_back(now.t - t_escape);
                               t_escape = -1.0;
                           }
                           unbound = above;
                       });
        } catch (const numeric_error& e) {
            err.store(a, e.what(), e.achieved_error);
        } catch (const error& e) {
            err.store(a, e.what(), 0.0);
        }
    }
    if (err.set) throw numeric_error(err.message, err.achieved);

    EscapeStats stats;
    for (long a = 0; a < n; ++a) {
        auto& sp = speeds[static_cast<std::size_t>(a)];
        auto& du = durations[static_cast<std::size_t>(a)];
        stats.speeds.insert(stats.speeds.end(), sp.begin(), sp.end());
        stats.durations.insert(stats.durations.end(), du.begin(), du.end());
    }
    return stats;
}

} // namespace latdiff
