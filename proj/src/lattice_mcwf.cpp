#include "latdiff/lattice.hpp"

#include <fftw3.h>
#include <omp.h>

#include <cmath>
#include <complex>
#include <cstddef>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "latdiff/errors.hpp"
#include "latdiff/rng.hpp"

namespace latdiff {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr std::size_t kMaxDensityDoubles = 500u * 1000u * 1000u;
constexpr double kEdgePeriods = 5.0;       // absorbing ramp width at each box edge
constexpr double kEdgeMassLimit = 1e-3;    // outer-wavenumber mass that flags aliasing
constexpr double kPhasePerStep = 0.1;      // rad, for both kinetic and potential bounds
constexpr double kJumpProbPerStep = 0.1;

// One decay channel |to><from| with spatial amplitude f(z) = sin(kz) or
// cos(kz) and weight w, so the rate operator is Gamma' w f(z)^2.
struct Channel {
    int from;
    int to;
    bool use_sin;
    double weight;
};

// J=1/2 -> 3/2 branching: sublevel-preserving scattering keeps 1 + 1/9 of
// the pump prefactor split across the two standing-wave patterns, pumping
// carries 2/9. Default pump pattern moves + -> - on cos^2(kz).
std::vector<Channel> channel_table(double rayleigh, bool swapped) {
    std::vector<Channel> t;
    t.push_back({+1, +1, true, rayleigh});
    t.push_back({+1, +1, false, rayleigh / 9.0});
    t.push_back({+1, -1, swapped, 2.0 / 9.0});
    t.push_back({-1, -1, false, rayleigh});
    t.push_back({-1, -1, true, rayleigh / 9.0});
    t.push_back({-1, +1, !swapped, 2.0 / 9.0});
    return t;
}

struct McwfSetup {
    int n = 0;
    double dz = 0.0;
    double dt = 0.0;
    std::vector<double> z;
    std::vector<double> gamma_plus;        // total decay rate of each sublevel (1/ms)
    std::vector<double> gamma_minus;
    std::vector<std::complex<double>> half_plus;   // exp(-i V dt/2 - gamma dt/4)
    std::vector<std::complex<double>> half_minus;
    std::vector<std::complex<double>> kinetic;     // exp(-i w(kappa) dt) / n
    std::vector<Channel> channels;
    std::vector<std::vector<double>> patterns;     // f_c(z)^2 per channel
    std::vector<std::vector<double>> amplitudes;   // f_c(z) per channel
    int edge_points = 0;
    std::vector<double> absorb;            // per-step amplitude factor, wall first
    std::size_t check_stride = 16;
};

McwfSetup make_setup(const LatticeConfig& c, const GridSpec& g) {
    McwfSetup s;
    s.n = g.points;
    s.dz = g.extent / g.points;
    s.z.resize(static_cast<std::size_t>(s.n));
    for (int i = 0; i < s.n; ++i)
        s.z[static_cast<std::size_t>(i)] = (i - s.n / 2) * s.dz;

    s.channels = channel_table(c.rayleigh_scale, c.swap_pump_pattern);
    const double gp = c.jump_rate_scale;
    s.gamma_plus.assign(static_cast<std::size_t>(s.n), 0.0);
    s.gamma_minus.assign(static_cast<std::size_t>(s.n), 0.0);
    for (const Channel& ch : s.channels) {
        std::vector<double> f2(static_cast<std::size_t>(s.n));
        std::vector<double> f(static_cast<std::size_t>(s.n));
        for (int i = 0; i < s.n; ++i) {
            double trig = ch.use_sin ? std::sin(c.wavevector * s.z[static_cast<std::size_t>(i)])
                                     : std::cos(c.wavevector * s.z[static_cast<std::size_t>(i)]);
            f[static_cast<std::size_t>(i)] = trig;
            f2[static_cast<std::size_t>(i)] = trig * trig;
        }
        for (int i = 0; i < s.n; ++i) {
            double r = gp * ch.weight * f2[static_cast<std::size_t>(i)];
            if (ch.from > 0)
                s.gamma_plus[static_cast<std::size_t>(i)] += r;
            else
                s.gamma_minus[static_cast<std::size_t>(i)] += r;
        }
        s.patterns.push_back(std::move(f2));
        s.amplitudes.push_back(std::move(f));
    }

    // Timestep: the kinetic half of the split step is an exact exponential in
    // Fourier space, so the splitting error is set by the modes the state
    // actually occupies rather than by the grid's edge mode. Budget the
    // occupied band as the initial momentum spread plus the fastest
    // barrier-bound orbit (floor 10 hbar k), and bound the phase advance of
    // that mode, of the deepest potential point, and the per-step jump
    // probability.
    const double wr = c.recoil_frequency();
    const double p_ref = std::max(10.0, 2.0 * c.momentum_width +
                                            2.0 * std::sqrt(c.depth_recoils) + 4.0);
    const double k_ref = p_ref * c.wavevector;
    const double w_kin = 0.5 * c.hbar_over_mass * k_ref * k_ref;
    const double v_max = 1.5 * c.depth_recoils * wr;
    const double k_edge = kPi / s.dz;
    const double nyquist_period =
        2.0 * kPi / (0.5 * c.hbar_over_mass * k_edge * k_edge);
    double dt = std::min({kPhasePerStep / w_kin, kPhasePerStep / v_max,
                          kPhasePerStep * nyquist_period});
    double gmax = 0.0;
    for (int i = 0; i < s.n; ++i)
        gmax = std::max(gmax, std::max(s.gamma_plus[static_cast<std::size_t>(i)],
                                       s.gamma_minus[static_cast<std::size_t>(i)]));
    if (gmax > 0.0) dt = std::min(dt, kJumpProbPerStep / gmax);
    s.dt = c.time_step_scale * dt;

    s.half_plus.resize(static_cast<std::size_t>(s.n));
    s.half_minus.resize(static_cast<std::size_t>(s.n));
    for (int i = 0; i < s.n; ++i) {
        std::size_t u = static_cast<std::size_t>(i);
        double cos2 = std::cos(2.0 * c.wavevector * s.z[u]);
        double vp = wr * 0.5 * c.depth_recoils * (-2.0 + cos2);
        double vm = wr * 0.5 * c.depth_recoils * (-2.0 - cos2);
        s.half_plus[u] = std::exp(std::complex<double>(-0.25 * s.gamma_plus[u] * s.dt,
                                                       -0.5 * vp * s.dt));
        s.half_minus[u] = std::exp(std::complex<double>(-0.25 * s.gamma_minus[u] * s.dt,
                                                        -0.5 * vm * s.dt));
    }

    s.kinetic.resize(static_cast<std::size_t>(s.n));
    for (int i = 0; i < s.n; ++i) {
        int j = i <= s.n / 2 ? i : i - s.n;
        double kappa = 2.0 * kPi * j / g.extent;
        double w = 0.5 * c.hbar_over_mass * kappa * kappa;
        s.kinetic[static_cast<std::size_t>(i)] =
            std::exp(std::complex<double>(0.0, -w * s.dt)) / static_cast<double>(s.n);
    }

    // Absorbing ramp over the outermost points on each side: outgoing
    // probability is eaten before it can wrap around the periodic grid. The
    // rate extinguishes a barrier-speed atom to ~e^-16 in density over one
    // crossing; faster outliers still lose several decades.
    s.edge_points = static_cast<int>(std::ceil(kEdgePeriods * (kPi / c.wavevector) / s.dz));
    s.absorb.resize(static_cast<std::size_t>(s.edge_points));
    const double ramp = s.edge_points * s.dz;
    const double v_ref = c.recoil_velocity() * std::sqrt(std::max(1.0, c.depth_recoils));
    const double r0 = 16.0 * v_ref / ramp;
    for (int i = 0; i < s.edge_points; ++i) {
        double u = 1.0 - static_cast<double>(i) / s.edge_points; // 1 at the wall
        double sn = std::sin(0.5 * kPi * u);
        s.absorb[static_cast<std::size_t>(i)] = std::exp(-r0 * sn * sn * s.dt);
    }
    return s;
}

// Thread-local FFT workspace; FFTW planning is not thread-safe.
struct FftPair {
    fftw_plan fwd = nullptr;
    fftw_plan inv = nullptr;
    fftw_complex* buf = nullptr;
    int n = 0;

    void init(int points) {
        n = points;
#pragma omp critical(latdiff_fftw_plan)
        {
            buf = fftw_alloc_complex(static_cast<std::size_t>(n));
            fwd = fftw_plan_dft_1d(n, buf, buf, FFTW_FORWARD, FFTW_ESTIMATE);
            inv = fftw_plan_dft_1d(n, buf, buf, FFTW_BACKWARD, FFTW_ESTIMATE);
        }
    }
    void destroy() {
#pragma omp critical(latdiff_fftw_plan)
        {
            if (fwd) fftw_destroy_plan(fwd);
            if (inv) fftw_destroy_plan(inv);
            if (buf) fftw_free(buf);
            fwd = inv = nullptr;
            buf = nullptr;
        }
    }
};

struct SpinorState {
    std::vector<std::complex<double>> plus;
    std::vector<std::complex<double>> minus;
};

double norm_squared(const SpinorState& psi, double dz) {
    double s = 0.0;
    for (const auto& a : psi.plus) s += std::norm(a);
    for (const auto& a : psi.minus) s += std::norm(a);
    return s * dz;
}

void write_density(const SpinorState& psi, double dz, double* out, int n, double scale) {
    double total = norm_squared(psi, dz);
    for (int i = 0; i < n; ++i) {
        std::size_t u = static_cast<std::size_t>(i);
        out[u] = scale * (std::norm(psi.plus[u]) + std::norm(psi.minus[u])) / total;
    }
}

struct TrajectoryResult {
    bool aborted = false;
    double kept = 1.0; // surviving probability after edge absorption
};

[[noreturn]] void norm_failure(long traj, double before, double after, double t) {
    std::ostringstream os;
    os << "mcwf trajectory " << traj << ": norm grew from " << before << " to " << after
       << " at t=" << t << " ms between jumps; split-step propagator is not contractive";
    throw numeric_error(os.str(), after - before);
}

// Evolve one wave function, writing each snapshot's density, normalized and
// then weighted by the trajectory's surviving probability, into
// density[snap * n .. +n). Aborts (freezing the density) when probability
// crowds the outer wavenumbers, where the kinetic map starts aliasing.
TrajectoryResult run_trajectory(const McwfSetup& s, const LatticeConfig& c, long traj_index,
                                Rng& rng, const std::vector<double>& times, double* density,
                                FftPair& fft) {
    const int n = s.n;
    const std::size_t un = static_cast<std::size_t>(n);
    SpinorState psi;
    psi.plus.assign(un, {0.0, 0.0});
    psi.minus.assign(un, {0.0, 0.0});

    // Packet per trajectory: the coined sublevel's well ground state
    // (harmonic-approximation sigma), centered on the well minimum nearest
    // the sampled cloud position and boosted by the sampled momentum. A wider
    // packet would straddle hills coherently and carry an above-barrier band
    // fraction that a point ensemble at the same temperature lacks.
    double p0 = c.momentum_width > 0.0 ? c.momentum_width * rng.normal() : 0.0;
    bool start_plus = rng.coin();
    {
        double raw = c.initial_width > 0.0 ? c.initial_width * rng.normal() : 0.0;
        const double period = kPi / c.wavevector;
        double x0 = start_plus ? (std::round(raw / period - 0.5) + 0.5) * period
                               : std::round(raw / period) * period;
        const double w_osc = 2.0 * c.recoil_frequency() * std::sqrt(c.depth_recoils);
        const double sigma =
            std::max(std::sqrt(c.hbar_over_mass / (2.0 * w_osc)), 2.0 * s.dz);
        auto& comp = start_plus ? psi.plus : psi.minus;
        double acc = 0.0;
        for (int i = 0; i < n; ++i) {
            std::size_t u = static_cast<std::size_t>(i);
            double dzp = s.z[u] - x0;
            double g = std::exp(-dzp * dzp / (4.0 * sigma * sigma));
            comp[u] = std::polar(g, p0 * c.wavevector * s.z[u]);
            acc += g * g;
        }
        double inv = 1.0 / std::sqrt(acc * s.dz);
        for (auto& a : comp) a *= inv;
    }

    auto kinetic_sweep = [&](std::vector<std::complex<double>>& comp, bool check_momentum,
                             bool& momentum_hot) {
        for (int i = 0; i < n; ++i) {
            fft.buf[i][0] = comp[static_cast<std::size_t>(i)].real();
            fft.buf[i][1] = comp[static_cast<std::size_t>(i)].imag();
        }
        fftw_execute(fft.fwd);
        if (check_momentum) {
            // mass in the outer 5% of wavenumbers signals imminent aliasing
            double edge = 0.0, total = 0.0;
            int band = n / 40;
            for (int i = 0; i < n; ++i) {
                double m = fft.buf[i][0] * fft.buf[i][0] + fft.buf[i][1] * fft.buf[i][1];
                total += m;
                int j = i <= n / 2 ? i : n - i;
                if (j >= n / 2 - band) edge += m;
            }
            if (total > 0.0 && edge > kEdgeMassLimit * total) momentum_hot = true;
        }
        for (int i = 0; i < n; ++i) {
            std::size_t u = static_cast<std::size_t>(i);
            std::complex<double> v(fft.buf[i][0], fft.buf[i][1]);
            v *= s.kinetic[u];
            fft.buf[i][0] = v.real();
            fft.buf[i][1] = v.imag();
        }
        fftw_execute(fft.inv);
        for (int i = 0; i < n; ++i)
            comp[static_cast<std::size_t>(i)] = {fft.buf[i][0], fft.buf[i][1]};
    };

    bool plus_active_init = start_plus;
    auto half_potential = [&](bool plus_active) {
        auto& comp = plus_active ? psi.plus : psi.minus;
        const auto& fac = plus_active ? s.half_plus : s.half_minus;
        for (int i = 0; i < n; ++i) {
            std::size_t u = static_cast<std::size_t>(i);
            comp[u] *= fac[u];
        }
    };
    auto active_norm2 = [&](bool plus_active) {
        const auto& comp = plus_active ? psi.plus : psi.minus;
        double acc = 0.0;
        for (const auto& a : comp) acc += std::norm(a);
        return acc * s.dz;
    };

    double t = 0.0;
    double norm2 = active_norm2(plus_active_init);
    double threshold = rng.uniform();
    while (threshold <= 0.0) threshold = rng.uniform();
    std::size_t next = 0;
    std::size_t step = 0;
    bool plus_active = start_plus;
    TrajectoryResult res;

    while (next < times.size()) {
        // The effective Hamiltonian is sublevel-diagonal and every jump
        // collapses onto one sublevel, so only one component ever carries
        // amplitude; the other is skipped rather than transformed as zeros.
        half_potential(plus_active);
        bool momentum_hot = false;
        bool probe = step % s.check_stride == 0;
        kinetic_sweep(plus_active ? psi.plus : psi.minus, probe, momentum_hot);
        half_potential(plus_active);
        t += s.dt;
        ++step;

        double norm2_new = active_norm2(plus_active);
        if (norm2_new > norm2 * (1.0 + 1e-12) + 1e-15)
            norm_failure(traj_index, norm2, norm2_new, t);
        norm2 = norm2_new;

        // Edge absorption: outgoing probability in the ramps is removed and
        // the survivor rescaled back to its pre-mask norm, so the jump clock
        // keeps tracking gamma decay alone; the trajectory's statistical
        // weight falls by the same ratio instead.
        {
            auto& comp = plus_active ? psi.plus : psi.minus;
            double before = 0.0, after = 0.0;
            for (int i = 0; i < s.edge_points; ++i) {
                std::size_t lo = static_cast<std::size_t>(i);
                std::size_t hi = static_cast<std::size_t>(n - 1 - i);
                double m = s.absorb[static_cast<std::size_t>(i)];
                before += std::norm(comp[lo]) + std::norm(comp[hi]);
                comp[lo] *= m;
                comp[hi] *= m;
                after += std::norm(comp[lo]) + std::norm(comp[hi]);
            }
            double total = norm2 / s.dz;
            double loss = before - after;
            if (loss > 1e-16 * total) {
                double keep_ratio = (total - loss) / total;
                if (!(keep_ratio > 1e-12)) {
                    // the whole wave function left the box; nothing survives
                    res.kept = 0.0;
                    for (std::size_t rest = next; rest < times.size(); ++rest)
                        for (std::size_t u = 0; u < un; ++u) density[rest * un + u] = 0.0;
                    return res;
                }
                double inv = 1.0 / std::sqrt(keep_ratio);
                for (auto& a : comp) a *= inv;
                res.kept *= keep_ratio;
            }
        }

        while (next < times.size() && times[next] <= t + 1e-12) {
            write_density(psi, s.dz, density + next * un, n, res.kept);
            ++next;
        }
        if (next >= times.size()) break;

        if (momentum_hot) {
            res.aborted = true;
            std::vector<double> frozen(un);
            write_density(psi, s.dz, frozen.data(), n, res.kept);
            for (std::size_t rest = next; rest < times.size(); ++rest)
                for (std::size_t u = 0; u < un; ++u) density[rest * un + u] = frozen[u];
            return res;
        }

        if (norm2 <= threshold) {
            // Channel weights <psi|C^t C|psi>, accumulated per channel; their
            // sum must reproduce the independently built total rate arrays.
            double weights[6];
            double sum = 0.0;
            for (std::size_t ci = 0; ci < s.channels.size(); ++ci) {
                const auto& from = s.channels[ci].from > 0 ? psi.plus : psi.minus;
                const auto& f2 = s.patterns[ci];
                double w = 0.0;
                for (std::size_t u = 0; u < un; ++u) w += f2[u] * std::norm(from[u]);
                weights[ci] = c.jump_rate_scale * s.channels[ci].weight * w * s.dz;
                sum += weights[ci];
            }
            double direct = 0.0;
            for (std::size_t u = 0; u < un; ++u)
                direct += s.gamma_plus[u] * std::norm(psi.plus[u]) +
                          s.gamma_minus[u] * std::norm(psi.minus[u]);
            direct *= s.dz;
            if (std::abs(direct - sum) > 1e-12 * std::max(1.0, std::abs(direct))) {
                std::ostringstream os;
                os << "mcwf trajectory " << traj_index << ": channel rates sum to " << sum
                   << " but the total rate operator gives " << direct;
                throw numeric_error(os.str(), std::abs(direct - sum));
            }

            if (sum > 0.0) {
                double pick = rng.uniform() * sum;
                std::size_t ci = 0;
                for (; ci + 1 < s.channels.size(); ++ci) {
                    if (pick < weights[ci]) break;
                    pick -= weights[ci];
                }
                const Channel& ch = s.channels[ci];
                const auto& amp = s.amplitudes[ci];
                std::vector<std::complex<double>> source =
                    ch.from > 0 ? psi.plus : psi.minus;
                double q = rng.uniform(-c.wavevector, c.wavevector);
                for (std::size_t u = 0; u < un; ++u)
                    source[u] *= amp[u] * std::exp(std::complex<double>(0.0, q * s.z[u]));
                psi.plus.assign(un, {0.0, 0.0});
                psi.minus.assign(un, {0.0, 0.0});
                plus_active = ch.to > 0;
                if (ch.to > 0)
                    psi.plus = std::move(source);
                else
                    psi.minus = std::move(source);
                double nn = norm_squared(psi, s.dz);
                if (!(nn > 0.0)) {
                    std::ostringstream os;
                    os << "mcwf trajectory " << traj_index
                       << ": jump annihilated the state at t=" << t;
                    throw numeric_error(os.str(), 0.0);
                }
                double inv = 1.0 / std::sqrt(nn);
                for (auto& a : psi.plus) a *= inv;
                for (auto& a : psi.minus) a *= inv;
                norm2 = norm_squared(psi, s.dz);
            }
            threshold = rng.uniform();
            while (threshold <= 0.0) threshold = rng.uniform();
        }
    }
    return res;
}

struct ErrorSlot {
    bool set = false;
    long traj = 0;
    std::string message;
    double achieved = 0.0;

    void store(long traj_index, const char* what, double value) {
#pragma omp critical(latdiff_mcwf_error)
        if (!set || traj_index < traj) {
            set = true;
            traj = traj_index;
            message = what;
            achieved = value;
        }
    }
};

} // namespace

void GridSpec::validate(const LatticeConfig& c) const {
    if (points < 64 || (points & (points - 1)) != 0)
        throw param_error("grid: points must be a power of two, >= 64");
    if (!(extent > 0.0) || !std::isfinite(extent))
        throw param_error("grid: extent must be positive");
    const double period = kPi / c.wavevector;
    if (extent < 50.0 * period)
        throw param_error("grid: extent must cover at least 50 lattice periods");
    if (extent / points > period / 16.0)
        throw param_error("grid: resolution below 16 points per lattice period");
}

std::vector<DensitySnapshot> simulate_mcwf(const LatticeConfig& config, const GridSpec& grid,
                                           std::uint64_t seed, int workers) {
    config.validate();
    grid.validate(config);
    if (config.snapshot_times.empty())
        throw param_error("mcwf: needs at least one snapshot time");
    if (config.initial_width > grid.extent / 8.0)
        throw param_error("mcwf: initial_width too wide for the grid");

    const std::size_t nsnap = config.snapshot_times.size();
    const std::size_t n = static_cast<std::size_t>(config.n_trajectories);
    const std::size_t un = static_cast<std::size_t>(grid.points);
    if (n * nsnap * un > kMaxDensityDoubles) {
        std::ostringstream os;
        os << "mcwf run would need " << n * nsnap * un << " density samples (cap "
           << kMaxDensityDoubles << "); reduce trajectories, snapshots, or grid points";
        throw resource_error(os.str());
    }

    const McwfSetup setup = make_setup(config, grid);
    std::vector<double> all(n * nsnap * un);
    std::vector<unsigned char> aborted(n, 0);
    std::vector<double> kept(n, 1.0);
    ErrorSlot err;
    const int nw = workers > 0 ? workers : omp_get_max_threads();

#pragma omp parallel num_threads(nw)
    {
        FftPair fft;
        fft.init(grid.points);
#pragma omp for schedule(static)
        for (long a = 0; a < config.n_trajectories; ++a) {
            if (err.set) continue;
            Rng rng(derive_seed(seed, "mcwf", static_cast<std::uint64_t>(a)));
            try {
                TrajectoryResult r =
                    run_trajectory(setup, config, a, rng, config.snapshot_times,
                                   all.data() + static_cast<std::size_t>(a) * nsnap * un, fft);
                aborted[static_cast<std::size_t>(a)] = r.aborted ? 1 : 0;
                kept[static_cast<std::size_t>(a)] = r.kept;
            } catch (const numeric_error& e) {
                err.store(a, e.what(), e.achieved_error);
            } catch (const error& e) {
                err.store(a, e.what(), 0.0);
            }
        }
        fft.destroy();
    }
    if (err.set) throw numeric_error(err.message, err.achieved);

    long n_aborted = 0;
    double kept_sum = 0.0;
    for (std::size_t a = 0; a < n; ++a) {
        n_aborted += aborted[a];
        kept_sum += kept[a];
    }
    const double absorbed_mean = 1.0 - kept_sum / static_cast<double>(n);

    std::vector<DensitySnapshot> out;
    out.reserve(nsnap);
    for (std::size_t sidx = 0; sidx < nsnap; ++sidx) {
        DensitySnapshot snap;
        snap.time_ms = config.snapshot_times[sidx];
        snap.x_grid = setup.z;
        snap.density.assign(un, 0.0);
        // fixed accumulation order keeps the result independent of scheduling
        for (std::size_t a = 0; a < n; ++a) {
            const double* src = all.data() + a * nsnap * un + sidx * un;
            for (std::size_t u = 0; u < un; ++u) snap.density[u] += src[u];
        }
        double inv = 1.0 / static_cast<double>(n);
        for (auto& d : snap.density) d *= inv;
        double mass = trapezoid(snap.x_grid, snap.density);
        if (mass > 0.0)
            for (auto& d : snap.density) d /= mass;
        blur_density(snap, config.imaging_blur);
        snap.meta["seed"] = std::to_string(seed);
        snap.meta["n_trajectories"] = std::to_string(config.n_trajectories);
        snap.meta["simulator"] = "mcwf";
        snap.meta["depth_recoils"] = std::to_string(config.depth_recoils);
        snap.meta["aborted"] = std::to_string(n_aborted);
        snap.meta["absorbed_mass"] = std::to_string(absorbed_mean);
        out.push_back(std::move(snap));
    }
    return out;
}

} // namespace latdiff
