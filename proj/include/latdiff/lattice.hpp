#pragma once

#include <cstdint>
#include <vector>

#include "latdiff/snapshot.hpp"

namespace latdiff {

// 87Rb D2 numbers in the unit system used throughout: position um, time ms,
// momentum in units of hbar k.
inline constexpr double kRb87Wavevector = 8.0553;       // k (1/um), 780.24 nm
inline constexpr double kRb87HbarOverMass = 0.730774;   // hbar/m (um^2/ms)

struct LatticeConfig {
    // depth U0 of the bipotential in recoil energies
    double depth_recoils = 4.8;
    double wavevector = kRb87Wavevector;       // 1/um
    double hbar_over_mass = kRb87HbarOverMass; // um^2/ms

    // optical pumping rate scale Gamma' (1/ms); sublevel switches run at
    // (2/9) Gamma' times the local intensity pattern in both simulators.
    // At 120/ms a 12 E_r lattice cycles escape and recapture often enough
    // over ~100 ms for the cloud to spread diffusively.
    double jump_rate_scale = 120.0;

    long n_trajectories = 1000;
    std::vector<double> snapshot_times;  // ms
    double initial_width = 200.0;        // cloud standard deviation (um)
    double momentum_width = 5.75;        // initial p spread (hbar k), 12 uK

    // Pumping pattern: with U+- = (U0/2)(-2 +- cos 2kz) the cooling cycle
    // ejects each sublevel from its own potential hilltop, i.e. plus->minus
    // at cos^2(kz) and minus->plus at sin^2(kz). The swapped variant (the
    // reversed pairing) is kept selectable for model sensitivity checks.
    bool swap_pump_pattern = false;

    // Optional sublevel-preserving scattering (weight 1 restores the full
    // J=1/2 branching). Off by default: its recoil diffusion is depth
    // independent and overwhelms the Sisyphus cooling below ~19 E_r, while
    // the transport studied here is carried by the pumping switches alone.
    double rayleigh_scale = 0.0;

    // integrator safety factor (< 1 shrinks the timestep)
    double time_step_scale = 1.0;

    int bins = 512;          // histogram bins for semiclassical snapshots
    double coverage = 0.999; // central quantile span of the histogram grid

    // Imaging resolution: position densities are convolved with a Gaussian
    // of this sigma (um) so the sub-period well comb does not masquerade as
    // the cloud's half-maximum structure. 0 disables.
    double imaging_blur = 1.0;

    double recoil_frequency() const { return 0.5 * hbar_over_mass * wavevector * wavevector; }
    double recoil_velocity() const { return hbar_over_mass * wavevector; }
    void validate() const;
};

// Position grid for the wave-function simulator.
struct GridSpec {
    double extent = 40.0; // total length (um), centered on 0; ~20 points per period at 2048
    int points = 2048;    // power of two
    void validate(const LatticeConfig& c) const;
};

// Phase-space ensemble simulator: Hamiltonian motion on the two optical
// potentials, interrupted by pumping and Rayleigh jumps with photon recoils.
std::vector<DensitySnapshot> simulate_semiclassical(const LatticeConfig& config,
                                                    std::uint64_t seed, int workers = 0);

// Wave-function simulator: split-step spectral evolution of a two-component
// spinor under the non-Hermitian effective Hamiltonian with stochastic jumps.
std::vector<DensitySnapshot> simulate_mcwf(const LatticeConfig& config, const GridSpec& grid,
                                           std::uint64_t seed, int workers = 0);

// Momentum distribution of the semiclassical ensemble after a lattice-on
// lead-in. The returned snapshot's axis is velocity (um/ms).
DensitySnapshot equilibrate(const LatticeConfig& config, double duration_ms,
                            std::uint64_t seed, int workers = 0);

// Escape diagnostics: an atom is unbound while its mechanical energy exceeds
// the barrier top of its current potential. One record per escape event.
struct EscapeStats {
    std::vector<double> speeds;    // |v| when the barrier is first cleared (um/ms)
    std::vector<double> durations; // length of the unbound interval (ms)
    double pearson() const;
};

EscapeStats escape_statistics(const LatticeConfig& config, double duration_ms,
                              std::uint64_t seed, int workers = 0);

} // namespace latdiff
