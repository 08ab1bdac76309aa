#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace latdiff {

// splitmix64 finalizer; good avalanche, used for seed derivation only.
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Stream seed for (master seed, module tag, trajectory index). Every parallel
// worker derives its streams through this, so results do not depend on how
// trajectories are scheduled onto workers.
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view module_tag,
                                 std::uint64_t index) {
    std::uint64_t s = mix64(master ^ fnv1a64(module_tag));
    return mix64(s ^ (index * 0xd1342543de82ef95ULL + 0x2545f4914f6cdd1dULL));
}

// mt19937_64 with fixed variate transforms. The std::* distribution objects
// are implementation-defined, so all transforms are spelled out here to keep
// streams identical across standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed), have_normal_(false), cached_(0.0) {}

    std::uint64_t bits() { return gen_(); }

    // uniform on (0,1), both endpoints excluded
    double uniform() {
        const double scale = 1.0 / 9007199254740992.0; // 2^-53
        double u;
        do {
            u = static_cast<double>(gen_() >> 11) * scale;
        } while (u <= 0.0);
        return u;
    }

    // uniform on (lo, hi)
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    double exponential() { return -std::log(uniform()); }

    // Box-Muller; second variate cached
    double normal() {
        if (have_normal_) {
            have_normal_ = false;
            return cached_;
        }
        double u1 = uniform();
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double phi = 2.0 * M_PI * u2;
        cached_ = r * std::sin(phi);
        have_normal_ = true;
        return r * std::cos(phi);
    }

    bool coin() { return (gen_() & 1ULL) != 0; }

    // Pareto with survival P(X>y) = y^{-index}, support [1, inf)
    double pareto(double index) { return std::pow(uniform(), -1.0 / index); }

private:
    std::mt19937_64 gen_;
    bool have_normal_;
    double cached_;
};

} // namespace latdiff
