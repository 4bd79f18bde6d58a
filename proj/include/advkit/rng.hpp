#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace advkit {

/// splitmix64 step; used to decorrelate derived seeds.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

/// Deterministic random stream. Wraps mt19937_64 but generates doubles from
/// raw 64-bit draws so results do not depend on the standard library's
/// distribution implementations.
class Prng {
public:
    explicit Prng(std::uint64_t seed) : engine_(seed) {}

    /// Independent stream for one sample of a set, stable under any
    /// parallel work split: stream i is a pure function of (seed, i).
    static Prng for_sample(std::uint64_t seed, std::uint64_t index) {
        std::uint64_t s = seed;
        std::uint64_t a = splitmix64(s);
        s ^= index + 0x9E3779B97F4A7C15ULL;
        std::uint64_t b = splitmix64(s);
        return Prng(a ^ (b * 0x2545F4914F6CDD1DULL));
    }

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform in [0, 1).
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Standard normal via Box-Muller (no cached spare, so the stream
    /// position is a fixed two draws per call).
    double normal() {
        double u1 = 1.0 - uniform(); // (0, 1]
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
    }

    /// Uniform index in [0, n). Modulo bias is negligible at the set sizes
    /// used here (n << 2^64).
    std::size_t index(std::size_t n) {
        return static_cast<std::size_t>(next_u64() % static_cast<std::uint64_t>(n));
    }

private:
    std::mt19937_64 engine_;
};

/// Stable role-specific seed derivation from one experiment-level seed.
inline std::uint64_t derive_seed(std::uint64_t root, std::uint64_t role) {
    std::uint64_t s = root ^ (0xA0761D6478BD642FULL * (role + 1));
    return splitmix64(s);
}

} // namespace advkit
