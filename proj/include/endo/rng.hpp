// Seedable, splittable random number generation used by every stochastic
// operation in the library. All experiment reproducibility rests on this:
// a generator is a pure function of its construction seed, and split()
// derives an independent child stream without consuming state, so parallel
// workers and replay tests see identical draws.

#pragma once

#include <array>
#include <cmath>
#include <cstdint>

namespace endo {

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

inline std::uint64_t rotl64(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
}

} // namespace detail

/// xoshiro256++ generator seeded through splitmix64. Value-semantic and
/// cheap to copy; never shared across threads (derive children instead).
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : seed_(seed) {
        std::uint64_t sm = seed;
        for (auto& w : state_) w = detail::splitmix64(sm);
    }

    std::uint64_t next_u64() {
        const std::uint64_t result =
            detail::rotl64(state_[0] + state_[3], 23) + state_[0];
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = detail::rotl64(state_[3], 45);
        return result;
    }

    /// Uniform double in [0, 1).
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Inclusive integer range.
    int uniform_int(int lo, int hi) {
        const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
        return lo + static_cast<int>(next_u64() % span);
    }

    /// Standard normal via Box-Muller. No cached spare: each call consumes
    /// exactly two uniforms, which keeps replay behavior stateless.
    double normal() {
        const double u1 = 1.0 - uniform(); // (0, 1]
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) *
               std::cos(6.283185307179586476925286766559 * u2);
    }

    double normal(double mean, double sd) { return mean + sd * normal(); }

    /// Independent child stream. Pure function of (construction seed,
    /// stream id); does not advance this generator.
    Rng split(std::uint64_t stream) const {
        std::uint64_t sm = seed_ ^ (0x9E3779B97F4A7C15ULL * (stream + 1));
        std::uint64_t child = detail::splitmix64(sm);
        child ^= detail::splitmix64(sm);
        return Rng(child);
    }

    std::uint64_t seed() const { return seed_; }

private:
    std::uint64_t seed_;
    std::array<std::uint64_t, 4> state_;
};

} // namespace endo
