#pragma once

// Explicitly seeded random stream with counter-based substream derivation.
// Every sampler takes a stream from its caller; nothing in the library owns
// global randomness, so runs are reproducible regardless of evaluation order.

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>

namespace sves {

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t rotl64(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
}

}  // namespace detail

class RngStream {
public:
    explicit RngStream(std::uint64_t seed) : seed_(seed) {
        std::uint64_t sm = seed;
        for (auto& word : state_) word = detail::splitmix64(sm);
    }

    // Substream keyed by a tuple of indices, e.g. (generation, particle).
    // Derivation depends only on the parent seed and the keys, never on how
    // many values the parent has already produced.
    RngStream derive(std::initializer_list<std::uint64_t> keys) const {
        std::uint64_t sm = seed_ ^ 0xa0761d6478bd642fULL;
        std::uint64_t h = detail::splitmix64(sm);
        for (std::uint64_t k : keys) {
            sm = h ^ (k + 0xe7037ed1a0b428dbULL);
            h = detail::splitmix64(sm);
        }
        return RngStream(h);
    }

    RngStream derive(std::uint64_t k) const { return derive({k}); }
    RngStream derive(std::uint64_t k1, std::uint64_t k2) const { return derive({k1, k2}); }
    RngStream derive(std::uint64_t k1, std::uint64_t k2, std::uint64_t k3) const {
        return derive({k1, k2, k3});
    }

    std::uint64_t next_u64() {
        // xoshiro256++
        const std::uint64_t result = detail::rotl64(state_[0] + state_[3], 23) + state_[0];
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = detail::rotl64(state_[3], 45);
        return result;
    }

    // Uniform on [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform on [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n).
    std::uint64_t uniform_index(std::uint64_t n) { return next_u64() % n; }

    // Standard normal via Box-Muller; consumes exactly two uniforms per draw.
    double normal() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    std::uint64_t seed() const { return seed_; }

private:
    std::uint64_t seed_;
    std::uint64_t state_[4];
};

}  // namespace sves
