#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>

#include "floc/common.hpp"

namespace floc {

// Self-contained xoshiro256** generator seeded via splitmix64. Standard
// <random> distributions are not bit-stable across library versions, so every
// randomized operation in the project draws from this engine only.

inline uint64_t splitmix64(uint64_t& state) {
    uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Deterministic seed derivation: hash_mix(global, epoch, index, ...).
inline uint64_t hash_mix(uint64_t a, uint64_t b) {
    uint64_t s = a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
    return splitmix64(s);
}

inline uint64_t hash_seq(std::initializer_list<uint64_t> vals) {
    uint64_t h = 0x243f6a8885a308d3ULL;
    for (uint64_t v : vals) h = hash_mix(h, v);
    return h;
}

class Rng {
public:
    explicit Rng(uint64_t seed) {
        uint64_t sm = seed;
        for (auto& w : s_) w = splitmix64(sm);
    }

    uint64_t next_u64() {
        const uint64_t result = rotl(s_[1] * 5, 7) * 9;
        const uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    // Uniform integer in [0, n) without modulo bias (Lemire reduction).
    uint64_t bounded(uint64_t n) {
        FLOC_CHECK(n > 0, "Rng::bounded: n must be positive");
        __uint128_t m = static_cast<__uint128_t>(next_u64()) * n;
        uint64_t lo = static_cast<uint64_t>(m);
        if (lo < n) {
            uint64_t t = (~n + 1) % n;
            while (lo < t) {
                m = static_cast<__uint128_t>(next_u64()) * n;
                lo = static_cast<uint64_t>(m);
            }
        }
        return static_cast<uint64_t>(m >> 64);
    }

    // Inclusive integer range.
    int uniform_int(int lo, int hi) {
        FLOC_CHECK(lo <= hi, "Rng::uniform_int: empty range");
        return lo + static_cast<int>(bounded(static_cast<uint64_t>(hi) - lo + 1));
    }

    // [0, 1) with 53 random bits.
    real uniform() { return static_cast<real>(next_u64() >> 11) * 0x1.0p-53; }

    real uniform(real a, real b) { return a + (b - a) * uniform(); }

    bool bernoulli(real p) { return uniform() < p; }

    // Box-Muller; the spare value is cached, so draw order is part of the
    // determinism contract.
    real normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        real u1 = uniform();
        real u2 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const real r = std::sqrt(-2.0 * std::log(u1));
        const real theta = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    real normal(real mean, real stddev) { return mean + stddev * normal(); }

private:
    static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    uint64_t s_[4];
    real spare_ = 0.0;
    bool has_spare_ = false;
};

} // namespace floc
