#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace xaigan {

// Deterministic PRNG with fully specified output. std::mt19937_64 is pinned
// by the standard; the distributions here are hand-rolled because the
// std::*_distribution algorithms are implementation-defined and we need
// bit-identical streams for reproducible runs.
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed != 0 ? seed : 0x9e3779b97f4a7c15ULL) {}

    uint64_t next_u64() {
        // xorshift64* -- small, fast, fully specified.
        uint64_t x = state_;
        x ^= x >> 12;
        x ^= x << 25;
        x ^= x >> 27;
        state_ = x;
        return x * 0x2545f4914f6cdd1dULL;
    }

    // uniform in (0, 1]
    double uniform_open() {
        return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
    }

    // uniform in [0, 1)
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Box-Muller, two uniforms per draw, no cached half.
    double normal(double mean, double stddev) {
        const double u1 = uniform_open();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        return mean + stddev * r * std::cos(2.0 * M_PI * u2);
    }

    // uniform integer in [lo, hi] inclusive
    int64_t uniform_int(int64_t lo, int64_t hi) {
        const uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
        return lo + static_cast<int64_t>(next_u64() % span);
    }

private:
    uint64_t state_;
};

// FNV-1a over a tag string, mixed with the base seed through splitmix64.
// Used to give every model / stream its own independent sub-seed so that
// adding or removing one consumer never shifts another consumer's draws.
inline uint64_t derive_seed(uint64_t base, std::string_view tag) {
    uint64_t h = 1469598103934665603ULL;
    for (char c : tag) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ULL;
    }
    uint64_t z = base ^ h;
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline uint64_t derive_seed(uint64_t base, std::string_view tag, uint64_t index) {
    return derive_seed(base ^ (0x100000001b3ULL * (index + 1)), tag);
}

}  // namespace xaigan
