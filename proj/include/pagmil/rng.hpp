#pragma once

#include <cstdint>
#include <string_view>

namespace pagmil {

/// Deterministic 64-bit generator (splitmix64). Self-contained so that
/// streams are bit-identical across platforms and standard libraries.
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed) {}

    uint64_t next_u64() {
        uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    /// Uniform in [0, 1).
    double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [lo, hi], inclusive.
    int uniform_int(int lo, int hi) {
        uint64_t span = uint64_t(hi - lo) + 1;
        return lo + int(next_below(span));
    }

    /// Uniform in [0, n) without modulo bias.
    uint64_t next_below(uint64_t n) {
        __uint128_t m = __uint128_t(next_u64()) * n;
        return uint64_t(m >> 64);
    }

    /// Standard normal via Box-Muller. Draws two uniforms per call.
    double normal();

    double normal(double mean, double sd) { return mean + sd * normal(); }

private:
    uint64_t state_;
};

/// Derive an independent seed from a root seed and a purpose tag, so that
/// data generation, parameter init, and k-means restarts draw from
/// unrelated streams.
uint64_t seed_mix(uint64_t root, std::string_view tag);
uint64_t seed_mix(uint64_t root, std::string_view tag, uint64_t index);

} // namespace pagmil
