#include "pagmil/rng.hpp"

#include <cmath>
#include <numbers>

namespace pagmil {

double Rng::normal() {
    // u1 in (0,1] so the log is finite.
    double u1 = 1.0 - uniform();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

namespace {
uint64_t fnv1a(uint64_t h, const void* data, size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}
} // namespace

uint64_t seed_mix(uint64_t root, std::string_view tag) {
    uint64_t h = fnv1a(0xcbf29ce484222325ull ^ root, tag.data(), tag.size());
    return Rng(h).next_u64();
}

uint64_t seed_mix(uint64_t root, std::string_view tag, uint64_t index) {
    uint64_t h = fnv1a(0xcbf29ce484222325ull ^ root, tag.data(), tag.size());
    h = fnv1a(h, &index, sizeof(index));
    return Rng(h).next_u64();
}

} // namespace pagmil
