#pragma once

#include <cmath>
#include <cstdint>

// Counter-based random numbers. Every noise draw is keyed by (seed, indices),
// so results are independent of evaluation order and thread count.
namespace lunarloc::rng {

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

inline uint64_t mix(uint64_t a, uint64_t b) {
    return splitmix64(a ^ (b + 0x9e3779b97f4a7c15ull + (a << 6) + (a >> 2)));
}

inline uint64_t mix(uint64_t a, uint64_t b, uint64_t c) { return mix(mix(a, b), c); }
inline uint64_t mix(uint64_t a, uint64_t b, uint64_t c, uint64_t d) { return mix(mix(a, b, c), d); }

// Uniform in [0, 1).
inline double uniform(uint64_t key) {
    return static_cast<double>(splitmix64(key) >> 11) * 0x1.0p-53;
}

// Standard normal via Box-Muller; two independent uniforms derived from the key.
inline double gaussian(uint64_t key) {
    double u1 = uniform(mix(key, 0x5bf03635ull));
    double u2 = uniform(mix(key, 0xc2b2ae35ull));
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

}  // namespace lunarloc::rng
