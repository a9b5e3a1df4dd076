#pragma once

#include <cmath>
#include <cstdint>

namespace s3d {

// Deterministic, platform-independent randomness. std::random distributions
// are not bit-stable across standard library implementations, and several
// file-format and resume contracts here require byte-identical artifacts,
// so the generator and the distributions are spelled out explicitly.

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

// Stateless mix of a seed and up to three stream indices. Used for
// per-pixel / per-step draws that must not depend on evaluation order.
inline std::uint64_t hash_combine(std::uint64_t seed, std::uint64_t a,
                                  std::uint64_t b = 0, std::uint64_t c = 0) {
    std::uint64_t h = splitmix64(seed ^ 0x2545f4914f6cdd1dull);
    h = splitmix64(h ^ a);
    h = splitmix64(h ^ b);
    return splitmix64(h ^ c);
}

inline double u64_to_unit(std::uint64_t x) {
    // 53 mantissa bits -> [0,1)
    return static_cast<double>(x >> 11) * (1.0 / 9007199254740992.0);
}

// Sequential generator (xoshiro-style state walk over splitmix64).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(splitmix64(seed ^ 0x853c49e6748fea9bull)) {}

    std::uint64_t next_u64() {
        state_ = splitmix64(state_);
        return state_;
    }

    // [0,1)
    double uniform() { return u64_to_unit(next_u64()); }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // standard normal via Box-Muller
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

    std::uint64_t next_below(std::uint64_t n) { return n ? next_u64() % n : 0; }

private:
    std::uint64_t state_;
};

// One-off draws addressed by (seed, stream indices); order-independent.
inline double unit_at(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0,
                      std::uint64_t c = 0) {
    return u64_to_unit(hash_combine(seed, a, b, c));
}

} // namespace s3d
