#pragma once

// Counter-based deterministic RNG. Same seed + same call sequence gives
// bit-identical draws on every platform; no ambient entropy anywhere.

#include <cmath>
#include <cstdint>

#include "ovfs/core/error.hpp"

namespace ovfs {

namespace detail {
inline std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}
}  // namespace detail

struct RngState {
    std::uint64_t seed = 0;
    std::uint64_t stream = 0;  // draws consumed so far

    RngState() = default;
    explicit RngState(std::uint64_t s) : seed(s) {}

    std::uint64_t next_u64() {
        ++stream;
        return detail::mix64(seed + 0x9E3779B97F4A7C15ULL * stream);
    }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n). Modulo bias is negligible for toy-scale n.
    long uniform_int(long n) {
        if (n <= 0) throw ValueError("uniform_int: n must be positive");
        return long(next_u64() % std::uint64_t(n));
    }

    // Box-Muller, cosine branch only: consumes two draws per call so the
    // stream counter alone determines every value (no cached spare).
    double normal(double mean = 0.0, double stddev = 1.0) {
        double u1 = 1.0 - uniform();  // (0, 1]
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        return mean + stddev * r * std::cos(2.0 * 3.14159265358979323846 * u2);
    }

    // Derives an independent generator from (seed, tag); does not consume
    // draws from this stream, so forks are call-order independent.
    RngState fork(std::uint64_t tag) const {
        return RngState(detail::mix64(seed ^ (0xD1B54A32D192ED03ULL * (tag + 1))));
    }
};

}  // namespace ovfs
