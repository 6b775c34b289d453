#pragma once
#include <cmath>
#include <cstdint>
#include <string_view>

namespace r3ds {

// Counter-based deterministic PRNG. A generator is identified by (key, counter);
// independent streams are derived from a master seed plus a stream label, so any
// consumer (init, shuffling, shape sampling) owns its own sequence and no global
// mutable state exists. Same seed + label -> same sequence, on every platform.
class Rng {
public:
    Rng() = default;
    Rng(uint64_t key, uint64_t counter = 0) : key_(key), counter_(counter) {}

    static uint64_t mix(uint64_t x) {
        x += 0x9e3779b97f4a7c15ull;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
        return x ^ (x >> 31);
    }

    static uint64_t hash_label(std::string_view label) {
        uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a 64
        for (unsigned char c : label) {
            h ^= c;
            h *= 0x100000001b3ull;
        }
        return h;
    }

    // Derive an independent stream from a master seed.
    static Rng stream(uint64_t seed, std::string_view label, uint64_t salt = 0) {
        return Rng(mix(seed ^ mix(hash_label(label) + salt)));
    }

    Rng split(std::string_view label, uint64_t salt = 0) const {
        return stream(key_, label, salt);
    }

    uint64_t next_u64() { return mix(key_ + 0x632be59bd9b4e019ull * ++counter_); }

    // Uniform in [0, 1) with 53 random bits.
    double next_double() { return double(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform integer in [0, n).
    uint64_t next_below(uint64_t n) { return n ? next_u64() % n : 0; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    // Box-Muller; the pair's second value is discarded to keep the stream
    // position a pure function of the draw count.
    double normal() {
        double u1 = next_double(), u2 = next_double();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

    // Normal resampled until |z| <= 2 standard deviations.
    double truncated_normal(double stddev) {
        for (;;) {
            double z = normal();
            if (std::abs(z) <= 2.0) return z * stddev;
        }
    }

    uint64_t key() const { return key_; }
    uint64_t counter() const { return counter_; }

private:
    uint64_t key_ = 0;
    uint64_t counter_ = 0;
};

}  // namespace r3ds
