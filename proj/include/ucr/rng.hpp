#pragma once

#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

namespace ucr {

// Deterministic 64-bit generator: xoshiro256** seeded through splitmix64.
// The algorithm is fixed by this header (no std:: engines, no distribution
// objects), so a given seed yields the same draw sequence on every platform.
class Rng {
public:
    explicit Rng(uint64_t seed) {
        // splitmix64 expansion of the seed into the four state words
        uint64_t x = seed;
        for (auto& word : state_) word = splitmix64(x);
        // avoid the all-zero state xoshiro cannot leave
        if ((state_[0] | state_[1] | state_[2] | state_[3]) == 0) state_[0] = 0x9e3779b97f4a7c15ull;
    }

    uint64_t next_u64() {
        const uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform in [0,1) with 53 random mantissa bits.
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    // Unbiased integer in [0, n) via rejection sampling.
    uint64_t next_below(uint64_t n) {
        const uint64_t limit = n * ((~uint64_t{0}) / n);
        uint64_t x = next_u64();
        while (x >= limit) x = next_u64();
        return x % n;
    }
    int uniform_int(int n) { return static_cast<int>(next_below(static_cast<uint64_t>(n))); }

    // Standard normal via Box-Muller; the second value of each pair is cached.
    double normal() {
        if (has_cached_) {
            has_cached_ = false;
            return cached_;
        }
        double u1 = next_double();
        while (u1 <= 0.0) u1 = next_double();
        const double u2 = next_double();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double two_pi = 6.283185307179586476925286766559;
        cached_ = r * std::sin(two_pi * u2);
        has_cached_ = true;
        return r * std::cos(two_pi * u2);
    }

    // Fisher-Yates shuffle of an index range.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            const size_t j = next_below(i);
            std::swap(v[i - 1], v[j]);
        }
    }

    // Seed-split a child generator for an independent stream. Children are
    // keyed by id, so parallel call sites can fork reproducibly.
    Rng fork(uint64_t stream_id) const {
        uint64_t x = state_[0] ^ (state_[3] + 0x9e3779b97f4a7c15ull * (stream_id + 1));
        return Rng(splitmix64(x));
    }

private:
    static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    static uint64_t splitmix64(uint64_t& x) {
        x += 0x9e3779b97f4a7c15ull;
        uint64_t z = x;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    uint64_t state_[4];
    bool has_cached_ = false;
    double cached_ = 0.0;
};

}  // namespace ucr
