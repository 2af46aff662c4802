#pragma once

// Platform-stable pseudo-random numbers for sampling.
//
// Generator: xoshiro256** (Blackman & Vigna), state seeded from a single
// 64-bit seed by four successive SplitMix64 outputs.
// Bounded draws: `below(n)` rejects raw outputs x < (2^64 - n) mod n and
// returns x mod n, which is unbiased.
// Shuffle: Fisher-Yates from the back, `for i = n-1 .. 1: swap(v[i], v[below(i+1)])`.
//
// Every step is integer arithmetic on uint64_t, so a given seed produces the
// same stream on every platform and compiler.

#include <cstdint>
#include <span>
#include <utility>

namespace exaranker {

class SplitMix64 {
public:
    explicit constexpr SplitMix64(std::uint64_t seed) noexcept : state_(seed) {}
    constexpr std::uint64_t next() noexcept {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

private:
    std::uint64_t state_;
};

class Xoshiro256StarStar {
public:
    using result_type = std::uint64_t;

    explicit constexpr Xoshiro256StarStar(std::uint64_t seed) noexcept {
        SplitMix64 sm(seed);
        for (auto& word : s_) word = sm.next();
    }

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return ~result_type{0}; }

    constexpr result_type operator()() noexcept {
        const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    /// Uniform integer in [0, n). n must be > 0.
    constexpr std::uint64_t below(std::uint64_t n) noexcept {
        const std::uint64_t threshold = (0 - n) % n;
        for (;;) {
            const std::uint64_t x = (*this)();
            if (x >= threshold) return x % n;
        }
    }

private:
    static constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept { return (x << k) | (x >> (64 - k)); }
    std::uint64_t s_[4]{};
};

template <typename T>
void fisher_yates(std::span<T> items, Xoshiro256StarStar& rng) {
    if (items.size() < 2) return;
    for (std::size_t i = items.size() - 1; i > 0; --i) {
        const auto j = static_cast<std::size_t>(rng.below(static_cast<std::uint64_t>(i) + 1));
        using std::swap;
        swap(items[i], items[j]);
    }
}

}  // namespace exaranker
