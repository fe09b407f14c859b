#pragma once

#include <cstdint>

namespace pcid {

/// SplitMix64. Small, seedable and splittable; its output sequence is fixed by
/// the algorithm so traces reproduce across platforms and standard libraries.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed = 0) noexcept : state_(seed) {}

    std::uint64_t next() noexcept {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    /// Uniform double in [0, 1) with 53 random bits.
    double next_unit() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    /// Uniform double in [lo, hi].
    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * next_unit(); }

    /// Independent child stream; advances this generator by one draw.
    SplitMix64 split() noexcept { return SplitMix64(next() ^ 0x6A09E667F3BCC909ULL); }

    [[nodiscard]] std::uint64_t state() const noexcept { return state_; }

private:
    std::uint64_t state_;
};

}  // namespace pcid
