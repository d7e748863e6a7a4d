#pragma once

#include <cstdint>

namespace riskquant {

/**
 * DrawRng — counter-based random stream for Monte Carlo draws.
 *
 * The stream state is derived from (seed, draw_index) alone, so draw i
 * yields the same variates regardless of which thread or shard executes
 * it. This is what makes simulation results bit-identical across shard
 * counts and across serial/parallel execution.
 *
 * Core is splitmix64; the initial state is a hash of seed and index so
 * neighbouring draws start at unrelated points of the sequence.
 */
class DrawRng {
public:
    DrawRng(std::uint64_t seed, std::uint64_t draw_index)
        : state_(mix(mix(seed ^ 0x6A09E667F3BCC909ULL) ^
                     mix(draw_index + 0x9E3779B97F4A7C15ULL))) {}

    std::uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ULL;
        return mix(state_);
    }

    /// Uniform double in [0, 1) with 53 random bits.
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    /// Uniform integer in [0, n). n must be positive.
    std::size_t next_below(std::size_t n) {
        return static_cast<std::size_t>(
            (static_cast<__uint128_t>(next_u64()) * n) >> 64);
    }

private:
    static std::uint64_t mix(std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    std::uint64_t state_;
};

}  // namespace riskquant
