#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace prevcorr {

/// splitmix64 finalizer; full-period mixing of a 64-bit word.
inline std::uint64_t mix_bits(std::uint64_t z) noexcept {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

/// Seed for an independent substream identified by (seed, stream). Replicates
/// and per-category draws each get their own stream so results do not depend
/// on evaluation order.
inline std::uint64_t substream_seed(std::uint64_t seed, std::uint64_t stream) noexcept {
    return mix_bits(seed ^ mix_bits(stream));
}

inline std::mt19937_64 make_engine(std::uint64_t seed, std::uint64_t stream = 0) {
    return std::mt19937_64(substream_seed(seed, stream));
}

/// One multinomial draw over `weights` via sequential binomial splitting.
/// Weights need not be normalized; if all weights are zero the draw is all
/// zeros. O(weights.size()) regardless of n.
inline std::vector<std::int64_t> multinomial_draw(std::mt19937_64& engine, std::int64_t n,
                                                  std::span<const double> weights) {
    const std::size_t k = weights.size();
    std::vector<std::int64_t> counts(k, 0);
    if (k == 0 || n <= 0) return counts;

    // Backward partial sums keep the conditional probabilities stable.
    std::vector<double> tail(k + 1, 0.0);
    for (std::size_t j = k; j-- > 0;) tail[j] = tail[j + 1] + weights[j];
    if (tail[0] <= 0.0) return counts;

    std::size_t last = k - 1;
    while (last > 0 && weights[last] <= 0.0) --last;

    std::int64_t remaining = n;
    for (std::size_t j = 0; j < last && remaining > 0; ++j) {
        if (weights[j] <= 0.0) continue;
        double q = weights[j] / tail[j];
        if (q > 1.0) q = 1.0;
        std::binomial_distribution<std::int64_t> bin(remaining, q);
        const std::int64_t x = bin(engine);
        counts[j] = x;
        remaining -= x;
    }
    counts[last] += remaining;
    return counts;
}

} // namespace prevcorr
