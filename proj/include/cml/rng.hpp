#pragma once

#include <cstdint>
#include <vector>

namespace cml {

// xoshiro256** seeded through SplitMix64. All stochastic choices in the
// project run through this generator so a seed fixes the whole run,
// independent of platform or standard library.
class Rng {
public:
    explicit Rng(std::uint64_t seed) { reseed(seed, 0); }
    Rng(std::uint64_t seed, std::uint64_t stream) { reseed(seed, stream); }

    void reseed(std::uint64_t seed, std::uint64_t stream);

    std::uint64_t next_u64();

    // Uniform double in [0, 1), 53-bit resolution.
    double uniform();

    // Uniform integer in [0, bound). bound must be > 0.
    std::uint64_t uniform_below(std::uint64_t bound);

    // Standard normal via Box-Muller; the second draw of each pair is cached.
    double normal();

    // Fisher-Yates shuffle.
    template <typename T>
    void shuffle(std::vector<T>& items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(uniform_below(i));
            std::swap(items[i - 1], items[j]);
        }
    }

private:
    std::uint64_t state_[4] = {0, 0, 0, 0};
    double cached_normal_ = 0.0;
    bool has_cached_normal_ = false;
};

std::uint64_t splitmix64(std::uint64_t& state);

}  // namespace cml
