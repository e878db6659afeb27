// Counter-based 64-bit generator used for every random draw in the library.
//
// Output i of a stream is splitmix64's finalizer applied to
// seed + (i + 1) * 0x9E3779B97F4A7C15, so the sequence is a pure function of
// (seed, i) and identical on every platform. Bounded integers use rejection
// sampling; normals use Box-Muller on two 53-bit uniforms.
#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace grok {

class CounterRng {
public:
    explicit CounterRng(std::uint64_t seed) : seed_(seed) {}

    std::uint64_t next_u64() {
        ++counter_;
        return mix(seed_ + counter_ * 0x9E3779B97F4A7C15ULL);
    }

    // Uniform integer in [0, bound), bound > 0, without modulo bias.
    std::uint64_t below(std::uint64_t bound) {
        const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % bound);
        std::uint64_t x;
        do {
            x = next_u64();
        } while (x >= limit);
        return x % bound;
    }

    // Uniform double in (0, 1].
    double uniform_open0() { return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53; }

    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = uniform_open0();
        const double u2 = uniform_open0();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    std::uint64_t counter() const noexcept { return counter_; }

    static std::uint64_t mix(std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

private:
    std::uint64_t seed_;
    std::uint64_t counter_ = 0;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

// Fisher-Yates, walking from the back.
template <class RandomIt>
void seeded_shuffle(RandomIt first, RandomIt last, std::uint64_t seed) {
    CounterRng rng(seed);
    auto n = static_cast<std::uint64_t>(last - first);
    for (std::uint64_t i = n; i > 1; --i) {
        std::uint64_t j = rng.below(i);
        using std::swap;
        swap(first[static_cast<std::ptrdiff_t>(i - 1)], first[static_cast<std::ptrdiff_t>(j)]);
    }
}

}  // namespace grok
