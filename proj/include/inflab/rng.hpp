#pragma once

#include <cstdint>
#include <random>
#include <utility>
#include <vector>

// All randomness in the library flows through this wrapper. std::mt19937_64
// is fully specified by the standard, but the std distributions and
// std::shuffle are not, so bounded draws, reals, and shuffling are
// implemented here to keep artifacts byte-identical across toolchains.

namespace inflab {

class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    // Uniform integer in [0, bound). Rejection sampling, exact.
    std::uint64_t bounded(std::uint64_t bound) {
        if (bound == 0) return 0;
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
        std::uint64_t x = engine_();
        while (x >= limit) x = engine_();
        return x % bound;
    }

    // Uniform double in [0, 1) with 53 bits of precision.
    double real() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    // Fisher-Yates.
    template <typename T>
    void shuffle(std::vector<T>& items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(bounded(i));
            std::swap(items[i - 1], items[j]);
        }
    }

    // Derives an independent deterministic stream, e.g. one per
    // (epoch, instance) so entries can be noised in parallel.
    static Rng stream(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
        return Rng(mix(mix(mix(0x9E3779B97F4A7C15ull, seed), a), b));
    }

    // Folds a tag into a seed, giving unrelated sub-streams per purpose.
    static std::uint64_t derive(std::uint64_t seed, std::uint64_t tag) {
        return mix(seed, tag);
    }

private:
    // splitmix64 finalizer.
    static std::uint64_t mix(std::uint64_t h, std::uint64_t v) {
        h += 0x9E3779B97F4A7C15ull + v;
        h = (h ^ (h >> 30)) * 0xBF58476D1CE4E5B9ull;
        h = (h ^ (h >> 27)) * 0x94D049BB133111EBull;
        return h ^ (h >> 31);
    }

    std::mt19937_64 engine_;
};

}  // namespace inflab
