#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace bsgen {

/// SplitMix64 finalizer. Bijective on 64-bit words.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Seed of replicate `index` under `master`:
///
///     splitmix64(splitmix64(master) ^ splitmix64(index))
///
/// Injective in `index` for a fixed master, and fixed across platforms.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) noexcept {
    return splitmix64(splitmix64(master) ^ splitmix64(index));
}

/// Random stream used by every sampler in the library.
///
/// Wraps std::mt19937_64 (whose output sequence is fixed by the standard) and
/// derives all variates with hand-written transforms so that a given seed
/// produces the same draws with any standard library.
class RandomStream {
  public:
    explicit RandomStream(std::uint64_t seed) : engine_(seed), seed_(seed) {}

    /// Stream for replicate `index` of an experiment seeded with `master`.
    static RandomStream for_replicate(std::uint64_t master, std::uint64_t index) {
        return RandomStream(derive_seed(master, index));
    }

    std::uint64_t seed() const noexcept { return seed_; }

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Uniform on (0, 1].
    double uniform_pos() { return 1.0 - uniform(); }

    /// Uniform integer on [0, n). Lemire's multiply-shift with rejection; n > 0.
    std::uint64_t uniform_index(std::uint64_t n) {
        unsigned __int128 m = static_cast<unsigned __int128>(engine_()) * n;
        auto low = static_cast<std::uint64_t>(m);
        if (low < n) {
            const std::uint64_t threshold = (0 - n) % n;
            while (low < threshold) {
                m = static_cast<unsigned __int128>(engine_()) * n;
                low = static_cast<std::uint64_t>(m);
            }
        }
        return static_cast<std::uint64_t>(m >> 64);
    }

    /// Exponential with the given rate (> 0).
    double exponential(double rate) { return -std::log(uniform_pos()) / rate; }

    bool bernoulli(double p) { return uniform() < p; }

  private:
    std::mt19937_64 engine_;
    std::uint64_t seed_;
};

} // namespace bsgen
