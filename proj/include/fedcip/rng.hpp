#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace fedcip {

// Every random draw in the library flows through this header. Distributions
// are hand-rolled on top of std::mt19937_64 (whose output sequence is fixed
// by the standard), so results are bit-identical across platforms and
// standard libraries.

namespace seed_domain {
// Domain tags keep independently-seeded streams decorrelated even when they
// share a master seed. Mixed into seeds via mix_seed(); the tag values are
// part of the on-disk contract: together with the master seed they are all
// that is needed to regenerate selections, regions, slots and watermarks.
inline constexpr std::uint64_t kDataGen = 0x01;
inline constexpr std::uint64_t kPartition = 0x02;
inline constexpr std::uint64_t kModelInit = 0x03;
inline constexpr std::uint64_t kBatchOrder = 0x04;
inline constexpr std::uint64_t kRegions = 0x05;
inline constexpr std::uint64_t kSlots = 0x06;
inline constexpr std::uint64_t kWatermarkBits = 0x07;
inline constexpr std::uint64_t kSelection = 0x08;
inline constexpr std::uint64_t kTracking = 0x09;
inline constexpr std::uint64_t kAttack = 0x0a;
}  // namespace seed_domain

/// SplitMix64 finalizer; the mixing primitive behind mix_seed.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Folds a master seed with a domain tag and optional indices into one
/// derived seed: state starts at the master seed and each word w updates
/// state = splitmix64(state ^ splitmix64(w)). This chain is the documented
/// derivation used for all per-(cycle, client) randomness.
constexpr std::uint64_t mix_seed(std::uint64_t master,
                                 std::initializer_list<std::uint64_t> words) {
    std::uint64_t state = splitmix64(master);
    for (std::uint64_t w : words) {
        state = splitmix64(state ^ splitmix64(w));
    }
    return state;
}

/// Deterministic random engine with portable distributions.
class Engine {
public:
    explicit Engine(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    /// Unbiased integer in [0, n). n must be > 0.
    std::uint64_t below(std::uint64_t n) {
        // Rejection sampling above the largest multiple of n.
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x;
        do {
            x = gen_();
        } while (x >= limit);
        return x % n;
    }

    /// Uniform double in [0, 1) with 53 random bits.
    double unit() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    /// Uniform double in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * unit(); }

    /// Standard normal via Box-Muller (cosine branch only, so one draw
    /// consumes exactly two engine outputs).
    double normal();

    /// Fisher-Yates shuffle.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[below(i)]);
        }
    }

    /// k distinct values from [0, n), in draw order.
    std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k);

private:
    std::mt19937_64 gen_;
};

}  // namespace fedcip
