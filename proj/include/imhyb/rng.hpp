#pragma once

#include <cstdint>

namespace imhyb {

/// Counter-based generator: the i-th draw of a stream is a SplitMix64 hash of
/// (key, i). Substreams are keyed by hashing the parent key with a stream id,
/// so results never depend on the order in which streams are consumed.
class CounterRng {
public:
    explicit CounterRng(std::uint64_t seed) : key_(mix(seed ^ 0x6a09e667f3bcc909ULL)) {}

    [[nodiscard]] CounterRng substream(std::uint64_t id) const {
        CounterRng r(0);
        r.key_ = mix(key_ + mix(id + 0x9e3779b97f4a7c15ULL));
        return r;
    }

    std::uint64_t next_u64() { return mix(key_ + (counter_++) * 0x9e3779b97f4a7c15ULL); }

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) {
        // Multiply-shift; bias is < n / 2^64 and irrelevant for sample selection.
        return static_cast<std::uint64_t>((static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

    [[nodiscard]] std::uint64_t counter() const { return counter_; }

private:
    static std::uint64_t mix(std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

}  // namespace imhyb
