#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>

namespace hdst {

/// SplitMix64 finalizer (Steele, Lea & Flood 2014):
///   z += 0x9E3779B97F4A7C15;          (applied by the caller, see below)
///   z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9;
///   z = (z ^ (z >> 27)) * 0x94D049BB133111EB;
///   return z ^ (z >> 31);
std::uint64_t splitmix64_mix(std::uint64_t z) noexcept;

/// 64-bit FNV-1a, used to turn names into stream tags and for checksums.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) noexcept;

/// Counter-based generator. Draw number i (0-based) of stream `key` is
///   splitmix64_mix(key + (i + 1) * 0x9E3779B97F4A7C15)
/// which is exactly the classic SplitMix64 sequence seeded with `key`.
///
/// Derived values:
///   uniform()  = (draw >> 11) * 2^-53                  in [0, 1)
///   normal()   = sqrt(-2 ln(1 - u1)) * cos(2 pi u2)   two uniforms per normal
///   below(n)   = floor(uniform() * n)
///
/// Sub-streams: derive(key, tag) = splitmix64_mix(key ^ splitmix64_mix(tag + 0x632BE59BD9B4E019)).
class CounterRng {
public:
    explicit CounterRng(std::uint64_t key, std::uint64_t counter = 0) noexcept : key_(key), counter_(counter) {}

    std::uint64_t next_u64() noexcept;
    double uniform() noexcept;
    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
    double normal() noexcept;
    std::size_t below(std::size_t n) noexcept;

    std::uint64_t key() const noexcept { return key_; }
    std::uint64_t counter() const noexcept { return counter_; }

    static std::uint64_t derive(std::uint64_t key, std::uint64_t tag) noexcept;
    static std::uint64_t derive(std::uint64_t key, std::uint64_t tag_a, std::uint64_t tag_b) noexcept {
        return derive(derive(key, tag_a), tag_b);
    }

private:
    std::uint64_t key_;
    std::uint64_t counter_;
};

}  // namespace hdst
