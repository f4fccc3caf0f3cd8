#include "hdst/rng.hpp"

#include <cmath>
#include <numbers>

namespace hdst {

namespace {
constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;
}

std::uint64_t splitmix64_mix(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h) noexcept {
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t CounterRng::next_u64() noexcept {
    ++counter_;
    return splitmix64_mix(key_ + counter_ * kGolden);
}

double CounterRng::uniform() noexcept {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double CounterRng::normal() noexcept {
    const double u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(1.0 - u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::size_t CounterRng::below(std::size_t n) noexcept {
    if (n == 0) return 0;
    const auto r = static_cast<std::size_t>(uniform() * static_cast<double>(n));
    return r < n ? r : n - 1;
}

std::uint64_t CounterRng::derive(std::uint64_t key, std::uint64_t tag) noexcept {
    return splitmix64_mix(key ^ splitmix64_mix(tag + 0x632BE59BD9B4E019ULL));
}

}  // namespace hdst
