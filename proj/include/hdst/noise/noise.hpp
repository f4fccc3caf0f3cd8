#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "hdst/noise/cube.hpp"
#include "json.hpp"

namespace hdst::noise {

enum class NoisePattern { noniid_gaussian, gaussian_stripe, gaussian_deadline, gaussian_impulse, mixture };
const char* to_string(NoisePattern p);
NoisePattern noise_pattern_from_string(const std::string& s);

using Range = std::pair<double, double>;

/// Intensities are on the [0,1] scale; sigma 10/255 means 10 grey levels of
/// an 8-bit image.
struct NoiseSpec {
    NoisePattern pattern = NoisePattern::noniid_gaussian;
    Range sigma_range{10.0 / 255.0, 70.0 / 255.0};
    double affected_band_fraction = 1.0 / 3.0;
    Range column_fraction_range{0.05, 0.15};
    Range impulse_ratio_range{0.1, 0.7};
    double stripe_offset = 0.25;  // stripe offsets are U[-stripe_offset, stripe_offset]
    std::uint64_t seed = 0;

    /// Throws std::invalid_argument naming the bad field.
    void validate() const;
    bool operator==(const NoiseSpec&) const = default;
};

nlohmann::json to_json(const NoiseSpec& s);
/// Fields absent from `j` keep their values from `base`; unknown fields are rejected.
NoiseSpec noise_spec_from_json(const nlohmann::json& j, NoiseSpec base = {});

enum class SubPattern { none, stripe, deadline, impulse };
const char* to_string(SubPattern p);

struct BandRealization {
    std::size_t band = 0;
    double sigma = 0.0;
    SubPattern sub = SubPattern::none;
    double column_fraction = 0.0;         // stripe / deadline
    std::vector<std::size_t> columns;     // sorted
    std::vector<double> offsets;          // stripe, parallel to columns
    double impulse_ratio = 0.0;           // drawn ratio
    std::size_t impulse_count = 0;        // pixels forced to 0 or 1
};

/// Everything apply_noise drew, band by band.
struct NoiseRealization {
    std::vector<BandRealization> bands;
    std::vector<std::size_t> affected;  // sorted band indices
};
nlohmann::json to_json(const NoiseRealization& r);

/// Random streams, all CounterRng (SplitMix64) with keys derived from spec.seed:
///   selection stream  derive(seed, 1):     sigma_b for b = 0..B-1, then the affected band
///                                          subset (partial Fisher-Yates), then mixture sub-patterns
///   Gaussian field    derive(seed, 2, b):  one normal per pixel of band b, row-major
///   structured noise  derive(seed, 3, b):  column fraction, columns, offsets / impulse ratio,
///                                          pixels, salt-or-pepper bits
/// Gaussian noise is added first; structured noise goes on top. No clipping.
HsiCube apply_noise(const HsiCube& clean, const NoiseSpec& spec, NoiseRealization* realization = nullptr);

/// Deterministic smooth test scene: a few Gaussian-bump endmember spectra mixed
/// by low-frequency abundance maps, values in [0.15, 0.85].
HsiCube synthetic_scene(std::size_t bands, std::size_t height, std::size_t width, std::uint64_t seed);

}  // namespace hdst::noise
