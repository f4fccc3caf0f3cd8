#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "hdst/noise/cube.hpp"
#include "json.hpp"

namespace hdst::metrics {

using noise::HsiCube;

/// Metric undefined for the given input (e.g. every spectrum is zero).
class MetricError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

constexpr double kPsnrCap = 100.0;  // reported for bands with zero MSE
constexpr std::size_t kSsimWindow = 11;
constexpr double kSsimSigma = 1.5;

struct BandScores {
    std::vector<double> per_band;
    double mean = 0.0;
};

/// 10 log10(peak^2 / MSE) per band, capped at kPsnrCap. Throws ShapeError /
/// std::invalid_argument on shape mismatch or peak <= 0.
BandScores psnr(const HsiCube& x, const HsiCube& y, double peak);

/// Single-scale SSIM per band: 11x11 Gaussian window (sigma 1.5, normalized),
/// C1 = (0.01 peak)^2, C2 = (0.03 peak)^2, averaged over the valid region
/// (no padding), then averaged over bands.
BandScores ssim(const HsiCube& x, const HsiCube& y, double peak);

struct SamResult {
    double mean_degrees = 0.0;
    std::size_t valid = 0;
    std::size_t skipped = 0;  // pixels where either spectrum is all zero
};
SamResult sam(const HsiCube& x, const HsiCube& y);

struct MetricReport {
    std::vector<double> per_band_psnr;
    std::vector<double> per_band_ssim;
    double mean_psnr = 0.0;
    double mean_ssim = 0.0;
    double mean_sam = 0.0;
    std::size_t sam_skipped = 0;
    double data_peak = 0.0;
};

/// `estimate` is scored against `truth`. Without `peak` the dynamic range is
/// max(truth).
MetricReport evaluate_pair(const HsiCube& estimate, const HsiCube& truth, std::optional<double> peak = std::nullopt);

nlohmann::json to_json(const MetricReport& r);
/// Per-band rows followed by a mean row, columns padded to line up.
std::string format_table(const MetricReport& r);

}  // namespace hdst::metrics
