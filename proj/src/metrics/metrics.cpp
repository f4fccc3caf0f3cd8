#include "hdst/metrics/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

namespace hdst::metrics {

namespace {

void check_pair(const HsiCube& x, const HsiCube& y, const char* what) {
    if (!x.same_shape(y))
        throw ShapeError(std::string(what) + ": shape mismatch " + x.shape_string() + " vs " + y.shape_string());
    if (x.bands == 0 || x.plane() == 0) throw ShapeError(std::string(what) + ": empty cube");
}

void check_peak(double peak, const char* what) {
    if (!(std::isfinite(peak) && peak > 0.0)) throw std::invalid_argument(std::string(what) + ": peak must be finite and > 0");
}

double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / double(v.size());
}

std::vector<double> gaussian_taps() {
    std::vector<double> g(kSsimWindow);
    const double c = double(kSsimWindow / 2);
    double total = 0.0;
    for (std::size_t i = 0; i < kSsimWindow; ++i) {
        const double d = double(i) - c;
        g[i] = std::exp(-d * d / (2.0 * kSsimSigma * kSsimSigma));
        total += g[i];
    }
    for (double& v : g) v /= total;
    return g;
}

// Separable valid-mode filter of an h x w plane: (h-10) x (w-10) result.
std::vector<double> filter_valid(const std::vector<double>& in, std::size_t h, std::size_t w, const std::vector<double>& g) {
    const std::size_t k = g.size(), oh = h - k + 1, ow = w - k + 1;
    std::vector<double> rows(h * ow), out(oh * ow);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (std::size_t j = 0; j < k; ++j) acc += g[j] * in[y * w + x + j];
            rows[y * ow + x] = acc;
        }
    for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (std::size_t i = 0; i < k; ++i) acc += g[i] * rows[(y + i) * ow + x];
            out[y * ow + x] = acc;
        }
    return out;
}

double ssim_band(const float* xp, const float* yp, std::size_t h, std::size_t w, double peak, const std::vector<double>& g) {
    const std::size_t n = h * w;
    std::vector<double> x(n), y(n), xx(n), yy(n), xy(n);
    for (std::size_t i = 0; i < n; ++i) {
        x[i] = xp[i], y[i] = yp[i];
        xx[i] = x[i] * x[i], yy[i] = y[i] * y[i], xy[i] = x[i] * y[i];
    }
    const auto mx = filter_valid(x, h, w, g), my = filter_valid(y, h, w, g);
    const auto sxx = filter_valid(xx, h, w, g), syy = filter_valid(yy, h, w, g), sxy = filter_valid(xy, h, w, g);
    const double c1 = (0.01 * peak) * (0.01 * peak), c2 = (0.03 * peak) * (0.03 * peak);
    double total = 0.0;
    for (std::size_t i = 0; i < mx.size(); ++i) {
        const double vx = sxx[i] - mx[i] * mx[i], vy = syy[i] - my[i] * my[i], cxy = sxy[i] - mx[i] * my[i];
        total += ((2.0 * mx[i] * my[i] + c1) * (2.0 * cxy + c2)) /
                 ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
    }
    return total / double(mx.size());
}

}  // namespace

BandScores psnr(const HsiCube& x, const HsiCube& y, double peak) {
    check_pair(x, y, "psnr");
    check_peak(peak, "psnr");
    BandScores s;
    s.per_band.resize(x.bands);
    const std::size_t n = x.plane();
#pragma omp parallel for schedule(static)
    for (std::size_t b = 0; b < x.bands; ++b) {
        const float *xp = x.band(b), *yp = y.band(b);
        long double acc = 0.0L;
        for (std::size_t i = 0; i < n; ++i) {
            const double d = double(xp[i]) - double(yp[i]);
            acc += d * d;
        }
        const double mse = static_cast<double>(acc / n);
        s.per_band[b] = mse == 0.0 ? kPsnrCap : std::min(kPsnrCap, 10.0 * std::log10(peak * peak / mse));
    }
    s.mean = mean_of(s.per_band);
    return s;
}

BandScores ssim(const HsiCube& x, const HsiCube& y, double peak) {
    check_pair(x, y, "ssim");
    check_peak(peak, "ssim");
    if (x.height < kSsimWindow || x.width < kSsimWindow)
        throw ShapeError("ssim: bands must be at least 11x11, got " + x.shape_string());
    const auto g = gaussian_taps();
    BandScores s;
    s.per_band.resize(x.bands);
#pragma omp parallel for schedule(static)
    for (std::size_t b = 0; b < x.bands; ++b) s.per_band[b] = ssim_band(x.band(b), y.band(b), x.height, x.width, peak, g);
    s.mean = mean_of(s.per_band);
    return s;
}

SamResult sam(const HsiCube& x, const HsiCube& y) {
    check_pair(x, y, "sam");
    const std::size_t n = x.plane();
    SamResult r;
    double total = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
        double nx = 0.0, ny = 0.0;
        for (std::size_t b = 0; b < x.bands; ++b) {
            const double a = x.band(b)[p], c = y.band(b)[p];
            nx += a * a, ny += c * c;
        }
        if (nx == 0.0 || ny == 0.0) {
            ++r.skipped;
            continue;
        }
        // angle = 2 atan2(|u - v|, |u + v|) for unit u, v; equal to the clamped
        // arccos form but without its loss of precision near 0 and 180 degrees
        nx = std::sqrt(nx), ny = std::sqrt(ny);
        double dm = 0.0, dp = 0.0;
        for (std::size_t b = 0; b < x.bands; ++b) {
            const double u = x.band(b)[p] / nx, v = y.band(b)[p] / ny;
            dm += (u - v) * (u - v), dp += (u + v) * (u + v);
        }
        total += 2.0 * std::atan2(std::sqrt(dm), std::sqrt(dp));
        ++r.valid;
    }
    if (r.valid == 0) throw MetricError("sam: every pixel has an all-zero spectrum");
    r.mean_degrees = total / double(r.valid) * 180.0 / std::numbers::pi;
    return r;
}

MetricReport evaluate_pair(const HsiCube& estimate, const HsiCube& truth, std::optional<double> peak) {
    check_pair(estimate, truth, "evaluate");
    MetricReport r;
    r.data_peak = peak ? *peak : *std::max_element(truth.data.begin(), truth.data.end());
    if (!(r.data_peak > 0.0)) throw MetricError("evaluate: ground-truth maximum is not positive, pass an explicit peak");
    const auto p = psnr(estimate, truth, r.data_peak);
    const auto s = ssim(estimate, truth, r.data_peak);
    const auto a = sam(estimate, truth);
    r.per_band_psnr = p.per_band;
    r.per_band_ssim = s.per_band;
    r.mean_psnr = p.mean;
    r.mean_ssim = s.mean;
    r.mean_sam = a.mean_degrees;
    r.sam_skipped = a.skipped;
    return r;
}

nlohmann::json to_json(const MetricReport& r) {
    return {{"mean_psnr", r.mean_psnr},
            {"mean_ssim", r.mean_ssim},
            {"mean_sam", r.mean_sam},
            {"sam_skipped_pixels", r.sam_skipped},
            {"data_peak", r.data_peak},
            {"per_band_psnr", r.per_band_psnr},
            {"per_band_ssim", r.per_band_ssim},
            {"ssim_averaging", "per_band"}};
}

std::string format_table(const MetricReport& r) {
    std::string out;
    char line[128];
    std::snprintf(line, sizeof line, "%-6s %10s %8s\n", "band", "PSNR(dB)", "SSIM");
    out += line;
    for (std::size_t b = 0; b < r.per_band_psnr.size(); ++b) {
        std::snprintf(line, sizeof line, "%-6zu %10.4f %8.4f\n", b, r.per_band_psnr[b], r.per_band_ssim[b]);
        out += line;
    }
    std::snprintf(line, sizeof line, "%-6s %10.4f %8.4f\n", "mean", r.mean_psnr, r.mean_ssim);
    out += line;
    std::snprintf(line, sizeof line, "SAM %.4f deg (%zu pixels skipped), peak %.6g\n", r.mean_sam, r.sam_skipped, r.data_peak);
    out += line;
    return out;
}

}  // namespace hdst::metrics
