#include "hdst/noise/noise.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>

#include "hdst/rng.hpp"

namespace hdst::noise {

namespace {

constexpr std::uint64_t kSelectTag = 1, kGaussTag = 2, kStructTag = 3;

void check_range(const Range& r, const char* name, double lo, double hi) {
    if (!(std::isfinite(r.first) && std::isfinite(r.second)))
        throw std::invalid_argument(std::string("noise spec: ") + name + " must be finite");
    if (r.first > r.second) throw std::invalid_argument(std::string("noise spec: ") + name + " must satisfy lo <= hi");
    if (r.first < lo || r.second > hi)
        throw std::invalid_argument(std::string("noise spec: ") + name + " must lie within [" + std::to_string(lo) + ", " +
                                    std::to_string(hi) + "]");
}

// First k entries of a seeded partial Fisher-Yates shuffle of 0..n-1, sorted.
std::vector<std::size_t> choose(CounterRng& rng, std::size_t n, std::size_t k) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t i = 0; i < k; ++i) std::swap(idx[i], idx[i + rng.below(n - i)]);
    idx.resize(k);
    std::sort(idx.begin(), idx.end());
    return idx;
}

std::size_t rounded_count(double fraction, std::size_t n) {
    return std::min(n, static_cast<std::size_t>(std::llround(fraction * double(n))));
}

}  // namespace

const char* to_string(NoisePattern p) {
    switch (p) {
        case NoisePattern::noniid_gaussian: return "noniid_gaussian";
        case NoisePattern::gaussian_stripe: return "gaussian_stripe";
        case NoisePattern::gaussian_deadline: return "gaussian_deadline";
        case NoisePattern::gaussian_impulse: return "gaussian_impulse";
        case NoisePattern::mixture: return "mixture";
    }
    return "unknown";
}

NoisePattern noise_pattern_from_string(const std::string& s) {
    for (auto p : {NoisePattern::noniid_gaussian, NoisePattern::gaussian_stripe, NoisePattern::gaussian_deadline,
                   NoisePattern::gaussian_impulse, NoisePattern::mixture})
        if (s == to_string(p)) return p;
    throw std::invalid_argument("unknown noise pattern '" + s + "'");
}

const char* to_string(SubPattern p) {
    switch (p) {
        case SubPattern::none: return "none";
        case SubPattern::stripe: return "stripe";
        case SubPattern::deadline: return "deadline";
        case SubPattern::impulse: return "impulse";
    }
    return "unknown";
}

void NoiseSpec::validate() const {
    check_range(sigma_range, "sigma_range", 0.0, INFINITY);
    check_range(column_fraction_range, "column_fraction_range", 0.0, 1.0);
    check_range(impulse_ratio_range, "impulse_ratio_range", 0.0, 1.0);
    if (!(affected_band_fraction >= 0.0 && affected_band_fraction <= 1.0))
        throw std::invalid_argument("noise spec: affected_band_fraction must lie within [0, 1]");
    if (!(std::isfinite(stripe_offset) && stripe_offset >= 0.0))
        throw std::invalid_argument("noise spec: stripe_offset must be finite and >= 0");
}

nlohmann::json to_json(const NoiseSpec& s) {
    auto range = [](const Range& r) { return nlohmann::json::array({r.first, r.second}); };
    return {{"pattern", to_string(s.pattern)},
            {"sigma_range", range(s.sigma_range)},
            {"affected_band_fraction", s.affected_band_fraction},
            {"column_fraction_range", range(s.column_fraction_range)},
            {"impulse_ratio_range", range(s.impulse_ratio_range)},
            {"stripe_offset", s.stripe_offset},
            {"seed", s.seed}};
}

NoiseSpec noise_spec_from_json(const nlohmann::json& j, NoiseSpec s) {
    if (!j.is_object()) throw std::invalid_argument("noise spec must be an object");
    static const char* known[] = {"pattern", "sigma_range", "affected_band_fraction", "column_fraction_range",
                                  "impulse_ratio_range", "stripe_offset", "seed"};
    for (const auto& [key, _] : j.items())
        if (std::none_of(std::begin(known), std::end(known), [&](const char* k) { return key == k; }))
            throw std::invalid_argument("noise spec: unknown field '" + key + "'");
    try {
        auto range = [&](const char* key, Range& r) {
            if (!j.contains(key)) return;
            const auto& v = j.at(key);
            if (!v.is_array() || v.size() != 2) throw std::invalid_argument(std::string("noise spec: ") + key + " must be [lo, hi]");
            r = {v[0].get<double>(), v[1].get<double>()};
        };
        if (j.contains("pattern")) s.pattern = noise_pattern_from_string(j.at("pattern").get<std::string>());
        range("sigma_range", s.sigma_range);
        range("column_fraction_range", s.column_fraction_range);
        range("impulse_ratio_range", s.impulse_ratio_range);
        if (j.contains("affected_band_fraction")) s.affected_band_fraction = j.at("affected_band_fraction").get<double>();
        if (j.contains("stripe_offset")) s.stripe_offset = j.at("stripe_offset").get<double>();
        if (j.contains("seed")) s.seed = j.at("seed").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(std::string("noise spec: ") + e.what());
    }
    return s;
}

nlohmann::json to_json(const NoiseRealization& r) {
    nlohmann::json bands = nlohmann::json::array();
    for (const auto& b : r.bands) {
        nlohmann::json e{{"band", b.band}, {"sigma", b.sigma}, {"sub_pattern", to_string(b.sub)}};
        if (b.sub == SubPattern::stripe || b.sub == SubPattern::deadline) {
            e["column_fraction"] = b.column_fraction;
            e["columns"] = b.columns;
            if (b.sub == SubPattern::stripe) e["offsets"] = b.offsets;
        }
        if (b.sub == SubPattern::impulse) {
            e["impulse_ratio"] = b.impulse_ratio;
            e["impulse_count"] = b.impulse_count;
        }
        bands.push_back(std::move(e));
    }
    return {{"affected_bands", r.affected}, {"bands", std::move(bands)}};
}

HsiCube apply_noise(const HsiCube& clean, const NoiseSpec& spec, NoiseRealization* realization) {
    spec.validate();
    const std::size_t B = clean.bands, H = clean.height, W = clean.width, plane = H * W;
    NoiseRealization log;
    log.bands.resize(B);

    CounterRng select(CounterRng::derive(spec.seed, kSelectTag));
    for (std::size_t b = 0; b < B; ++b) {
        log.bands[b].band = b;
        log.bands[b].sigma = select.uniform(spec.sigma_range.first, spec.sigma_range.second);
    }
    if (spec.pattern != NoisePattern::noniid_gaussian) {
        log.affected = choose(select, B, rounded_count(spec.affected_band_fraction, B));
        for (std::size_t b : log.affected) {
            SubPattern sub = SubPattern::none;
            switch (spec.pattern) {
                case NoisePattern::gaussian_stripe: sub = SubPattern::stripe; break;
                case NoisePattern::gaussian_deadline: sub = SubPattern::deadline; break;
                case NoisePattern::gaussian_impulse: sub = SubPattern::impulse; break;
                default: break;
            }
            log.bands[b].sub = sub;
        }
        if (spec.pattern == NoisePattern::mixture)
            for (std::size_t b : log.affected)
                log.bands[b].sub = std::array{SubPattern::stripe, SubPattern::deadline, SubPattern::impulse}[select.below(3)];
    }

    HsiCube out = clean;
    std::vector<double> field(plane);
    for (std::size_t b = 0; b < B; ++b) {
        BandRealization& r = log.bands[b];
        float* dst = out.band(b);
        const float* src = clean.band(b);

        CounterRng gauss(CounterRng::derive(spec.seed, kGaussTag, b));
        for (std::size_t i = 0; i < plane; ++i) field[i] = double(src[i]) + r.sigma * gauss.normal();

        CounterRng st(CounterRng::derive(spec.seed, kStructTag, b));
        switch (r.sub) {
            case SubPattern::stripe:
            case SubPattern::deadline: {
                r.column_fraction = st.uniform(spec.column_fraction_range.first, spec.column_fraction_range.second);
                r.columns = choose(st, W, rounded_count(r.column_fraction, W));
                for (std::size_t x : r.columns) {
                    const double off = r.sub == SubPattern::stripe ? st.uniform(-spec.stripe_offset, spec.stripe_offset) : 0.0;
                    if (r.sub == SubPattern::stripe) r.offsets.push_back(off);
                    for (std::size_t y = 0; y < H; ++y) {
                        double& v = field[y * W + x];
                        v = r.sub == SubPattern::stripe ? v + off : 0.0;
                    }
                }
                break;
            }
            case SubPattern::impulse: {
                r.impulse_ratio = st.uniform(spec.impulse_ratio_range.first, spec.impulse_ratio_range.second);
                r.impulse_count = rounded_count(r.impulse_ratio, plane);
                for (std::size_t i : choose(st, plane, r.impulse_count)) field[i] = st.below(2) ? 1.0 : 0.0;
                break;
            }
            case SubPattern::none:
                break;
        }
        for (std::size_t i = 0; i < plane; ++i) dst[i] = static_cast<float>(field[i]);
    }
    if (realization) *realization = std::move(log);
    return out;
}

HsiCube synthetic_scene(std::size_t bands, std::size_t height, std::size_t width, std::uint64_t seed) {
    constexpr std::size_t K = 3;
    constexpr double two_pi = 2.0 * std::numbers::pi;
    CounterRng rng(seed);
    std::array<std::vector<double>, K> spectra;
    for (auto& s : spectra) {
        const double mu = rng.uniform(0.0, 1.0), wd = rng.uniform(0.15, 0.5), amp = rng.uniform(0.3, 0.7);
        s.resize(bands);
        for (std::size_t b = 0; b < bands; ++b) {
            const double lam = bands > 1 ? double(b) / double(bands - 1) : 0.5;
            s[b] = 0.15 + amp * std::exp(-std::pow((lam - mu) / wd, 2.0));
        }
    }
    struct Wave {
        double fy, fx, phase, amp;
    };
    std::array<std::array<Wave, 3>, K> waves;
    for (auto& ws : waves)
        for (auto& w : ws) w = {double(1 + rng.below(3)), double(1 + rng.below(3)), rng.uniform(0, two_pi), rng.uniform(0.5, 2.0)};

    HsiCube c(bands, height, width);
    c.wavelength_nm = std::pair{400.0, 700.0};
    for (std::size_t y = 0; y < height; ++y)
        for (std::size_t x = 0; x < width; ++x) {
            std::array<double, K> a{};
            double total = 0.0;
            for (std::size_t k = 0; k < K; ++k) {
                double s = 0.0;
                for (const auto& w : waves[k])
                    s += w.amp * std::sin(two_pi * (w.fy * double(y) / double(height) + w.fx * double(x) / double(width)) + w.phase);
                a[k] = std::exp(s);
                total += a[k];
            }
            for (std::size_t b = 0; b < bands; ++b) {
                double v = 0.0;
                for (std::size_t k = 0; k < K; ++k) v += a[k] / total * spectra[k][b];
                c.at(b, y, x) = static_cast<float>(v);
            }
        }
    return c;
}

}  // namespace hdst::noise
