#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>

#include "doctest.h"
#include "hdst/noise/cube.hpp"
#include "hdst/noise/noise.hpp"
#include "hdst/noise/patches.hpp"
#include "hdst/rng.hpp"

using namespace hdst;
using namespace hdst::noise;

namespace {

HsiCube random_cube(std::size_t b, std::size_t h, std::size_t w, std::uint64_t seed) {
    HsiCube c(b, h, w);
    CounterRng rng(seed);
    for (float& v : c.data) v = static_cast<float>(rng.uniform());
    return c;
}

std::filesystem::path temp_path(const std::string& name) {
    return std::filesystem::temp_directory_path() / ("hdst_test_noise_" + name);
}

void write_bytes(const std::filesystem::path& p, const std::vector<unsigned char>& bytes) {
    std::ofstream f(p, std::ios::binary);
    f.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
}

CubeErrorCode decode_error(const std::vector<unsigned char>& bytes) {
    try {
        decode_cube(bytes);
    } catch (const CubeError& e) {
        return e.code();
    }
    FAIL("decode succeeded");
    return CubeErrorCode::open_failed;
}

NoiseSpec zero_spec(NoisePattern p) {
    NoiseSpec s;
    s.pattern = p;
    s.sigma_range = {0, 0};
    s.column_fraction_range = {0, 0};
    s.impulse_ratio_range = {0, 0};
    s.stripe_offset = 0;
    s.seed = 17;
    return s;
}

double sample_std(const std::vector<double>& v) {
    double m = 0;
    for (double x : v) m += x;
    m /= double(v.size());
    double s = 0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / double(v.size() - 1));
}

double correlation(const std::vector<double>& a, const std::vector<double>& b) {
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) ma += a[i], mb += b[i];
    ma /= double(a.size()), mb /= double(b.size());
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    return sab / std::sqrt(saa * sbb);
}

}  // namespace

TEST_CASE("cube save/load round trip is bit identical") {
    HsiCube c = random_cube(4, 8, 8, 3);
    c.wavelength_nm = std::pair{400.0, 1000.0};
    const auto p = temp_path("rt.hdc");
    save_cube(c, p.string());
    std::vector<std::string> warnings;
    const HsiCube back = load_cube(p.string(), &warnings);
    CHECK(back == c);
    CHECK(warnings.empty());
    CHECK(encode_cube(back) == encode_cube(c));
    std::filesystem::remove(p);

    HsiCube no_wl = random_cube(2, 3, 5, 4);
    CHECK(decode_cube(encode_cube(no_wl)) == no_wl);
}

TEST_CASE("cube decode errors have distinct codes") {
    const HsiCube c = random_cube(4, 8, 8, 5);
    auto bytes = encode_cube(c);

    SUBCASE("255 scalars for a 4x8x8 header") {
        bytes.resize(bytes.size() - 4);
        CHECK(decode_error(bytes) == CubeErrorCode::dimension_mismatch);
    }
    SUBCASE("payload ends inside a float") {
        bytes.resize(bytes.size() - 2);
        CHECK(decode_error(bytes) == CubeErrorCode::truncated_payload);
    }
    SUBCASE("bad magic") {
        bytes[0] = 'X';
        CHECK(decode_error(bytes) == CubeErrorCode::bad_magic);
    }
    SUBCASE("header cut short") {
        bytes.resize(20);
        CHECK(decode_error(bytes) == CubeErrorCode::truncated_header);
    }
    SUBCASE("non-finite payload") {
        const float nan = std::nanf("");
        std::memcpy(bytes.data() + bytes.size() - 4, &nan, 4);
        CHECK(decode_error(bytes) == CubeErrorCode::non_finite);
    }
    SUBCASE("missing file") {
        CHECK_THROWS_AS(load_cube("/nonexistent/dir/x.hdc"), CubeError);
    }
}

TEST_CASE("out-of-range values load with a warning") {
    HsiCube c(1, 2, 2, 0.5f);
    c.data[1] = 1.5f;
    c.data[2] = -0.25f;
    std::vector<std::string> warnings;
    const HsiCube back = decode_cube(encode_cube(c), "mem", &warnings);
    CHECK(back == c);
    REQUIRE(warnings.size() == 1);
    CHECK(warnings[0].find("2 values outside") != std::string::npos);
}

TEST_CASE("raw conversion handles dtype, byte order and interleave") {
    const std::size_t B = 3, H = 2, W = 4;
    const auto raw = temp_path("raw.bin"), side = temp_path("raw.json");
    auto value = [](std::size_t b, std::size_t y, std::size_t x) { return std::uint16_t(1000 * b + 100 * y + x); };

    std::vector<unsigned char> bytes;
    for (std::size_t y = 0; y < H; ++y)
        for (std::size_t x = 0; x < W; ++x)
            for (std::size_t b = 0; b < B; ++b) {  // bip, big-endian
                const auto v = value(b, y, x);
                bytes.push_back(static_cast<unsigned char>(v >> 8));
                bytes.push_back(static_cast<unsigned char>(v & 0xff));
            }
    write_bytes(raw, bytes);
    {
        std::ofstream f(side);
        f << R"({"bands":3,"height":2,"width":4,"dtype":"u16","byte_order":"big","interleave":"bip","scale":10000,
                 "wavelength_nm":[450,650]})";
    }
    const HsiCube c = convert_raw(raw.string(), side.string());
    REQUIRE(c.bands == B);
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t y = 0; y < H; ++y)
            for (std::size_t x = 0; x < W; ++x) CHECK(c.at(b, y, x) == static_cast<float>(value(b, y, x) / 10000.0));
    CHECK(c.wavelength_nm == std::pair{450.0, 650.0});

    bytes.pop_back();
    write_bytes(raw, bytes);
    try {
        convert_raw(raw.string(), side.string());
        FAIL("expected error");
    } catch (const CubeError& e) {
        CHECK(e.code() == CubeErrorCode::truncated_payload);
    }
    std::filesystem::remove(raw);
    std::filesystem::remove(side);
}

TEST_CASE("repo fixture cube has its recorded checksum") {
    const std::string path = HDST_TEST_DATA_DIR "/fixture_clean.hdc";
    std::ifstream f(path, std::ios::binary);
    REQUIRE(f);
    const std::string bytes{std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
    // FNV-1a of the file bytes, computed with tools/fixture_checksum.py when the fixture was written
    CHECK(fnv1a64(bytes) == 0x451f9fe386397ad2ULL);
    const HsiCube c = load_cube(path);
    CHECK(c.bands == 4);
    CHECK(c.height == 32);
    CHECK(c.width == 32);
    CHECK(c == synthetic_scene(4, 32, 32, 7));
}

TEST_CASE("patch tiling counts and bounds") {
    CHECK(crop_and_augment(HsiCube(2, 8, 8), 8, 8, false, 0).patches.size() == 1);
    const auto set = crop_and_augment(HsiCube(2, 16, 16), 8, 4, false, 0);
    REQUIRE(set.patches.size() == 9);  // floor((16-8)/4)+1 = 3 per axis
    std::set<std::pair<std::size_t, std::size_t>> origins;
    for (const auto& d : set.patches) {
        CHECK(d.augment == Augment::identity);
        CHECK(d.y + d.size <= 16);
        CHECK(d.x + d.size <= 16);
        CHECK(d.band_hi == 2);
        origins.insert({d.y, d.x});
    }
    CHECK(origins == std::set<std::pair<std::size_t, std::size_t>>{
                         {0, 0}, {0, 4}, {0, 8}, {4, 0}, {4, 4}, {4, 8}, {8, 0}, {8, 4}, {8, 8}});
    CHECK(crop_and_augment(HsiCube(1, 17, 10), 4, 3, false, 0).patches.size() == 5 * 3);
    CHECK_THROWS_AS(crop_and_augment(HsiCube(1, 8, 6), 7, 1, false, 0), std::invalid_argument);
}

TEST_CASE("augmentation tags are seeded and cover the six transforms") {
    const HsiCube c(1, 40, 40);
    const auto a = crop_and_augment(c, 4, 2, true, 99), b = crop_and_augment(c, 4, 2, true, 99);
    std::set<Augment> seen;
    REQUIRE(a.patches.size() == b.patches.size());
    for (std::size_t i = 0; i < a.patches.size(); ++i) {
        CHECK(a.patches[i].augment == b.patches[i].augment);
        seen.insert(a.patches[i].augment);
    }
    CHECK(seen.size() == 6);
}

TEST_CASE("extract_patch applies each transform") {
    HsiCube c(1, 4, 4);
    for (std::size_t y = 0; y < 4; ++y)
        for (std::size_t x = 0; x < 4; ++x) c.at(0, y, x) = float(10 * y + x);
    PatchDescriptor d{0, 0, 1, 1, 1, 2, Augment::identity};
    // window [[11,12],[21,22]]
    auto grid = [&](Augment a) {
        d.augment = a;
        const HsiCube p = extract_patch(c, d);
        return std::vector<float>(p.data.begin(), p.data.end());
    };
    CHECK(grid(Augment::identity) == std::vector<float>{11, 12, 21, 22});
    CHECK(grid(Augment::flip_h) == std::vector<float>{12, 11, 22, 21});
    CHECK(grid(Augment::flip_v) == std::vector<float>{21, 22, 11, 12});
    CHECK(grid(Augment::rot90) == std::vector<float>{12, 22, 11, 21});
    CHECK(grid(Augment::rot180) == std::vector<float>{22, 21, 12, 11});
    CHECK(grid(Augment::rot270) == std::vector<float>{21, 11, 22, 12});
    d.x = 3;
    CHECK_THROWS(extract_patch(c, d));
}

TEST_CASE("zero-parameter noise specs are identities") {
    const HsiCube clean = random_cube(6, 16, 12, 8);
    for (auto p : {NoisePattern::noniid_gaussian, NoisePattern::gaussian_stripe, NoisePattern::gaussian_deadline,
                   NoisePattern::gaussian_impulse, NoisePattern::mixture}) {
        CAPTURE(to_string(p));
        NoiseSpec s = zero_spec(p);
        s.affected_band_fraction = 0.0;
        CHECK(apply_noise(clean, s) == clean);
        if (p != NoisePattern::gaussian_deadline && p != NoisePattern::gaussian_impulse && p != NoisePattern::mixture) {
            s.affected_band_fraction = 1.0;  // zero fractions and zero offsets still leave the cube alone
            CHECK(apply_noise(clean, s) == clean);
        }
    }
}

TEST_CASE("deadline at column fraction 1 zeroes every affected column") {
    const HsiCube clean = random_cube(5, 8, 10, 9);
    NoiseSpec s = zero_spec(NoisePattern::gaussian_deadline);
    s.sigma_range = {0.1, 0.2};
    s.affected_band_fraction = 1.0;
    s.column_fraction_range = {1.0, 1.0};
    NoiseRealization r;
    const HsiCube out = apply_noise(clean, s, &r);
    CHECK(r.affected.size() == 5);
    for (float v : out.data) CHECK(v == 0.0f);

    s.affected_band_fraction = 0.4;
    s.column_fraction_range = {0.3, 0.3};
    const HsiCube part = apply_noise(clean, s, &r);
    REQUIRE(r.affected.size() == 2);
    for (std::size_t b : r.affected) {
        REQUIRE(r.bands[b].columns.size() == 3);
        for (std::size_t x : r.bands[b].columns)
            for (std::size_t y = 0; y < 8; ++y) CHECK(part.at(b, y, x) == 0.0f);
    }
}

TEST_CASE("stripe offsets are per-column constants") {
    const HsiCube clean(3, 16, 20, 0.5f);
    NoiseSpec s = zero_spec(NoisePattern::gaussian_stripe);
    s.affected_band_fraction = 1.0;
    s.column_fraction_range = {0.2, 0.2};
    s.stripe_offset = 0.25;
    NoiseRealization r;
    const HsiCube out = apply_noise(clean, s, &r);
    for (std::size_t b = 0; b < 3; ++b) {
        const auto& br = r.bands[b];
        REQUIRE(br.columns.size() == 4);
        std::set<std::size_t> striped(br.columns.begin(), br.columns.end());
        for (std::size_t x = 0; x < 20; ++x) {
            const double expect = striped.count(x)
                ? 0.5 + br.offsets[std::distance(br.columns.begin(), std::find(br.columns.begin(), br.columns.end(), x))]
                : 0.5;
            for (std::size_t y = 0; y < 16; ++y) CHECK(out.at(b, y, x) == static_cast<float>(expect));
        }
        for (double off : br.offsets) CHECK(std::abs(off) <= 0.25);
    }
}

TEST_CASE("non-iid gaussian: per-band sigma within 5% and bands uncorrelated") {
    const std::size_t B = 31, N = 64;
    const HsiCube clean(B, N, N, 0.5f);
    NoiseSpec s;
    s.seed = 2024;
    NoiseRealization r;
    const HsiCube noisy = apply_noise(clean, s, &r);
    std::vector<std::vector<double>> planes(B, std::vector<double>(N * N));
    std::set<double> sigmas;
    for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t i = 0; i < N * N; ++i) planes[b][i] = double(noisy.band(b)[i]) - 0.5;
        const double drawn = r.bands[b].sigma;
        CHECK(drawn >= 10.0 / 255.0);
        CHECK(drawn <= 70.0 / 255.0);
        CHECK(std::abs(sample_std(planes[b]) - drawn) <= 0.05 * drawn);
        sigmas.insert(drawn);
    }
    CHECK(sigmas.size() == B);
    // Independent planes of n = 4096 samples give r ~ N(0, 1/n), sd 0.0156. Neighbouring bands
    // are held to 0.05; every pair to 5 sd; the mean of r^2 must sit near 1/n.
    const double n = double(N * N);
    double worst_adjacent = 0.0, worst = 0.0, mean_r2 = 0.0;
    std::size_t pairs = 0;
    for (std::size_t a = 0; a < B; ++a)
        for (std::size_t b = a + 1; b < B; ++b) {
            const double rho = correlation(planes[a], planes[b]);
            worst = std::max(worst, std::abs(rho));
            if (b == a + 1) worst_adjacent = std::max(worst_adjacent, std::abs(rho));
            mean_r2 += rho * rho;
            ++pairs;
        }
    mean_r2 /= double(pairs);
    MESSAGE("max |corr| adjacent " << worst_adjacent << ", all pairs " << worst << ", mean r^2 * n " << mean_r2 * n);
    CHECK(worst_adjacent <= 0.05);
    CHECK(worst <= 5.0 / std::sqrt(n));
    CHECK(mean_r2 * n > 0.7);
    CHECK(mean_r2 * n < 1.3);
}

TEST_CASE("impulse pixels are 0 or 1 at the drawn ratio") {
    const HsiCube clean(6, 64, 64, 0.5f);
    NoiseSpec s = zero_spec(NoisePattern::gaussian_impulse);
    s.affected_band_fraction = 0.5;
    s.impulse_ratio_range = {0.1, 0.7};
    s.seed = 5;
    NoiseRealization r;
    const HsiCube out = apply_noise(clean, s, &r);
    REQUIRE(r.affected.size() == 3);
    for (std::size_t b = 0; b < 6; ++b) {
        std::size_t hits = 0;
        for (std::size_t i = 0; i < 64 * 64; ++i) {
            const float v = out.band(b)[i];
            if (v != 0.5f) {
                CHECK((v == 0.0f || v == 1.0f));
                ++hits;
            }
        }
        const bool affected = std::find(r.affected.begin(), r.affected.end(), b) != r.affected.end();
        if (!affected) {
            CHECK(hits == 0);
            continue;
        }
        const double ratio = r.bands[b].impulse_ratio;
        CHECK(ratio >= 0.1);
        CHECK(ratio <= 0.7);
        // a salt value on a pixel already at 0.5 always changes it, so hits counts every impulse
        CHECK(std::abs(double(hits) / (64.0 * 64.0) - ratio) <= 0.1 * ratio);
    }
}

TEST_CASE("impulse on top of gaussian still yields only 0/1 at impulse sites") {
    const HsiCube clean(4, 64, 64, 0.5f);
    NoiseSpec s;
    s.pattern = NoisePattern::gaussian_impulse;
    s.affected_band_fraction = 1.0;
    s.seed = 6;
    NoiseRealization r;
    const HsiCube out = apply_noise(clean, s, &r);
    for (std::size_t b = 0; b < 4; ++b) {
        std::size_t extremes = 0;
        for (std::size_t i = 0; i < 64 * 64; ++i) extremes += out.band(b)[i] == 0.0f || out.band(b)[i] == 1.0f;
        CHECK(std::abs(double(extremes) / 4096.0 - r.bands[b].impulse_ratio) <= 0.1 * r.bands[b].impulse_ratio);
    }
}

TEST_CASE("mixture assigns one structured pattern per affected band and logs it") {
    const HsiCube clean = synthetic_scene(12, 16, 16, 1);
    NoiseSpec s;
    s.pattern = NoisePattern::mixture;
    s.affected_band_fraction = 1.0;
    s.seed = 11;
    NoiseRealization r;
    apply_noise(clean, s, &r);
    std::set<SubPattern> kinds;
    for (const auto& b : r.bands) {
        CHECK(b.sub != SubPattern::none);
        kinds.insert(b.sub);
    }
    CHECK(kinds.size() == 3);
    const auto j = to_json(r);
    CHECK(j.at("bands").size() == 12);
    CHECK(j.at("affected_bands").size() == 12);

    s.affected_band_fraction = 1.0 / 3.0;
    apply_noise(clean, s, &r);
    CHECK(r.affected.size() == 4);
    for (const auto& b : r.bands)
        CHECK((b.sub != SubPattern::none) == (std::find(r.affected.begin(), r.affected.end(), b.band) != r.affected.end()));
}

TEST_CASE("apply_noise is a pure function of cube and spec") {
    const HsiCube clean = synthetic_scene(5, 20, 24, 3);
    for (auto p : {NoisePattern::noniid_gaussian, NoisePattern::gaussian_stripe, NoisePattern::gaussian_deadline,
                   NoisePattern::gaussian_impulse, NoisePattern::mixture}) {
        NoiseSpec s;
        s.pattern = p;
        s.affected_band_fraction = 0.6;
        s.seed = 77;
        const auto a = encode_cube(apply_noise(clean, s));
        const auto b = encode_cube(apply_noise(clean, s));
        CHECK(a == b);
        s.seed = 78;
        CHECK(encode_cube(apply_noise(clean, s)) != a);
    }
}

TEST_CASE("noise spec validation and json") {
    NoiseSpec s;
    s.pattern = NoisePattern::gaussian_stripe;
    s.seed = 0xfeedbeefcafeULL;
    s.sigma_range = {0.01, 0.02};
    CHECK(noise_spec_from_json(to_json(s)) == s);
    CHECK_THROWS_AS(noise_spec_from_json(nlohmann::json{{"sigma", 1}}), std::invalid_argument);
    CHECK_THROWS_AS(noise_spec_from_json(nlohmann::json{{"pattern", "pink"}}), std::invalid_argument);

    NoiseSpec bad;
    bad.sigma_range = {0.2, 0.1};
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = {};
    bad.affected_band_fraction = 1.5;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = {};
    bad.column_fraction_range = {-0.1, 0.5};
    CHECK_THROWS_AS(apply_noise(HsiCube(1, 2, 2), bad), std::invalid_argument);
}

TEST_CASE("synthetic scene is deterministic and in range") {
    const HsiCube a = synthetic_scene(8, 24, 16, 42), b = synthetic_scene(8, 24, 16, 42);
    CHECK(a == b);
    CHECK(synthetic_scene(8, 24, 16, 43) != a);
    for (float v : a.data) {
        CHECK(v >= 0.15f);
        CHECK(v <= 0.85f);
    }
}
