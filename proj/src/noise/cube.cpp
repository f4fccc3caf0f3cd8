#include "hdst/noise/cube.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>

#include "json.hpp"

namespace hdst::noise {

namespace {

constexpr char kMagic[8] = {'H', 'D', 'C', 'U', 'B', 'E', '0', '1'};

std::vector<unsigned char> read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw CubeError(CubeErrorCode::open_failed, "cannot open " + path);
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

std::uint32_t get_u32le(const unsigned char* p) {
    return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 | std::uint32_t(p[3]) << 24;
}

void put_u32le(std::vector<unsigned char>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

std::size_t range_violations(const HsiCube& c) {
    std::size_t n = 0;
    for (float v : c.data) n += (v < 0.0f || v > 1.0f);
    return n;
}

}  // namespace

HsiCube::HsiCube(std::size_t b, std::size_t h, std::size_t w, float fill)
    : bands(b), height(h), width(w), data(b * h * w, fill) {}

std::string HsiCube::shape_string() const {
    return std::to_string(bands) + "x" + std::to_string(height) + "x" + std::to_string(width);
}

Tensor to_tensor(const HsiCube& c) {
    Tensor t(Shape{1, c.bands, c.height, c.width});
    for (std::size_t i = 0; i < c.data.size(); ++i) t[i] = c.data[i];
    return t;
}

HsiCube from_tensor(const Tensor& t, std::optional<std::pair<double, double>> wavelength) {
    if (t.rank() != 4 || t.dim(0) != 1) throw ShapeError("from_tensor: expected [1,bands,H,W], got " + shape_string(t.shape()));
    HsiCube c(t.dim(1), t.dim(2), t.dim(3));
    for (std::size_t i = 0; i < c.data.size(); ++i) c.data[i] = static_cast<float>(t[i]);
    c.wavelength_nm = wavelength;
    return c;
}

const char* to_string(CubeErrorCode c) {
    switch (c) {
        case CubeErrorCode::open_failed: return "open_failed";
        case CubeErrorCode::bad_magic: return "bad_magic";
        case CubeErrorCode::truncated_header: return "truncated_header";
        case CubeErrorCode::bad_header: return "bad_header";
        case CubeErrorCode::unsupported_dtype: return "unsupported_dtype";
        case CubeErrorCode::truncated_payload: return "truncated_payload";
        case CubeErrorCode::dimension_mismatch: return "dimension_mismatch";
        case CubeErrorCode::non_finite: return "non_finite";
        case CubeErrorCode::write_failed: return "write_failed";
    }
    return "unknown";
}

std::vector<unsigned char> encode_cube(const HsiCube& c) {
    if (c.data.size() != c.bands * c.height * c.width)
        throw CubeError(CubeErrorCode::dimension_mismatch,
                        "cube " + c.shape_string() + " holds " + std::to_string(c.data.size()) + " values");
    nlohmann::ordered_json h;
    h["bands"] = c.bands;
    h["height"] = c.height;
    h["width"] = c.width;
    h["dtype"] = "f32";
    if (c.wavelength_nm) h["wavelength_nm"] = {c.wavelength_nm->first, c.wavelength_nm->second};
    else h["wavelength_nm"] = nullptr;
    const std::string header = h.dump();

    std::vector<unsigned char> out(kMagic, kMagic + 8);
    put_u32le(out, static_cast<std::uint32_t>(header.size()));
    out.insert(out.end(), header.begin(), header.end());
    out.reserve(out.size() + 4 * c.data.size());
    for (float v : c.data) put_u32le(out, std::bit_cast<std::uint32_t>(v));
    return out;
}

HsiCube decode_cube(const std::vector<unsigned char>& bytes, const std::string& origin,
                    std::vector<std::string>* warnings) {
    if (bytes.size() < 8 || std::memcmp(bytes.data(), kMagic, 8) != 0)
        throw CubeError(CubeErrorCode::bad_magic, origin + ": missing HDCUBE01 magic");
    if (bytes.size() < 12) throw CubeError(CubeErrorCode::truncated_header, origin + ": header length missing");
    const std::size_t hlen = get_u32le(bytes.data() + 8);
    if (bytes.size() < 12 + hlen)
        throw CubeError(CubeErrorCode::truncated_header, origin + ": header claims " + std::to_string(hlen) +
                                                             " bytes, file has " + std::to_string(bytes.size() - 12));
    HsiCube c;
    try {
        const auto h = nlohmann::json::parse(bytes.begin() + 12, bytes.begin() + 12 + long(hlen));
        c.bands = h.at("bands").get<std::size_t>();
        c.height = h.at("height").get<std::size_t>();
        c.width = h.at("width").get<std::size_t>();
        const auto dtype = h.value("dtype", std::string("f32"));
        if (dtype != "f32") throw CubeError(CubeErrorCode::unsupported_dtype, origin + ": dtype " + dtype + " not supported");
        if (h.contains("wavelength_nm") && !h.at("wavelength_nm").is_null()) {
            const auto& wl = h.at("wavelength_nm");
            if (!wl.is_array() || wl.size() != 2) throw CubeError(CubeErrorCode::bad_header, origin + ": wavelength_nm must be [lo, hi]");
            c.wavelength_nm = std::pair{wl[0].get<double>(), wl[1].get<double>()};
        }
    } catch (const nlohmann::json::exception& e) {
        throw CubeError(CubeErrorCode::bad_header, origin + ": bad header: " + e.what());
    }
    const std::size_t payload = bytes.size() - 12 - hlen;
    if (payload % 4 != 0)
        throw CubeError(CubeErrorCode::truncated_payload,
                        origin + ": payload of " + std::to_string(payload) + " bytes ends inside a float32");
    const std::size_t expect = c.bands * c.height * c.width;
    if (payload / 4 != expect)
        throw CubeError(CubeErrorCode::dimension_mismatch, origin + ": header claims " + c.shape_string() + " (" +
                                                               std::to_string(expect) + " values), payload has " +
                                                               std::to_string(payload / 4));
    c.data.resize(expect);
    const unsigned char* p = bytes.data() + 12 + hlen;
    for (std::size_t i = 0; i < expect; ++i) {
        c.data[i] = std::bit_cast<float>(get_u32le(p + 4 * i));
        if (!std::isfinite(c.data[i]))
            throw CubeError(CubeErrorCode::non_finite, origin + ": non-finite value at index " + std::to_string(i));
    }
    if (warnings) {
        if (const auto n = range_violations(c))
            warnings->push_back(origin + ": " + std::to_string(n) + " values outside [0,1]");
    }
    return c;
}

HsiCube load_cube(const std::string& path, std::vector<std::string>* warnings) {
    return decode_cube(read_file(path), path, warnings);
}

void save_cube(const HsiCube& cube, const std::string& path) {
    const auto bytes = encode_cube(cube);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw CubeError(CubeErrorCode::write_failed, "cannot open " + path + " for writing");
    f.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
    if (!f) throw CubeError(CubeErrorCode::write_failed, "write failed: " + path);
}

HsiCube convert_raw(const std::string& raw_path, const std::string& sidecar_path) {
    std::ifstream sf(sidecar_path);
    if (!sf) throw CubeError(CubeErrorCode::open_failed, "cannot open " + sidecar_path);
    nlohmann::json sc;
    std::string dtype, order, interleave;
    double scale = 1.0;
    HsiCube c;
    try {
        sc = nlohmann::json::parse(sf);
        c.bands = sc.at("bands").get<std::size_t>();
        c.height = sc.at("height").get<std::size_t>();
        c.width = sc.at("width").get<std::size_t>();
        dtype = sc.value("dtype", std::string("f32"));
        order = sc.value("byte_order", std::string("little"));
        interleave = sc.value("interleave", std::string("bsq"));
        scale = sc.value("scale", dtype == "u16" ? 65535.0 : 1.0);
        if (sc.contains("wavelength_nm")) {
            const auto& wl = sc.at("wavelength_nm");
            c.wavelength_nm = std::pair{wl.at(0).get<double>(), wl.at(1).get<double>()};
        }
    } catch (const nlohmann::json::exception& e) {
        throw CubeError(CubeErrorCode::bad_header, sidecar_path + ": " + e.what());
    }
    std::size_t width_bytes = 0;
    if (dtype == "f32") width_bytes = 4;
    else if (dtype == "f64") width_bytes = 8;
    else if (dtype == "u16") width_bytes = 2;
    else throw CubeError(CubeErrorCode::unsupported_dtype, sidecar_path + ": dtype " + dtype);
    if (order != "little" && order != "big") throw CubeError(CubeErrorCode::bad_header, sidecar_path + ": byte_order " + order);
    if (interleave != "bsq" && interleave != "bil" && interleave != "bip")
        throw CubeError(CubeErrorCode::bad_header, sidecar_path + ": interleave " + interleave);
    if (!(scale > 0.0)) throw CubeError(CubeErrorCode::bad_header, sidecar_path + ": scale must be > 0");

    const auto raw = read_file(raw_path);
    if (raw.size() % width_bytes != 0)
        throw CubeError(CubeErrorCode::truncated_payload, raw_path + ": size not a multiple of " + std::to_string(width_bytes));
    const std::size_t n = c.bands * c.height * c.width;
    if (raw.size() / width_bytes != n)
        throw CubeError(CubeErrorCode::dimension_mismatch, raw_path + ": sidecar claims " + c.shape_string() + ", file has " +
                                                               std::to_string(raw.size() / width_bytes) + " values");
    auto value = [&](std::size_t i) -> double {
        unsigned char b[8];
        std::memcpy(b, raw.data() + i * width_bytes, width_bytes);
        if (order == "big") std::reverse(b, b + width_bytes);
        std::uint64_t u = 0;
        for (std::size_t k = 0; k < width_bytes; ++k) u |= std::uint64_t(b[k]) << (8 * k);
        if (dtype == "f32") return std::bit_cast<float>(static_cast<std::uint32_t>(u));
        if (dtype == "f64") return std::bit_cast<double>(u);
        return double(u);
    };
    c.data.resize(n);
    const std::size_t B = c.bands, H = c.height, W = c.width;
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t y = 0; y < H; ++y)
            for (std::size_t x = 0; x < W; ++x) {
                std::size_t src = 0;
                if (interleave == "bsq") src = (b * H + y) * W + x;
                else if (interleave == "bil") src = (y * B + b) * W + x;
                else src = (y * W + x) * B + b;
                const double v = value(src) / scale;
                if (!std::isfinite(v)) throw CubeError(CubeErrorCode::non_finite, raw_path + ": non-finite value");
                c.at(b, y, x) = static_cast<float>(v);
            }
    return c;
}

}  // namespace hdst::noise
