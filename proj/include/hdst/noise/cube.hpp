#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "hdst/tensor.hpp"

namespace hdst::noise {

/// bands x height x width cube, band-major (plane-sequential) storage.
struct HsiCube {
    std::size_t bands = 0;
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<float> data;
    std::optional<std::pair<double, double>> wavelength_nm;

    HsiCube() = default;
    HsiCube(std::size_t b, std::size_t h, std::size_t w, float fill = 0.0f);

    std::size_t plane() const { return height * width; }
    float& at(std::size_t b, std::size_t y, std::size_t x) { return data[(b * height + y) * width + x]; }
    float at(std::size_t b, std::size_t y, std::size_t x) const { return data[(b * height + y) * width + x]; }
    float* band(std::size_t b) { return data.data() + b * plane(); }
    const float* band(std::size_t b) const { return data.data() + b * plane(); }

    bool same_shape(const HsiCube& o) const { return bands == o.bands && height == o.height && width == o.width; }
    std::string shape_string() const;
    bool operator==(const HsiCube&) const = default;
};

/// [1, bands, H, W] double tensor and back.
Tensor to_tensor(const HsiCube& c);
HsiCube from_tensor(const Tensor& t, std::optional<std::pair<double, double>> wavelength = std::nullopt);

enum class CubeErrorCode {
    open_failed,
    bad_magic,
    truncated_header,
    bad_header,
    unsupported_dtype,
    truncated_payload,   // payload ends inside a scalar
    dimension_mismatch,  // whole scalars present, but not bands*height*width of them
    non_finite,
    write_failed,
};
const char* to_string(CubeErrorCode c);

class CubeError : public IoError {
public:
    CubeError(CubeErrorCode code, const std::string& what) : IoError(what), code_(code) {}
    CubeErrorCode code() const { return code_; }

private:
    CubeErrorCode code_;
};

/// HDC1 file:
///   bytes 0..7   "HDCUBE01"
///   bytes 8..11  header length N, uint32 little-endian
///   N bytes      UTF-8 JSON {"bands","height","width","dtype":"f32","wavelength_nm":[lo,hi] | null}
///   payload      float32 little-endian, band-major
/// Values outside [0,1] load fine and append a message to `warnings`.
HsiCube load_cube(const std::string& path, std::vector<std::string>* warnings = nullptr);
void save_cube(const HsiCube& cube, const std::string& path);
/// Exact bytes save_cube would write.
std::vector<unsigned char> encode_cube(const HsiCube& cube);
HsiCube decode_cube(const std::vector<unsigned char>& bytes, const std::string& origin = "<memory>",
                    std::vector<std::string>* warnings = nullptr);

/// Flat raw scalars described by a JSON sidecar:
///   {"bands","height","width",
///    "dtype": "f32" | "f64" | "u16",        default "f32"
///    "byte_order": "little" | "big",        default "little"
///    "interleave": "bsq" | "bil" | "bip",   default "bsq"
///    "scale": divisor applied to every value (default 1, or 65535 for u16),
///    "wavelength_nm": [lo, hi]}             optional
HsiCube convert_raw(const std::string& raw_path, const std::string& sidecar_path);

}  // namespace hdst::noise
