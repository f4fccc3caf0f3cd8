#include "hdst/noise/patches.hpp"

#include <stdexcept>

#include "hdst/rng.hpp"

namespace hdst::noise {

const char* to_string(Augment a) {
    switch (a) {
        case Augment::identity: return "identity";
        case Augment::flip_h: return "flip_h";
        case Augment::flip_v: return "flip_v";
        case Augment::rot90: return "rot90";
        case Augment::rot180: return "rot180";
        case Augment::rot270: return "rot270";
    }
    return "unknown";
}

PatchSet crop_and_augment(const HsiCube& cube, std::size_t patch_size, std::size_t stride, bool augment,
                          std::uint64_t seed, std::size_t cube_index) {
    if (patch_size == 0 || stride == 0) throw std::invalid_argument("patch size and stride must be >= 1");
    if (patch_size > cube.height || patch_size > cube.width)
        throw std::invalid_argument("patch size " + std::to_string(patch_size) + " exceeds cube " + cube.shape_string());
    PatchSet set;
    CounterRng rng(seed);
    for (std::size_t y = 0; y + patch_size <= cube.height; y += stride)
        for (std::size_t x = 0; x + patch_size <= cube.width; x += stride) {
            PatchDescriptor d{cube_index, 0, cube.bands, y, x, patch_size, Augment::identity};
            if (augment) d.augment = static_cast<Augment>(rng.below(6));
            set.patches.push_back(d);
        }
    return set;
}

HsiCube extract_patch(const HsiCube& cube, const PatchDescriptor& d) {
    if (d.band_hi > cube.bands || d.band_lo >= d.band_hi || d.y + d.size > cube.height || d.x + d.size > cube.width)
        throw std::out_of_range("patch descriptor lies outside cube " + cube.shape_string());
    const std::size_t n = d.size;
    HsiCube out(d.band_hi - d.band_lo, n, n);
    out.wavelength_nm = cube.wavelength_nm;
    for (std::size_t b = 0; b < out.bands; ++b)
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                // (i, j) in the output reads (si, sj) of the source window
                std::size_t si = i, sj = j;
                switch (d.augment) {
                    case Augment::identity: break;
                    case Augment::flip_h: sj = n - 1 - j; break;
                    case Augment::flip_v: si = n - 1 - i; break;
                    case Augment::rot90: si = j, sj = n - 1 - i; break;  // counter-clockwise
                    case Augment::rot180: si = n - 1 - i, sj = n - 1 - j; break;
                    case Augment::rot270: si = n - 1 - j, sj = i; break;
                }
                out.at(b, i, j) = cube.at(d.band_lo + b, d.y + si, d.x + sj);
            }
    return out;
}

}  // namespace hdst::noise
