#pragma once

#include <cstdint>
#include <vector>

#include "hdst/noise/cube.hpp"

namespace hdst::noise {

enum class Augment { identity, flip_h, flip_v, rot90, rot180, rot270 };
const char* to_string(Augment a);

struct PatchDescriptor {
    std::size_t cube = 0;     // index into the caller's cube list
    std::size_t band_lo = 0;  // [band_lo, band_hi)
    std::size_t band_hi = 0;
    std::size_t y = 0, x = 0, size = 0;
    Augment augment = Augment::identity;
};

struct PatchSet {
    std::vector<PatchDescriptor> patches;
};

/// Row-major grid of size x size windows at the given stride,
/// floor((H - size) / stride) + 1 per axis. With `augment` each descriptor
/// gets a tag drawn uniformly from the six augmentations.
PatchSet crop_and_augment(const HsiCube& cube, std::size_t patch_size, std::size_t stride, bool augment,
                          std::uint64_t seed, std::size_t cube_index = 0);

/// Copies a descriptor's window out of its cube and applies its augmentation.
HsiCube extract_patch(const HsiCube& cube, const PatchDescriptor& d);

}  // namespace hdst::noise
