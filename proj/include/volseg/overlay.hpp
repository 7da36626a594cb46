#ifndef VOLSEG_OVERLAY_HPP
#define VOLSEG_OVERLAY_HPP

#include <cstdint>
#include <filesystem>
#include <vector>

#include "volseg/volume.hpp"

namespace volseg {

// One axial slice as 8-bit RGB, row-major, 3 bytes per pixel. Greyscale comes
// from the voxel values rounded and clamped to [0,255]; mask boundary pixels
// (mask voxels with at least one background 4-neighbor in the slice, where
// off-image counts as background) are drawn pure red.
std::vector<std::uint8_t> render_overlay_rgb(const Volume& vol, const LabelMask& mask,
                                             int slice_index);

void write_overlay_png(const Volume& vol, const LabelMask& mask, int slice_index,
                       const std::filesystem::path& path);

}  // namespace volseg

#endif
