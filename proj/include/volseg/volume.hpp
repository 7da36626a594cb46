#ifndef VOLSEG_VOLUME_HPP
#define VOLSEG_VOLUME_HPP

#include <array>
#include <cstdint>
#include <cstddef>
#include <vector>

#include "volseg/errors.hpp"

namespace volseg {

// Which intensity domain a volume currently lives in. Stages check this so a
// skipped step is caught immediately instead of producing garbage downstream.
enum class UnitTag { HU, Normalized, Grey };

const char* unit_tag_name(UnitTag t);

struct Dims {
    int nx = 0, ny = 0, nz = 0;

    bool operator==(const Dims&) const = default;
    std::size_t count() const {
        return static_cast<std::size_t>(nx) * ny * nz;
    }
};

struct Vec3 {
    double x = 0.0, y = 0.0, z = 0.0;
    bool operator==(const Vec3&) const = default;
};

// Shared voxel addressing: x-fastest, then y, then z (MetaImage order).
inline std::size_t voxel_index(const Dims& d, int x, int y, int z) {
    return (static_cast<std::size_t>(z) * d.ny + y) * d.nx + x;
}

// 3D scalar field with geometry. Values are float32 regardless of the source
// element type; unit_tag records the pipeline stage the intensities are in.
struct Volume {
    Dims dims;
    Vec3 spacing{1.0, 1.0, 1.0};   // mm per voxel, > 0
    Vec3 origin{0.0, 0.0, 0.0};    // mm, world position of voxel (0,0,0)
    std::vector<float> voxels;     // dims.count() values, x-fastest
    UnitTag unit_tag = UnitTag::HU;

    float& at(int x, int y, int z) { return voxels[voxel_index(dims, x, y, z)]; }
    float at(int x, int y, int z) const { return voxels[voxel_index(dims, x, y, z)]; }

    // Edge-clamped read: out-of-range indices are clamped to the volume.
    float at_clamped(int x, int y, int z) const;

    // World position of a voxel center (MetaImage convention: origin + i*spacing).
    Vec3 world(int x, int y, int z) const {
        return {origin.x + x * spacing.x, origin.y + y * spacing.y, origin.z + z * spacing.z};
    }
};

// Binary per-voxel liver map paired with a Volume of identical dims.
struct LabelMask {
    Dims dims;
    std::vector<std::uint8_t> labels;  // 0 background, 1 liver

    std::uint8_t& at(int x, int y, int z) { return labels[voxel_index(dims, x, y, z)]; }
    std::uint8_t at(int x, int y, int z) const { return labels[voxel_index(dims, x, y, z)]; }
};

Volume make_volume(Dims dims, Vec3 spacing = {1, 1, 1}, Vec3 origin = {0, 0, 0},
                   UnitTag tag = UnitTag::HU, float fill = 0.0f);
LabelMask make_mask(Dims dims, std::uint8_t fill = 0);

// Validators; run after each pipeline stage. Throw data_error on violation.
void validate_volume(const Volume& v);
void validate_mask(const LabelMask& m, const Dims& paired_dims);

}  // namespace volseg

#endif
