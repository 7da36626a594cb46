#include "volseg/volume.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace volseg {

const char* unit_tag_name(UnitTag t) {
    switch (t) {
        case UnitTag::HU: return "HU";
        case UnitTag::Normalized: return "NORMALIZED";
        case UnitTag::Grey: return "GREY";
    }
    return "?";
}

float Volume::at_clamped(int x, int y, int z) const {
    x = std::clamp(x, 0, dims.nx - 1);
    y = std::clamp(y, 0, dims.ny - 1);
    z = std::clamp(z, 0, dims.nz - 1);
    return voxels[voxel_index(dims, x, y, z)];
}

Volume make_volume(Dims dims, Vec3 spacing, Vec3 origin, UnitTag tag, float fill) {
    if (dims.nx <= 0 || dims.ny <= 0 || dims.nz <= 0)
        throw param_error("volume dims must be positive, got " + std::to_string(dims.nx) + "x" +
                          std::to_string(dims.ny) + "x" + std::to_string(dims.nz));
    if (spacing.x <= 0 || spacing.y <= 0 || spacing.z <= 0)
        throw param_error("volume spacing must be strictly positive");
    Volume v;
    v.dims = dims;
    v.spacing = spacing;
    v.origin = origin;
    v.unit_tag = tag;
    v.voxels.assign(dims.count(), fill);
    return v;
}

LabelMask make_mask(Dims dims, std::uint8_t fill) {
    if (dims.nx <= 0 || dims.ny <= 0 || dims.nz <= 0)
        throw param_error("mask dims must be positive");
    LabelMask m;
    m.dims = dims;
    m.labels.assign(dims.count(), fill);
    return m;
}

void validate_volume(const Volume& v) {
    if (v.dims.nx <= 0 || v.dims.ny <= 0 || v.dims.nz <= 0)
        throw data_error("volume has non-positive dims");
    if (v.voxels.size() != v.dims.count())
        throw data_error("voxel count " + std::to_string(v.voxels.size()) +
                         " does not match dims product " + std::to_string(v.dims.count()));
    if (v.spacing.x <= 0 || v.spacing.y <= 0 || v.spacing.z <= 0)
        throw data_error("volume spacing must be strictly positive");
    float lo = 0.0f, hi = 0.0f;
    bool bounded = false;
    if (v.unit_tag == UnitTag::Normalized) { lo = 0.0f; hi = 1.0f; bounded = true; }
    if (v.unit_tag == UnitTag::Grey)       { lo = 0.0f; hi = 255.0f; bounded = true; }
    for (float x : v.voxels) {
        if (!std::isfinite(x)) throw data_error("volume contains non-finite voxel");
        if (bounded && (x < lo || x > hi))
            throw data_error(std::string("voxel ") + std::to_string(x) + " outside [" +
                             std::to_string(lo) + ", " + std::to_string(hi) + "] for unit tag " +
                             unit_tag_name(v.unit_tag));
    }
}

void validate_mask(const LabelMask& m, const Dims& paired_dims) {
    if (m.dims != paired_dims) throw data_error("mask dims do not match paired volume dims");
    if (m.labels.size() != m.dims.count()) throw data_error("mask label count does not match dims");
    for (auto l : m.labels)
        if (l > 1) throw data_error("mask label outside {0, 1}");
}

}  // namespace volseg
