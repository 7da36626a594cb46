#include "volseg/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace volseg {
namespace {

void check_window(const WindowSpec& w) {
    if (!(w.hu_min < w.hu_max))
        throw param_error("window: hu_min must be < hu_max");
}

void require_tag(const Volume& vol, UnitTag expected, const char* op) {
    if (vol.unit_tag != expected)
        throw param_error(std::string(op) + ": expected " + unit_tag_name(expected) +
                          " input, got " + unit_tag_name(vol.unit_tag));
}

}  // namespace

Volume resample_xy(const Volume& vol, int tx, int ty) {
    if (tx < 2 || ty < 2)
        throw param_error("resample_xy: target must be at least 2x2");
    if (vol.dims.nx < 2 || vol.dims.ny < 2)
        throw param_error("resample_xy: source needs at least 2 voxels per in-plane axis");

    const Dims sd = vol.dims;
    const double scale_x = static_cast<double>(sd.nx - 1) / (tx - 1);
    const double scale_y = static_cast<double>(sd.ny - 1) / (ty - 1);

    Volume out = make_volume({tx, ty, sd.nz},
                             {vol.spacing.x * scale_x, vol.spacing.y * scale_y, vol.spacing.z},
                             vol.origin, vol.unit_tag);
    for (int z = 0; z < sd.nz; ++z) {
        for (int y = 0; y < ty; ++y) {
            const double v = y * scale_y;
            const int y0 = std::clamp(static_cast<int>(std::floor(v)), 0, sd.ny - 1);
            const int y1 = std::min(y0 + 1, sd.ny - 1);
            const double fy = v - y0;
            for (int x = 0; x < tx; ++x) {
                const double u = x * scale_x;
                const int x0 = std::clamp(static_cast<int>(std::floor(u)), 0, sd.nx - 1);
                const int x1 = std::min(x0 + 1, sd.nx - 1);
                const double fx = u - x0;
                const double top = (1.0 - fx) * vol.at(x0, y0, z) + fx * vol.at(x1, y0, z);
                const double bot = (1.0 - fx) * vol.at(x0, y1, z) + fx * vol.at(x1, y1, z);
                out.at(x, y, z) = static_cast<float>((1.0 - fy) * top + fy * bot);
            }
        }
    }
    return out;
}

Volume hu_window(const Volume& vol, const WindowSpec& w) {
    check_window(w);
    require_tag(vol, UnitTag::HU, "hu_window");
    Volume out = vol;
    for (auto& v : out.voxels) v = std::clamp(v, w.hu_min, w.hu_max);
    return out;
}

Volume normalize(const Volume& vol, const WindowSpec& w) {
    check_window(w);
    require_tag(vol, UnitTag::HU, "normalize");
    const float range = w.hu_max - w.hu_min;
    Volume out = vol;
    out.unit_tag = UnitTag::Normalized;
    for (auto& v : out.voxels) {
        if (v < w.hu_min || v > w.hu_max)
            throw data_error("normalize: voxel " + std::to_string(v) +
                             " outside the window; was hu_window skipped?");
        v = (v - w.hu_min) / range;
    }
    return out;
}

Volume to_greyscale(const Volume& vol) {
    require_tag(vol, UnitTag::Normalized, "to_greyscale");
    Volume out = vol;
    out.unit_tag = UnitTag::Grey;
    for (auto& v : out.voxels) v *= 255.0f;
    return out;
}

Volume downsample_low_pathway(const Volume& vol, int tx, int ty) {
    return resample_xy(vol, tx, ty);
}

}  // namespace volseg
