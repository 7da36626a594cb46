#include "volseg/phantom.hpp"

#include <cmath>
#include <random>
#include <string>

namespace volseg {
namespace {

constexpr float kAirHu = -1000.0f;

struct Ellipsoid {
    double cx, cy, cz;  // center, voxel units
    double ax, ay, az;  // semi-axes, voxel units

    double level(double x, double y, double z) const {
        double u = (x - cx) / ax, v = (y - cy) / ay, w = (z - cz) / az;
        return u * u + v * v + w * w;
    }
};

}  // namespace

Phantom make_phantom(const PhantomSpec& spec) {
    const Dims d = spec.dims;
    if (d.nx < 16 || d.ny < 16 || d.nz < 16)
        throw param_error("make_phantom: every dim must be >= 16 to host the liver ellipsoid");
    if (spec.noise_sigma < 0) throw param_error("make_phantom: noise_sigma must be >= 0");
    if (spec.organ_hu_lo > spec.organ_hu_hi)
        throw param_error("make_phantom: organ_hu_range is inverted");

    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    // Liver: full-extent fraction 0.6..0.8 per axis keeps the mask fraction in
    // roughly [0.11, 0.27] of the volume and the semi-axes >= ~4.8 voxels.
    Ellipsoid liver;
    liver.ax = (0.6 + 0.2 * unit(rng)) * d.nx / 2.0;
    liver.ay = (0.6 + 0.2 * unit(rng)) * d.ny / 2.0;
    liver.az = (0.6 + 0.2 * unit(rng)) * d.nz / 2.0;
    liver.cx = d.nx / 2.0 + (unit(rng) - 0.5) * 0.1 * d.nx;
    liver.cy = d.ny / 2.0 + (unit(rng) - 0.5) * 0.1 * d.ny;
    liver.cz = d.nz / 2.0 + (unit(rng) - 0.5) * 0.1 * d.nz;

    Volume vol = make_volume(d, {1, 1, 1}, {0, 0, 0}, UnitTag::HU, kAirHu);
    LabelMask mask = make_mask(d);

    for (int z = 0; z < d.nz; ++z)
        for (int y = 0; y < d.ny; ++y)
            for (int x = 0; x < d.nx; ++x)
                if (liver.level(x, y, z) <= 1.0) {
                    mask.at(x, y, z) = 1;
                    vol.at(x, y, z) = spec.liver_hu;
                }

    // Confounder blobs: outside the liver (dilated by 2 voxels) so liver voxels
    // keep exactly liver_hu before noise.
    const int n_blobs = 2 + static_cast<int>(unit(rng) * 4.0);  // 2..5
    std::uniform_real_distribution<double> hu_dist(spec.organ_hu_lo, spec.organ_hu_hi);
    for (int b = 0; b < n_blobs; ++b) {
        Ellipsoid blob;
        double r = 3.0 + 4.0 * unit(rng);  // 3..7 voxels
        blob.ax = blob.ay = blob.az = r;
        bool placed = false;
        for (int attempt = 0; attempt < 200 && !placed; ++attempt) {
            blob.cx = r + unit(rng) * (d.nx - 2 * r);
            blob.cy = r + unit(rng) * (d.ny - 2 * r);
            blob.cz = r + unit(rng) * (d.nz - 2 * r);
            // Keep the blob center outside the liver grown by (r + 2) voxels.
            double u = (blob.cx - liver.cx) / (liver.ax + r + 2);
            double v = (blob.cy - liver.cy) / (liver.ay + r + 2);
            double w = (blob.cz - liver.cz) / (liver.az + r + 2);
            placed = (u * u + v * v + w * w) > 1.0;
        }
        const float hu = static_cast<float>(hu_dist(rng));
        if (!placed) continue;  // volume too liver-dominated to host this blob
        for (int z = 0; z < d.nz; ++z)
            for (int y = 0; y < d.ny; ++y)
                for (int x = 0; x < d.nx; ++x)
                    if (mask.at(x, y, z) == 0 && blob.level(x, y, z) <= 1.0)
                        vol.at(x, y, z) = hu;
    }

    if (spec.noise_sigma > 0) {
        std::normal_distribution<double> noise(0.0, spec.noise_sigma);
        for (auto& v : vol.voxels) v += static_cast<float>(noise(rng));
    }

    std::size_t fg = 0;
    for (auto l : mask.labels) fg += l;
    const double fraction = static_cast<double>(fg) / d.count();
    if (fraction <= 0.02 || fraction >= 0.5)
        throw data_error("make_phantom: liver fraction " + std::to_string(fraction) +
                         " outside (0.02, 0.5)");

    return {std::move(vol), std::move(mask),
            {liver.cx, liver.cy, liver.cz},
            {liver.ax, liver.ay, liver.az}};
}

}  // namespace volseg
