#ifndef VOLSEG_PHANTOM_HPP
#define VOLSEG_PHANTOM_HPP

#include <cstdint>
#include <utility>

#include "volseg/volume.hpp"

namespace volseg {

// Synthetic abdominal phantom: air background, one ellipsoidal liver, a few
// confounder blobs whose intensities fall inside the liver HU window so that
// windowing alone cannot separate them.
struct PhantomSpec {
    Dims dims{64, 64, 64};
    std::uint64_t seed = 0;
    float liver_hu = 60.0f;
    float organ_hu_lo = 20.0f;   // confounder intensity interval
    float organ_hu_hi = 120.0f;
    float noise_sigma = 12.0f;   // additive Gaussian noise, HU
};

struct Phantom {
    Volume volume;     // HU domain
    LabelMask mask;    // liver ellipsoid interior
    Vec3 liver_center;     // sampled geometry, voxel units; lets callers check
    Vec3 liver_semi_axes;  // the rasterized mask against the analytic volume
};

Phantom make_phantom(const PhantomSpec& spec);

}  // namespace volseg

#endif
