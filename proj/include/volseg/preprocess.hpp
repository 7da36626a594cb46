#ifndef VOLSEG_PREPROCESS_HPP
#define VOLSEG_PREPROCESS_HPP

#include "volseg/volume.hpp"

namespace volseg {

// CT intensity window, HU. Values outside get clamped (standard CT windowing),
// so normalize() maps the result onto exactly [0,1].
struct WindowSpec {
    float hu_min = -100.0f;
    float hu_max = 200.0f;
};

// Per-slice bilinear resize to (tx, ty). z count and z spacing are untouched;
// in-plane spacing is rescaled by (n-1)/(t-1) so the slice keeps its physical
// extent between first and last sample (edge-clamped, align-corners sampling).
Volume resample_xy(const Volume& vol, int tx, int ty);

Volume hu_window(const Volume& vol, const WindowSpec& w = {});

// I' = (I - hu_min)/(hu_max - hu_min). Input must already be windowed;
// a voxel outside [hu_min, hu_max] means the window stage was skipped.
Volume normalize(const Volume& vol, const WindowSpec& w = {});

// Multiply by 255 with no rounding; values stay real in [0,255].
Volume to_greyscale(const Volume& vol);

// Second-pathway resolution; same contract as resample_xy.
Volume downsample_low_pathway(const Volume& vol, int tx = 128, int ty = 128);

}  // namespace volseg

#endif
