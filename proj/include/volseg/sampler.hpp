#ifndef VOLSEG_SAMPLER_HPP
#define VOLSEG_SAMPLER_HPP

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "volseg/volume.hpp"

namespace volseg {

struct SplitPlan {
    std::vector<std::string> train_ids, val_ids, test_ids;
    std::uint64_t seed = 0;

    bool operator==(const SplitPlan&) const = default;
};

// Deterministic shuffle, then round(0.7n) / round(0.1n) / remainder.
SplitPlan split_volumes(const std::vector<std::string>& ids, std::uint64_t seed);

void save_split_plan(const SplitPlan& plan, const std::filesystem::path& path);
SplitPlan load_split_plan(const std::filesystem::path& path);

// Co-centered dual-resolution patch. Both patch Volumes keep real origins and
// spacings, so voxel -> world arithmetic keeps working inside the patch.
struct PatchPair {
    Volume full_patch;       // edge p_full, full resolution
    Volume low_patch;        // edge p_low, low resolution
    Vec3 center_world;       // shared center, mm
    LabelMask label_patch;   // network output footprint; empty when no mask given
};

// Cut the pair around a full-resolution voxel. The low-resolution center is
// found through world coordinates and rounded to the nearest low voxel, which
// keeps the two centers within half a low voxel of each other at any resample
// ratio. Reads outside either volume clamp to the edge. label_edge < 0 means
// p_full - 8, the output footprint of the default network.
PatchPair extract_patch_pair(const Volume& full, const Volume& low,
                             std::array<int, 3> center_voxel, int p_full = 25,
                             int p_low = 19, const LabelMask* mask = nullptr,
                             int label_edge = -1);

// round(fg_fraction * n) centers drawn uniformly from liver voxels, the rest
// uniformly from background; reproducible per seed.
std::vector<PatchPair> sample_training_batch(const Volume& vol, const Volume& low,
                                             const LabelMask& mask, int n,
                                             double fg_fraction, std::uint64_t seed,
                                             int p_full = 25, int p_low = 19,
                                             int label_edge = -1);

}  // namespace volseg

#endif
