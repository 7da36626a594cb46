#include "volseg/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <unordered_set>

#include <json.hpp>

namespace volseg {
namespace {

// Hand-rolled Fisher-Yates so plans are reproducible across standard
// libraries; std::shuffle leaves the draw sequence implementation-defined.
template <typename T>
void deterministic_shuffle(std::vector<T>& v, std::mt19937_64& rng) {
    for (std::size_t i = v.size(); i > 1; --i)
        std::swap(v[i - 1], v[rng() % i]);
}

int odd_or_throw(int p, const char* what) {
    if (p < 1 || p % 2 == 0)
        throw param_error(std::string("extract_patch_pair: ") + what +
                          " must be a positive odd edge");
    return p;
}

}  // namespace

SplitPlan split_volumes(const std::vector<std::string>& ids, std::uint64_t seed) {
    if (ids.empty()) throw param_error("split_volumes: no ids");
    std::unordered_set<std::string> unique(ids.begin(), ids.end());
    if (unique.size() != ids.size()) throw param_error("split_volumes: duplicate ids");

    std::vector<std::string> pool = ids;
    std::mt19937_64 rng(seed);
    deterministic_shuffle(pool, rng);

    const std::size_t n = pool.size();
    const std::size_t n_train = static_cast<std::size_t>(std::lround(0.7 * n));
    const std::size_t n_val = static_cast<std::size_t>(std::lround(0.1 * n));

    SplitPlan plan;
    plan.seed = seed;
    plan.train_ids.assign(pool.begin(), pool.begin() + n_train);
    plan.val_ids.assign(pool.begin() + n_train, pool.begin() + n_train + n_val);
    plan.test_ids.assign(pool.begin() + n_train + n_val, pool.end());
    return plan;
}

void save_split_plan(const SplitPlan& plan, const std::filesystem::path& path) {
    nlohmann::json j;
    j["train"] = plan.train_ids;
    j["val"] = plan.val_ids;
    j["test"] = plan.test_ids;
    j["seed"] = plan.seed;
    std::ofstream out(path);
    if (!out) throw data_error("save_split_plan: cannot open " + path.string());
    out << j.dump(2) << '\n';
}

SplitPlan load_split_plan(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw data_error("load_split_plan: cannot open " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw data_error("load_split_plan: " + std::string(e.what()));
    }
    SplitPlan plan;
    try {
        plan.train_ids = j.at("train").get<std::vector<std::string>>();
        plan.val_ids = j.at("val").get<std::vector<std::string>>();
        plan.test_ids = j.at("test").get<std::vector<std::string>>();
        plan.seed = j.at("seed").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw data_error("load_split_plan: " + std::string(e.what()));
    }
    return plan;
}

PatchPair extract_patch_pair(const Volume& full, const Volume& low,
                             std::array<int, 3> center_voxel, int p_full, int p_low,
                             const LabelMask* mask, int label_edge) {
    odd_or_throw(p_full, "p_full");
    odd_or_throw(p_low, "p_low");
    if (label_edge < 0) label_edge = p_full - 8;
    odd_or_throw(label_edge, "label_edge");
    if (full.dims.nz != low.dims.nz)
        throw param_error("extract_patch_pair: full and low z extents differ");
    const auto [cx, cy, cz] = center_voxel;
    if (cx < 0 || cx >= full.dims.nx || cy < 0 || cy >= full.dims.ny || cz < 0 ||
        cz >= full.dims.nz)
        throw param_error("extract_patch_pair: center outside the volume");
    if (mask && !(mask->dims == full.dims))
        throw param_error("extract_patch_pair: mask dims differ from the volume");

    PatchPair pair;
    pair.center_world = full.world(cx, cy, cz);

    const int rf = p_full / 2;
    pair.full_patch = make_volume({p_full, p_full, p_full}, full.spacing,
                                  full.world(cx - rf, cy - rf, cz - rf), full.unit_tag);
    for (int z = 0; z < p_full; ++z)
        for (int y = 0; y < p_full; ++y)
            for (int x = 0; x < p_full; ++x)
                pair.full_patch.at(x, y, z) =
                    full.at_clamped(cx - rf + x, cy - rf + y, cz - rf + z);

    // nearest low-resolution voxel to the shared world center
    const int lx = static_cast<int>(std::lround((pair.center_world.x - low.origin.x) / low.spacing.x));
    const int ly = static_cast<int>(std::lround((pair.center_world.y - low.origin.y) / low.spacing.y));
    const int lz = static_cast<int>(std::lround((pair.center_world.z - low.origin.z) / low.spacing.z));
    const int rl = p_low / 2;
    pair.low_patch = make_volume({p_low, p_low, p_low}, low.spacing,
                                 low.world(lx - rl, ly - rl, lz - rl), low.unit_tag);
    for (int z = 0; z < p_low; ++z)
        for (int y = 0; y < p_low; ++y)
            for (int x = 0; x < p_low; ++x)
                pair.low_patch.at(x, y, z) =
                    low.at_clamped(lx - rl + x, ly - rl + y, lz - rl + z);

    if (mask) {
        const int rl2 = label_edge / 2;
        pair.label_patch = make_mask({label_edge, label_edge, label_edge});
        for (int z = 0; z < label_edge; ++z)
            for (int y = 0; y < label_edge; ++y)
                for (int x = 0; x < label_edge; ++x) {
                    const int mx = std::clamp(cx - rl2 + x, 0, mask->dims.nx - 1);
                    const int my = std::clamp(cy - rl2 + y, 0, mask->dims.ny - 1);
                    const int mz = std::clamp(cz - rl2 + z, 0, mask->dims.nz - 1);
                    pair.label_patch.at(x, y, z) = mask->at(mx, my, mz);
                }
    }
    return pair;
}

std::vector<PatchPair> sample_training_batch(const Volume& vol, const Volume& low,
                                             const LabelMask& mask, int n,
                                             double fg_fraction, std::uint64_t seed,
                                             int p_full, int p_low, int label_edge) {
    if (n < 0) throw param_error("sample_training_batch: n must be >= 0");
    if (fg_fraction < 0.0 || fg_fraction > 1.0)
        throw param_error("sample_training_batch: fg_fraction must lie in [0, 1]");
    if (!(mask.dims == vol.dims))
        throw param_error("sample_training_batch: mask dims differ from the volume");

    std::vector<std::size_t> fg, bg;
    for (std::size_t i = 0; i < mask.labels.size(); ++i)
        (mask.labels[i] ? fg : bg).push_back(i);

    const int n_fg = static_cast<int>(std::lround(fg_fraction * n));
    const int n_bg = n - n_fg;
    if (n_fg > 0 && fg.empty())
        throw data_error("sample_training_batch: mask has no foreground voxels");
    if (n_bg > 0 && bg.empty())
        throw data_error("sample_training_batch: mask has no background voxels");

    std::mt19937_64 rng(seed);
    std::vector<PatchPair> batch;
    batch.reserve(static_cast<std::size_t>(n));
    const Dims d = vol.dims;
    auto draw_from = [&](const std::vector<std::size_t>& pool, int count) {
        for (int k = 0; k < count; ++k) {
            const std::size_t idx = pool[rng() % pool.size()];
            const int z = static_cast<int>(idx / (static_cast<std::size_t>(d.nx) * d.ny));
            const int rem = static_cast<int>(idx % (static_cast<std::size_t>(d.nx) * d.ny));
            const int y = rem / d.nx, x = rem % d.nx;
            batch.push_back(
                extract_patch_pair(vol, low, {x, y, z}, p_full, p_low, &mask, label_edge));
        }
    };
    draw_from(fg, n_fg);
    draw_from(bg, n_bg);
    return batch;
}

}  // namespace volseg
