#ifndef VOLSEG_COMMANDS_HPP
#define VOLSEG_COMMANDS_HPP

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "volseg/config.hpp"

namespace volseg {

// Subcommand bodies. Each throws the usual error types; the binary maps them
// onto exit codes. Everything is callable in-process so the pipeline can be
// driven from tests without spawning the executable.

struct PhantomArgs {
    std::filesystem::path out_dir;
    int count = 1;
    int edge = 64;
    std::uint64_t seed = 0;
    double noise_sigma = 12.0;
};

// Writes <id>.mhd plus <id>_mask.mhd per phantom, ids vol_000, vol_001, ...
void cmd_phantom(const PhantomArgs& args);

// input_dir/<id>.mhd -> output_dir/<id>_full.mhd + <id>_low.mhd (+ resampled
// <id>_mask.mhd when a mask sits next to the input). Errors carry the volume
// id and the stage that failed.
void cmd_preprocess(const PipelineConfig& cfg);

// Splits the preprocessed volumes, trains, reports validation DSC per epoch,
// and persists the best-validation weights as net.json/net.bin next to a
// split.json and train_trace.json.
void cmd_train(const PipelineConfig& cfg);

// Dense inference (plus CRF refinement when enabled) over the given ids, or
// over every preprocessed volume when ids is empty. net_base names the weight
// pair as <net_base>.json / <net_base>.bin.
void cmd_infer(const PipelineConfig& cfg, const std::string& net_base,
               const std::vector<std::string>& ids = {});

// Pairs <id>_pred.mhd with <id>_mask.mhd, prints a metric table, and writes
// report.csv + summary.json.
void cmd_evaluate(const PipelineConfig& cfg);

// Boundary overlay of one axial slice. When cfg is given the run manifest in
// its output directory records the invocation.
void cmd_overlay(const std::filesystem::path& volume_path,
                 const std::filesystem::path& mask_path, int slice_index,
                 const std::filesystem::path& out_png,
                 const PipelineConfig* cfg = nullptr);

}  // namespace volseg

#endif
