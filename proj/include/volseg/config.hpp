#ifndef VOLSEG_CONFIG_HPP
#define VOLSEG_CONFIG_HPP

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "volseg/crf.hpp"
#include "volseg/diffusion.hpp"
#include "volseg/network.hpp"
#include "volseg/preprocess.hpp"

namespace volseg {

// Minimal TOML subset: [section] headers, key = value with integers, floats,
// booleans, quoted strings, and flat integer arrays. Enough for the pipeline
// config; anything else is rejected loudly.
struct TomlValue {
    enum class Kind { Int, Float, Bool, String, IntArray };
    Kind kind = Kind::Int;
    long long i = 0;
    double f = 0.0;
    bool b = false;
    std::string s;
    std::vector<long long> arr;
};

using TomlTable = std::map<std::string, std::map<std::string, TomlValue>>;

TomlTable parse_toml(const std::string& text);
TomlTable load_toml(const std::filesystem::path& path);

struct SamplerParams {
    int p_full = 25;
    int p_low = 19;
    double fg_fraction = 0.5;
    std::uint64_t seed = 0;
};

struct TrainParams {
    double lr = 0.05;
    int epochs = 12;
    int batch_size = 8;
    int patches_per_volume = 40;
    std::uint64_t seed = 0;
};

struct CrfSection {
    CrfParams params;
    bool enabled = true;
    int block_edge = 8;
};

struct PipelineConfig {
    WindowSpec window;
    int resample_target = 265;
    int low_target = 128;
    DiffusionParams diffusion;
    SamplerParams sampler;
    NetConfig net;          // p_full/p_low mirrored from sampler
    std::uint64_t net_seed = 0;
    TrainParams train;
    CrfSection crf;
    std::filesystem::path input_dir;
    std::filesystem::path output_dir;
};

// Field-by-field checks plus every embedded validator; throws param_error.
void validate_pipeline_config(const PipelineConfig& cfg);

// Unknown sections or keys are errors: a typo must not silently fall back to
// a default.
PipelineConfig config_from_toml(const TomlTable& t);
PipelineConfig load_pipeline_config(const std::filesystem::path& path);

nlohmann::json config_to_json(const PipelineConfig& cfg);

}  // namespace volseg

#endif
