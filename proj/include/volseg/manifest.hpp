#ifndef VOLSEG_MANIFEST_HPP
#define VOLSEG_MANIFEST_HPP

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

namespace volseg {

inline constexpr const char* kToolVersion = "volseg 0.1.0";

// One subcommand invocation over one item. Hashes let a rerun be checked
// against the record byte for byte; timings are informational only.
struct StageRecord {
    std::string stage;
    std::string item;
    double seconds = 0.0;
    std::vector<std::pair<std::string, std::string>> inputs;   // name -> fnv1a64 hex
    std::vector<std::pair<std::string, std::string>> outputs;
};

struct RunManifest {
    std::string tool_version = kToolVersion;
    nlohmann::json config;
    nlohmann::json split;
    std::vector<StageRecord> stages;
};

std::string hash_file_hex(const std::filesystem::path& path);

// Loads an existing manifest so consecutive subcommands append to one
// history; a fresh one is created otherwise. The config snapshot always
// reflects the current run.
RunManifest open_manifest(const std::filesystem::path& path, nlohmann::json config);
RunManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const RunManifest& m, const std::filesystem::path& path);

}  // namespace volseg

#endif
