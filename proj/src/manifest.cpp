#include "volseg/manifest.hpp"

#include <fstream>
#include <sstream>

#include "volseg/errors.hpp"
#include "volseg/hash.hpp"

namespace volseg {

std::string hash_file_hex(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw data_error("cannot hash missing file " + path.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    const std::string bytes = ss.str();
    return hash_hex(fnv1a64(bytes.data(), bytes.size()));
}

RunManifest load_manifest(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw data_error("cannot open manifest " + path.string());
    nlohmann::json j;
    try {
        f >> j;
        RunManifest m;
        m.tool_version = j.at("tool_version");
        m.config = j.at("config");
        m.split = j.value("split", nlohmann::json());
        for (const auto& js : j.at("stages")) {
            StageRecord r;
            r.stage = js.at("stage");
            r.item = js.value("item", "");
            r.seconds = js.at("seconds");
            for (const auto& [k, v] : js.at("inputs").items())
                r.inputs.emplace_back(k, v.get<std::string>());
            for (const auto& [k, v] : js.at("outputs").items())
                r.outputs.emplace_back(k, v.get<std::string>());
            m.stages.push_back(std::move(r));
        }
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw data_error("bad manifest " + path.string() + ": " + e.what());
    }
}

RunManifest open_manifest(const std::filesystem::path& path, nlohmann::json config) {
    RunManifest m;
    if (std::filesystem::exists(path)) m = load_manifest(path);
    m.tool_version = kToolVersion;
    m.config = std::move(config);
    return m;
}

void save_manifest(const RunManifest& m, const std::filesystem::path& path) {
    nlohmann::json j;
    j["tool_version"] = m.tool_version;
    j["config"] = m.config;
    j["split"] = m.split;
    j["stages"] = nlohmann::json::array();
    for (const StageRecord& r : m.stages) {
        nlohmann::json js;
        js["stage"] = r.stage;
        js["item"] = r.item;
        js["seconds"] = r.seconds;
        js["inputs"] = nlohmann::json::object();
        for (const auto& [k, v] : r.inputs) js["inputs"][k] = v;
        js["outputs"] = nlohmann::json::object();
        for (const auto& [k, v] : r.outputs) js["outputs"][k] = v;
        j["stages"].push_back(std::move(js));
    }
    std::ofstream f(path);
    if (!f) throw data_error("cannot write manifest " + path.string());
    f << j.dump(2) << "\n";
    if (!f) throw data_error("short write to manifest " + path.string());
}

}  // namespace volseg
