#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>

#include <json.hpp>

#include "volseg/commands.hpp"
#include "volseg/config.hpp"
#include "volseg/errors.hpp"
#include "volseg/hash.hpp"
#include "volseg/manifest.hpp"
#include "volseg/mhd_io.hpp"
#include "volseg/sampler.hpp"

using namespace volseg;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void spit(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    REQUIRE(out.good());
    out << text;
}

fs::path fresh_dir(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

// Small, fast settings shared by the end-to-end cases.
std::string pipeline_toml(const fs::path& in_dir, const fs::path& out_dir) {
    std::ostringstream ss;
    ss << "[paths]\n"
       << "input_dir = \"" << in_dir.string() << "\"\n"
       << "output_dir = \"" << out_dir.string() << "\"\n"
       << "[preprocess]\n"
       << "resample_target = 24\n"
       << "low_target = 12\n"
       << "[diffusion]\n"
       << "n_iters = 2\n"
       << "[sampler]\n"
       << "p_full = 9\n"
       << "p_low = 9\n"
       << "seed = 5\n"
       << "[net]\n"
       << "conv_channels = [2, 2, 3, 3]\n"
       << "fc_channels = [4, 4]\n"
       << "seed = 1\n"
       << "[train]\n"
       << "lr = 0.05\n"
       << "epochs = 2\n"
       << "batch_size = 3\n"
       << "patches_per_volume = 6\n"
       << "seed = 7\n"
       << "[crf]\n"
       << "block_edge = 8\n"
       << "n_meanfield_iters = 3\n";
    return ss.str();
}

template <typename E>
std::string catch_message(const std::function<void()>& f) {
    try {
        f();
    } catch (const E& e) {
        return e.what();
    }
    return {};
}

}  // namespace

TEST_CASE("toml values parse into the right kinds") {
    const TomlTable t = parse_toml(
        "# top comment\n"
        "[alpha]\n"
        "count = 12\n"
        "rate = -3.5e-1\n"
        "flag = true\n"
        "name = \"liver # not a comment\"\n"
        "edges = [1, 2, 3, 4]   # trailing comment\n"
        "\n"
        "[beta]\n"
        "flag = false\n");
    const auto& a = t.at("alpha");
    CHECK(a.at("count").kind == TomlValue::Kind::Int);
    CHECK(a.at("count").i == 12);
    CHECK(a.at("rate").kind == TomlValue::Kind::Float);
    CHECK(a.at("rate").f == doctest::Approx(-0.35));
    CHECK(a.at("flag").kind == TomlValue::Kind::Bool);
    CHECK(a.at("flag").b);
    CHECK(a.at("name").kind == TomlValue::Kind::String);
    CHECK(a.at("name").s == "liver # not a comment");
    CHECK(a.at("edges").kind == TomlValue::Kind::IntArray);
    CHECK(a.at("edges").arr == std::vector<long long>{1, 2, 3, 4});
    CHECK_FALSE(t.at("beta").at("flag").b);
}

TEST_CASE("toml rejects malformed input") {
    CHECK_THROWS_AS(parse_toml("[a]\nno equals sign\n"), param_error);
    CHECK_THROWS_AS(parse_toml("[a]\n = 3\n"), param_error);
    CHECK_THROWS_AS(parse_toml("[a]\nbad-key = 3\n"), param_error);
    CHECK_THROWS_AS(parse_toml("[unterminated\nx = 1\n"), param_error);
    CHECK_THROWS_AS(parse_toml("[a]\ns = \"open\n"), param_error);
    CHECK_THROWS_AS(parse_toml("[a]\nv = [1, 2\n"), param_error);
    CHECK_THROWS_AS(parse_toml("[a]\nv = [1, , 3]\n"), param_error);
    CHECK_THROWS_AS(parse_toml("[a]\nx = 1\nx = 2\n"), param_error);
    CHECK_THROWS_AS(parse_toml("[a]\nx = 12q\n"), param_error);
    CHECK_THROWS_AS(parse_toml("[a]\nx = 1.2.3\n"), param_error);
    CHECK_THROWS_AS(parse_toml("[a]\nx =\n"), param_error);
}

TEST_CASE("empty toml yields the default pipeline config") {
    const PipelineConfig cfg = config_from_toml(parse_toml(""));
    CHECK(cfg.resample_target == 265);
    CHECK(cfg.low_target == 128);
    CHECK(cfg.window.hu_min == -100.0f);
    CHECK(cfg.window.hu_max == 200.0f);
    CHECK(cfg.sampler.p_full == 25);
    CHECK(cfg.sampler.p_low == 19);
    CHECK(cfg.net.p_full == 25);
    CHECK(cfg.net.conv_channels == std::array<int, 4>{8, 8, 16, 16});
    CHECK(cfg.net.fc_channels == std::array<int, 2>{32, 32});
    CHECK(cfg.train.epochs == 12);
    CHECK(cfg.crf.enabled);
    CHECK_NOTHROW(validate_pipeline_config(cfg));
}

TEST_CASE("config sections map onto pipeline fields") {
    const TomlTable t = parse_toml(
        "[preprocess]\n"
        "resample_target = 33\n"
        "[window]\n"
        "hu_min = -50\n"
        "hu_max = 150\n"
        "[diffusion]\n"
        "dt = 0.1\n"
        "n_iters = 4\n"
        "[sampler]\n"
        "p_full = 17\n"
        "p_low = 11\n"
        "fg_fraction = 0.25\n"
        "[net]\n"
        "conv_channels = [4, 4, 6, 6]\n"
        "seed = 99\n"
        "[train]\n"
        "lr = 0.01\n"
        "epochs = 3\n"
        "[crf]\n"
        "enabled = false\n"
        "w_app = 2.5\n");
    const PipelineConfig cfg = config_from_toml(t);
    CHECK(cfg.resample_target == 33);
    CHECK(cfg.window.hu_min == -50.0f);
    CHECK(cfg.window.hu_max == 150.0f);
    CHECK(cfg.diffusion.dt == doctest::Approx(0.1));
    CHECK(cfg.diffusion.n_iters == 4);
    CHECK(cfg.sampler.p_full == 17);
    CHECK(cfg.sampler.fg_fraction == doctest::Approx(0.25));
    CHECK(cfg.net.p_full == 17);
    CHECK(cfg.net.p_low == 11);
    CHECK(cfg.net.conv_channels == std::array<int, 4>{4, 4, 6, 6});
    CHECK(cfg.net_seed == 99);
    CHECK(cfg.train.lr == doctest::Approx(0.01));
    CHECK(cfg.train.epochs == 3);
    CHECK_FALSE(cfg.crf.enabled);
    CHECK(cfg.crf.params.w_app == doctest::Approx(2.5));
}

TEST_CASE("typos and invalid values are rejected before any stage runs") {
    CHECK_THROWS_AS(config_from_toml(parse_toml("[trian]\nepochs = 3\n")), param_error);
    CHECK_THROWS_AS(config_from_toml(parse_toml("[train]\nlearning_rate = 0.1\n")),
                    param_error);
    CHECK_THROWS_AS(config_from_toml(parse_toml("x = 1\n")), param_error);
    CHECK_THROWS_AS(config_from_toml(parse_toml("[train]\nepochs = \"three\"\n")),
                    param_error);
    CHECK_THROWS_AS(config_from_toml(parse_toml("[net]\nconv_channels = [8, 8]\n")),
                    param_error);
    // values that parse but violate an embedded invariant
    CHECK_THROWS_AS(config_from_toml(parse_toml("[sampler]\np_full = 8\n")), param_error);
    CHECK_THROWS_AS(config_from_toml(parse_toml("[window]\nhu_min = 300\n")), param_error);
    CHECK_THROWS_AS(config_from_toml(parse_toml("[diffusion]\ndt = 0.9\n")), param_error);
    CHECK_THROWS_AS(config_from_toml(parse_toml("[crf]\nblock_edge = 41\n")), param_error);
    CHECK_THROWS_AS(load_pipeline_config("/nonexistent/volseg.toml"), param_error);
}

TEST_CASE("pipeline subcommands run end to end in process") {
    const fs::path in_dir = fresh_dir("volseg_cli_in");
    const fs::path out_dir = fresh_dir("volseg_cli_out");
    const fs::path cfg_path = in_dir / "cfg.toml";
    spit(cfg_path, pipeline_toml(in_dir, out_dir));
    const PipelineConfig cfg = load_pipeline_config(cfg_path);

    PhantomArgs ph;
    ph.out_dir = in_dir;
    ph.count = 3;
    ph.edge = 24;
    ph.seed = 5;
    cmd_phantom(ph);
    REQUIRE(fs::exists(in_dir / "vol_002.mhd"));
    REQUIRE(fs::exists(in_dir / "vol_002_mask.mhd"));

    cmd_preprocess(cfg);
    for (const char* id : {"vol_000", "vol_001", "vol_002"}) {
        const Volume full = load_mhd(out_dir / (std::string(id) + "_full.mhd"));
        CHECK(full.dims.nx == 24);
        CHECK(full.dims.ny == 24);
        CHECK(full.dims.nz == 24);
        for (float v : full.voxels) {
            REQUIRE(v >= 0.0f);
            REQUIRE(v <= 255.0f);
        }
        const Volume low = load_mhd(out_dir / (std::string(id) + "_low.mhd"));
        CHECK(low.dims.nx == 12);
        CHECK(low.dims.ny == 12);
        CHECK(low.dims.nz == 24);
        CHECK(fs::exists(out_dir / (std::string(id) + "_mask.mhd")));
    }

    // determinism: a rerun rewrites every output byte for byte
    const std::string full_bytes = slurp(out_dir / "vol_001_full.raw");
    const std::string low_bytes = slurp(out_dir / "vol_001_low.raw");
    cmd_preprocess(cfg);
    CHECK(slurp(out_dir / "vol_001_full.raw") == full_bytes);
    CHECK(slurp(out_dir / "vol_001_low.raw") == low_bytes);

    cmd_train(cfg);
    for (const char* name : {"net.json", "net.bin", "split.json", "train_trace.json"})
        CHECK(fs::exists(out_dir / name));
    const SplitPlan split = load_split_plan(out_dir / "split.json");
    CHECK(split.train_ids.size() == 2);
    CHECK(split.val_ids.size() == 0);
    CHECK(split.test_ids.size() == 1);
    {
        const nlohmann::json trace = nlohmann::json::parse(slurp(out_dir / "train_trace.json"));
        CHECK(trace.at("loss").size() == 2);
        CHECK(trace.at("val_dsc").size() == 2);
        CHECK(trace.at("validated_on") == "train");  // 3 volumes leave no val split
        CHECK(trace.at("best_epoch").get<int>() >= 0);
    }

    cmd_infer(cfg, (out_dir / "net").string());
    for (const char* id : {"vol_000", "vol_001", "vol_002"}) {
        const LabelMask pred = load_mask_mhd(out_dir / (std::string(id) + "_pred.mhd"));
        CHECK(pred.dims.nx == 24);
        CHECK(pred.dims.nz == 24);
    }

    cmd_evaluate(cfg);
    {
        std::ifstream csv(out_dir / "report.csv");
        REQUIRE(csv.good());
        std::string line;
        std::vector<std::string> lines;
        while (std::getline(csv, line))
            if (!line.empty()) lines.push_back(line);
        REQUIRE(lines.size() == 4);
        CHECK(lines[0] == "volume_id,acc,sen,spe,dsc");
        CHECK(lines[1].starts_with("vol_000,"));

        const nlohmann::json summary = nlohmann::json::parse(slurp(out_dir / "summary.json"));
        for (const char* key : {"acc", "sen", "spe", "dsc"}) {
            const double v = summary.at("average").at(key).get<double>();
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
    }

    cmd_overlay(out_dir / "vol_000_full.mhd", out_dir / "vol_000_mask.mhd", 12,
                out_dir / "vol_000_slice12.png", &cfg);
    CHECK(fs::exists(out_dir / "vol_000_slice12.png"));

    // the manifest covers every stage and its recorded hashes match the files
    const RunManifest manifest = load_manifest(out_dir / "manifest.json");
    CHECK(manifest.tool_version == kToolVersion);
    std::vector<std::string> stages;
    for (const StageRecord& rec : manifest.stages) stages.push_back(rec.stage);
    for (const char* want : {"preprocess", "train", "infer", "evaluate", "overlay"})
        CHECK(std::count(stages.begin(), stages.end(), want) >= 1);
    for (const StageRecord& rec : manifest.stages)
        for (const auto& [name, hex] : rec.outputs)
            CHECK(hash_file_hex(out_dir / name) == hex);

    fs::remove_all(in_dir);
    fs::remove_all(out_dir);
}

TEST_CASE("stage failures carry the volume id and stage name") {
    const fs::path in_dir = fresh_dir("volseg_cli_badin");
    const fs::path out_dir = fresh_dir("volseg_cli_badout");

    PhantomArgs ph;
    ph.out_dir = in_dir;
    ph.count = 2;
    ph.edge = 20;
    ph.seed = 11;
    cmd_phantom(ph);
    spit(in_dir / "vol_001.raw", "short");  // truncated payload

    PipelineConfig cfg = config_from_toml(parse_toml(pipeline_toml(in_dir, out_dir)));
    const std::string msg =
        catch_message<data_error>([&] { cmd_preprocess(cfg); });
    CHECK(msg.find("preprocess vol_001") != std::string::npos);
    CHECK(msg.find("[load]") != std::string::npos);

    // empty directories are data errors, not silent successes
    const fs::path empty1 = fresh_dir("volseg_cli_empty1");
    const fs::path empty2 = fresh_dir("volseg_cli_empty2");
    PipelineConfig empty_cfg = config_from_toml(parse_toml(pipeline_toml(empty1, empty2)));
    CHECK_THROWS_AS(cmd_preprocess(empty_cfg), data_error);
    CHECK_THROWS_AS(cmd_train(empty_cfg), data_error);
    CHECK_THROWS_AS(cmd_evaluate(empty_cfg), data_error);

    PhantomArgs bad;
    bad.out_dir = in_dir;
    bad.count = 0;
    CHECK_THROWS_AS(cmd_phantom(bad), param_error);
    bad.count = 1;
    bad.edge = 8;
    CHECK_THROWS_AS(cmd_phantom(bad), param_error);

    for (const fs::path& p : {in_dir, out_dir, empty1, empty2}) fs::remove_all(p);
}

TEST_CASE("the binary maps error kinds onto exit codes") {
    const char* bin_env = std::getenv("VOLSEG_BIN");
    if (!bin_env) {
        MESSAGE("VOLSEG_BIN not set; run through ctest to exercise the binary");
        return;
    }
    const std::string bin = bin_env;
    auto run = [&](const std::string& args) {
        const std::string cmd = "\"" + bin + "\" " + args + " > /dev/null 2>&1";
        const int status = std::system(cmd.c_str());
        REQUIRE(status != -1);
        return WEXITSTATUS(status);
    };

    CHECK(run("--help") == 0);
    CHECK(run("preprocess --config /nonexistent/volseg.toml") == 2);
    CHECK(run("definitely-not-a-subcommand") == 2);
    CHECK(run("train") == 3);  // default output dir is not a directory

    const fs::path dir = fresh_dir("volseg_cli_proc");
    const fs::path in_dir = dir / "in";
    const fs::path out_dir = dir / "out";
    fs::create_directories(in_dir);
    fs::create_directories(out_dir);
    spit(dir / "broken.toml", "[train\nepochs = 1\n");
    CHECK(run("preprocess --config \"" + (dir / "broken.toml").string() + "\"") == 2);

    const fs::path cfg_path = dir / "cfg.toml";
    spit(cfg_path, pipeline_toml(in_dir, out_dir));
    const std::string with_cfg = "--config \"" + cfg_path.string() + "\"";

    CHECK(run("evaluate " + with_cfg) == 3);  // nothing predicted yet

    CHECK(run("phantom --out \"" + in_dir.string() + "\" --count 1 --edge 20 --seed 3") == 0);
    CHECK(run("preprocess " + with_cfg) == 0);

    // flag beats file: one epoch instead of the configured two
    CHECK(run("train " + with_cfg + " --epochs 1 --patches 4 --batch-size 2") == 0);
    const nlohmann::json trace = nlohmann::json::parse(slurp(out_dir / "train_trace.json"));
    CHECK(trace.at("loss").size() == 1);

    // large enough that the first update overflows the 32-bit parameter store
    CHECK(run("train " + with_cfg + " --epochs 2 --patches 4 --batch-size 2 --lr 1e39") == 4);

    CHECK(run("infer " + with_cfg) == 0);
    CHECK(run("evaluate " + with_cfg) == 0);
    CHECK(run("overlay --volume \"" + (out_dir / "vol_000_full.mhd").string() + "\" --mask \"" +
              (out_dir / "vol_000_mask.mhd").string() + "\" --slice 99 --png \"" +
              (dir / "x.png").string() + "\"") == 2);
    CHECK(run("overlay --volume \"" + (out_dir / "vol_000_full.mhd").string() + "\" --mask \"" +
              (out_dir / "vol_000_mask.mhd").string() + "\" --slice 10 --png \"" +
              (dir / "x.png").string() + "\"") == 0);
    CHECK(fs::exists(dir / "x.png"));

    fs::remove_all(dir);
}
