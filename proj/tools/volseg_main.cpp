#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "volseg/commands.hpp"
#include "volseg/errors.hpp"

namespace {

struct Overrides {
    std::string config_path;
    std::string input_dir;
    std::string output_dir;
    std::uint64_t seed = 0;
    int epochs = 0;
    double lr = 0.0;
    int batch_size = 0;
    int patches = 0;
};

// flag > file > default
void add_pipeline_options(CLI::App* cmd, Overrides& ov) {
    cmd->add_option("--config", ov.config_path, "TOML pipeline configuration");
    cmd->add_option("--input", ov.input_dir, "input volume directory");
    cmd->add_option("--out", ov.output_dir, "output directory");
    cmd->add_option("--seed", ov.seed, "sampler and split seed");
    cmd->add_option("--epochs", ov.epochs, "training epochs");
    cmd->add_option("--lr", ov.lr, "learning rate");
    cmd->add_option("--batch-size", ov.batch_size, "patches per SGD batch");
    cmd->add_option("--patches", ov.patches, "training patches per volume");
}

volseg::PipelineConfig resolve_config(const CLI::App* cmd, const Overrides& ov) {
    volseg::PipelineConfig cfg;
    if (cmd->count("--config")) cfg = volseg::load_pipeline_config(ov.config_path);
    if (cmd->count("--input")) cfg.input_dir = ov.input_dir;
    if (cmd->count("--out")) cfg.output_dir = ov.output_dir;
    if (cmd->count("--seed")) cfg.sampler.seed = ov.seed;
    if (cmd->count("--epochs")) cfg.train.epochs = ov.epochs;
    if (cmd->count("--lr")) cfg.train.lr = ov.lr;
    if (cmd->count("--batch-size")) cfg.train.batch_size = ov.batch_size;
    if (cmd->count("--patches")) cfg.train.patches_per_volume = ov.patches;
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"liver segmentation pipeline"};
    app.require_subcommand(1);

    volseg::PhantomArgs phantom;
    std::string phantom_out;
    CLI::App* cmd_ph = app.add_subcommand("phantom", "generate synthetic test volumes");
    cmd_ph->add_option("--out", phantom_out, "output directory")->required();
    cmd_ph->add_option("--count", phantom.count, "number of phantoms");
    cmd_ph->add_option("--edge", phantom.edge, "cubic edge length in voxels");
    cmd_ph->add_option("--seed", phantom.seed, "generator seed");
    cmd_ph->add_option("--noise-sigma", phantom.noise_sigma, "additive noise level");

    Overrides ov_pre, ov_train, ov_infer, ov_eval;
    CLI::App* cmd_pre = app.add_subcommand("preprocess", "resample, window, and diffuse inputs");
    add_pipeline_options(cmd_pre, ov_pre);
    CLI::App* cmd_tr = app.add_subcommand("train", "fit the network on preprocessed volumes");
    add_pipeline_options(cmd_tr, ov_train);
    CLI::App* cmd_in = app.add_subcommand("infer", "predict masks for preprocessed volumes");
    add_pipeline_options(cmd_in, ov_infer);
    std::string net_base;
    std::vector<std::string> infer_ids;
    cmd_in->add_option("--net", net_base, "weight file base path (<base>.json/.bin)");
    cmd_in->add_option("--id", infer_ids, "restrict to these volume ids");
    CLI::App* cmd_ev = app.add_subcommand("evaluate", "score predictions against masks");
    add_pipeline_options(cmd_ev, ov_eval);

    Overrides ov_ovl;
    std::string ovl_volume, ovl_mask, ovl_out;
    int ovl_slice = 0;
    CLI::App* cmd_ov = app.add_subcommand("overlay", "draw a mask contour on one slice");
    cmd_ov->add_option("--volume", ovl_volume, "greyscale volume (.mhd)")->required();
    cmd_ov->add_option("--mask", ovl_mask, "label mask (.mhd)")->required();
    cmd_ov->add_option("--slice", ovl_slice, "axial slice index")->required();
    cmd_ov->add_option("--png", ovl_out, "output image path")->required();
    cmd_ov->add_option("--config", ov_ovl.config_path,
                       "record the overlay in this pipeline's manifest");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (cmd_ph->parsed()) {
            phantom.out_dir = phantom_out;
            volseg::cmd_phantom(phantom);
        } else if (cmd_pre->parsed()) {
            volseg::cmd_preprocess(resolve_config(cmd_pre, ov_pre));
        } else if (cmd_tr->parsed()) {
            volseg::cmd_train(resolve_config(cmd_tr, ov_train));
        } else if (cmd_in->parsed()) {
            const volseg::PipelineConfig cfg = resolve_config(cmd_in, ov_infer);
            std::string base = net_base;
            if (!cmd_in->count("--net")) base = (cfg.output_dir / "net").string();
            volseg::cmd_infer(cfg, base, infer_ids);
        } else if (cmd_ev->parsed()) {
            volseg::cmd_evaluate(resolve_config(cmd_ev, ov_eval));
        } else if (cmd_ov->parsed()) {
            if (cmd_ov->count("--config")) {
                const volseg::PipelineConfig cfg =
                    volseg::load_pipeline_config(ov_ovl.config_path);
                volseg::cmd_overlay(ovl_volume, ovl_mask, ovl_slice, ovl_out, &cfg);
            } else {
                volseg::cmd_overlay(ovl_volume, ovl_mask, ovl_slice, ovl_out);
            }
        }
    } catch (const volseg::param_error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const volseg::data_error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    } catch (const volseg::divergence_error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 4;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "unexpected error: %s\n", e.what());
        return 1;
    }
    return 0;
}
