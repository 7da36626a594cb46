#include "volseg/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include "volseg/crf.hpp"
#include "volseg/diffusion.hpp"
#include "volseg/errors.hpp"
#include "volseg/hash.hpp"
#include "volseg/manifest.hpp"
#include "volseg/metrics.hpp"
#include "volseg/mhd_io.hpp"
#include "volseg/network.hpp"
#include "volseg/overlay.hpp"
#include "volseg/phantom.hpp"
#include "volseg/preprocess.hpp"
#include "volseg/sampler.hpp"

namespace fs = std::filesystem;

namespace volseg {
namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string volume_id(int i) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "vol_%03d", i);
    return buf;
}

// Primary volumes in a directory: <id>.mhd files whose id is not one of the
// derived suffixes this tool itself writes.
std::vector<std::string> scan_ids(const fs::path& dir, const std::string& suffix) {
    if (!fs::is_directory(dir))
        throw data_error("scan: " + dir.string() + " is not a directory");
    static const char* derived[] = {"_mask", "_full", "_low", "_pred"};
    std::vector<std::string> ids;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        const fs::path p = entry.path();
        if (p.extension() != ".mhd" && p.extension() != ".mha") continue;
        std::string stem = p.stem().string();
        if (suffix.empty()) {
            bool skip = false;
            for (const char* d : derived)
                if (stem.size() > std::string(d).size() && stem.ends_with(d)) skip = true;
            if (skip) continue;
        } else {
            if (!stem.ends_with(suffix)) continue;
            stem.resize(stem.size() - suffix.size());
        }
        ids.push_back(stem);
    }
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    return ids;
}

// Same sampling grid as resample_xy, nearest neighbor so labels stay crisp.
LabelMask resample_mask(const LabelMask& m, int tx, int ty) {
    if (m.dims.nx == tx && m.dims.ny == ty) return m;
    const double scale_x = static_cast<double>(m.dims.nx - 1) / (tx - 1);
    const double scale_y = static_cast<double>(m.dims.ny - 1) / (ty - 1);
    LabelMask out = make_mask({tx, ty, m.dims.nz});
    for (int z = 0; z < m.dims.nz; ++z)
        for (int y = 0; y < ty; ++y) {
            const int sy = std::clamp(static_cast<int>(std::lround(y * scale_y)), 0,
                                      m.dims.ny - 1);
            for (int x = 0; x < tx; ++x) {
                const int sx = std::clamp(static_cast<int>(std::lround(x * scale_x)), 0,
                                          m.dims.nx - 1);
                out.at(x, y, z) = m.at(sx, sy, z);
            }
        }
    return out;
}

Volume load_grey(const fs::path& path) {
    Volume v = load_mhd(path);
    v.unit_tag = UnitTag::Grey;
    validate_volume(v);
    return v;
}

LabelMask argmax_labels(const ProbabilityMap& probs) {
    LabelMask m = make_mask(probs.dims);
    for (int z = 0; z < probs.dims.nz; ++z)
        for (int y = 0; y < probs.dims.ny; ++y)
            for (int x = 0; x < probs.dims.nx; ++x) {
                int best = 0;
                double best_p = probs.at(0, x, y, z);
                for (int c = 1; c < probs.channels; ++c)
                    if (probs.at(c, x, y, z) > best_p) {
                        best_p = probs.at(c, x, y, z);
                        best = c;
                    }
                m.at(x, y, z) = static_cast<std::uint8_t>(best);
            }
    return m;
}

// infer_dense pads with clamped reads, so the map already covers every voxel
// of the source volume.
LabelMask predict_labels(const Network& net, const Volume& full, const Volume& low,
                         const CrfSection& crf) {
    const ProbabilityMap probs = infer_dense(net, full, low);
    if (crf.enabled) return crf_refine_blocked(probs, full, crf.params, crf.block_edge);
    return argmax_labels(probs);
}

double mask_dsc(const LabelMask& pred, const LabelMask& truth) {
    return compute_metrics(confusion(pred, truth)).dsc;
}

// Replace-or-append keyed on (stage, item) so a rerun refreshes its own
// record instead of piling up duplicates.
void record_stage(RunManifest& m, StageRecord rec) {
    for (auto& existing : m.stages)
        if (existing.stage == rec.stage && existing.item == rec.item) {
            existing = std::move(rec);
            return;
        }
    m.stages.push_back(std::move(rec));
}

fs::path manifest_path(const PipelineConfig& cfg) {
    return cfg.output_dir / "manifest.json";
}

nlohmann::json split_to_json(const SplitPlan& plan) {
    return {{"train", plan.train_ids},
            {"val", plan.val_ids},
            {"test", plan.test_ids},
            {"seed", plan.seed}};
}

struct PreprocessedVolume {
    Volume full;
    Volume low;
    LabelMask mask;
};

PreprocessedVolume load_preprocessed(const fs::path& dir, const std::string& id,
                                     bool need_mask) {
    PreprocessedVolume pv;
    pv.full = load_grey(dir / (id + "_full.mhd"));
    pv.low = load_grey(dir / (id + "_low.mhd"));
    if (need_mask) {
        pv.mask = load_mask_mhd(dir / (id + "_mask.mhd"));
        if (!(pv.mask.dims.nx == pv.full.dims.nx && pv.mask.dims.ny == pv.full.dims.ny &&
              pv.mask.dims.nz == pv.full.dims.nz))
            throw data_error(id + ": mask shape does not match the full volume");
    }
    return pv;
}

}  // namespace

void cmd_phantom(const PhantomArgs& args) {
    if (args.count < 1) throw param_error("phantom: count must be positive");
    if (args.edge < 16) throw param_error("phantom: edge must be at least 16");
    if (args.noise_sigma < 0) throw param_error("phantom: noise_sigma must be >= 0");
    if (args.out_dir.empty()) throw param_error("phantom: output directory required");
    fs::create_directories(args.out_dir);
    for (int i = 0; i < args.count; ++i) {
        const std::string id = volume_id(i);
        PhantomSpec spec;
        spec.dims = {args.edge, args.edge, args.edge};
        spec.seed = args.seed + static_cast<std::uint64_t>(i);
        spec.noise_sigma = static_cast<float>(args.noise_sigma);
        const Phantom ph = make_phantom(spec);
        save_mhd(ph.volume, args.out_dir / (id + ".mhd"));
        save_mask_mhd(ph.mask, args.out_dir / (id + "_mask.mhd"), ph.volume.spacing,
                      ph.volume.origin);
        std::printf("%s: %dx%dx%d phantom written\n", id.c_str(), args.edge, args.edge,
                    args.edge);
    }
}

void cmd_preprocess(const PipelineConfig& cfg) {
    validate_pipeline_config(cfg);
    const std::vector<std::string> ids = scan_ids(cfg.input_dir, "");
    if (ids.empty())
        throw data_error("preprocess: no input volumes in " + cfg.input_dir.string());
    fs::create_directories(cfg.output_dir);
    RunManifest manifest = open_manifest(manifest_path(cfg), config_to_json(cfg));

    for (const std::string& id : ids) {
        const auto t0 = std::chrono::steady_clock::now();
        const fs::path in_path = cfg.input_dir / (id + ".mhd");
        const fs::path in_used = fs::exists(in_path) ? in_path : cfg.input_dir / (id + ".mha");
        const fs::path mask_in = cfg.input_dir / (id + "_mask.mhd");
        const bool have_mask = fs::exists(mask_in);

        std::string stage = "load";
        try {
            Volume vol = load_mhd(in_used);
            stage = "resize";
            vol = resample_xy(vol, cfg.resample_target, cfg.resample_target);
            stage = "window";
            vol = hu_window(vol, cfg.window);
            stage = "normalize";
            vol = normalize(vol, cfg.window);
            stage = "greymap";
            vol = to_greyscale(vol);
            stage = "diffusion";
            vol = eed_filter(vol, cfg.diffusion);
            stage = "low";
            const Volume low = downsample_low_pathway(vol, cfg.low_target, cfg.low_target);
            stage = "save";
            save_mhd(vol, cfg.output_dir / (id + "_full.mhd"));
            save_mhd(low, cfg.output_dir / (id + "_low.mhd"));
            if (have_mask) {
                stage = "mask";
                LabelMask mask = load_mask_mhd(mask_in);
                if (mask.dims.nz != vol.dims.nz)
                    throw data_error("mask depth differs from the volume");
                mask = resample_mask(mask, cfg.resample_target, cfg.resample_target);
                save_mask_mhd(mask, cfg.output_dir / (id + "_mask.mhd"), vol.spacing,
                              vol.origin);
            }
        } catch (const param_error& e) {
            throw param_error("preprocess " + id + " [" + stage + "]: " + e.what());
        } catch (const data_error& e) {
            throw data_error("preprocess " + id + " [" + stage + "]: " + e.what());
        } catch (const divergence_error& e) {
            throw divergence_error("preprocess " + id + " [" + stage + "]: " + e.what());
        }

        StageRecord rec;
        rec.stage = "preprocess";
        rec.item = id;
        rec.seconds = seconds_since(t0);
        rec.inputs.emplace_back(in_used.filename().string(), hash_file_hex(in_used));
        if (have_mask)
            rec.inputs.emplace_back(mask_in.filename().string(), hash_file_hex(mask_in));
        for (const char* suffix : {"_full", "_low"}) {
            const fs::path p = cfg.output_dir / (id + suffix + std::string(".mhd"));
            rec.outputs.emplace_back(p.filename().string(), hash_file_hex(p));
            const fs::path raw = cfg.output_dir / (id + suffix + std::string(".raw"));
            rec.outputs.emplace_back(raw.filename().string(), hash_file_hex(raw));
        }
        if (have_mask) {
            const fs::path p = cfg.output_dir / (id + "_mask.mhd");
            rec.outputs.emplace_back(p.filename().string(), hash_file_hex(p));
            const fs::path raw = cfg.output_dir / (id + "_mask.raw");
            rec.outputs.emplace_back(raw.filename().string(), hash_file_hex(raw));
        }
        record_stage(manifest, std::move(rec));
        std::printf("%s: preprocessed to %dx%dx(z) full + %dx%d low\n", id.c_str(),
                    cfg.resample_target, cfg.resample_target, cfg.low_target, cfg.low_target);
    }
    save_manifest(manifest, manifest_path(cfg));
}

void cmd_train(const PipelineConfig& cfg) {
    validate_pipeline_config(cfg);
    const auto t0 = std::chrono::steady_clock::now();
    const std::vector<std::string> ids = scan_ids(cfg.output_dir, "_full");
    if (ids.empty())
        throw data_error("train: no preprocessed volumes in " + cfg.output_dir.string());

    const SplitPlan split = split_volumes(ids, cfg.sampler.seed);
    if (split.train_ids.empty()) throw param_error("train: the train split is empty");
    save_split_plan(split, cfg.output_dir / "split.json");

    RunManifest manifest = open_manifest(manifest_path(cfg), config_to_json(cfg));
    manifest.split = split_to_json(split);

    // Validation falls back to the training volumes when the split is too
    // small to reserve any; the trace records which set was used.
    const bool own_val = !split.val_ids.empty();
    const std::vector<std::string>& val_ids = own_val ? split.val_ids : split.train_ids;

    std::vector<PreprocessedVolume> train_vols;
    for (const std::string& id : split.train_ids)
        train_vols.push_back(load_preprocessed(cfg.output_dir, id, true));
    std::vector<PreprocessedVolume> val_vols;
    for (const std::string& id : val_ids)
        val_vols.push_back(load_preprocessed(cfg.output_dir, id, true));

    const int label_edge = cfg.sampler.p_full - (receptive_field(cfg.net) - 1);
    std::vector<PatchPair> pool;
    for (std::size_t i = 0; i < train_vols.size(); ++i) {
        const std::uint64_t seed =
            cfg.sampler.seed ^ fnv1a64(split.train_ids[i].data(), split.train_ids[i].size());
        auto patches = sample_training_batch(train_vols[i].full, train_vols[i].low,
                                             train_vols[i].mask,
                                             cfg.train.patches_per_volume,
                                             cfg.sampler.fg_fraction, seed,
                                             cfg.sampler.p_full, cfg.sampler.p_low,
                                             label_edge);
        pool.insert(pool.end(), std::make_move_iterator(patches.begin()),
                    std::make_move_iterator(patches.end()));
    }
    std::vector<std::vector<PatchPair>> batches;
    for (std::size_t i = 0; i < pool.size(); i += cfg.train.batch_size) {
        const std::size_t end = std::min(pool.size(), i + cfg.train.batch_size);
        batches.emplace_back(std::make_move_iterator(pool.begin() + i),
                             std::make_move_iterator(pool.begin() + end));
    }

    NetConfig net_cfg = cfg.net;
    net_cfg.p_full = cfg.sampler.p_full;
    net_cfg.p_low = cfg.sampler.p_low;
    Network net = build_network(net_cfg, cfg.net_seed);
    Network best = net;
    double best_dsc = -1.0;
    int best_epoch = -1;
    std::vector<double> loss_trace, val_trace;

    for (int epoch = 0; epoch < cfg.train.epochs; ++epoch) {
        const std::vector<double> losses =
            train(net, batches, cfg.train.lr, 1, cfg.train.seed + epoch);
        loss_trace.push_back(losses.at(0));

        double dsc_sum = 0.0;
        for (const PreprocessedVolume& pv : val_vols)
            dsc_sum += mask_dsc(predict_labels(net, pv.full, pv.low, CrfSection{.enabled = false}),
                                pv.mask);
        const double val_dsc = dsc_sum / val_vols.size();
        val_trace.push_back(val_dsc);
        if (val_dsc > best_dsc) {
            best_dsc = val_dsc;
            best_epoch = epoch;
            best = net;
        }
        std::printf("epoch %d: loss %.6f val_dsc %.4f%s\n", epoch, losses.at(0), val_dsc,
                    epoch == best_epoch ? " *" : "");
    }

    save_network(best, (cfg.output_dir / "net.json").string(),
                 (cfg.output_dir / "net.bin").string());
    {
        nlohmann::json trace = {{"loss", loss_trace},
                               {"val_dsc", val_trace},
                               {"best_epoch", best_epoch},
                               {"best_val_dsc", best_dsc},
                               {"validated_on", own_val ? "val" : "train"}};
        std::ofstream out(cfg.output_dir / "train_trace.json");
        if (!out) throw data_error("train: cannot write train_trace.json");
        out << trace.dump(2) << '\n';
    }

    StageRecord rec;
    rec.stage = "train";
    rec.item = "all";
    rec.seconds = seconds_since(t0);
    std::set<std::string> used(split.train_ids.begin(), split.train_ids.end());
    used.insert(val_ids.begin(), val_ids.end());
    for (const std::string& id : used)
        for (const char* suffix : {"_full.mhd", "_low.mhd", "_mask.mhd"}) {
            const fs::path p = cfg.output_dir / (id + suffix);
            rec.inputs.emplace_back(p.filename().string(), hash_file_hex(p));
        }
    for (const char* name : {"net.json", "net.bin", "split.json", "train_trace.json"})
        rec.outputs.emplace_back(name, hash_file_hex(cfg.output_dir / name));
    record_stage(manifest, std::move(rec));
    save_manifest(manifest, manifest_path(cfg));
    std::printf("best epoch %d (val_dsc %.4f) saved to net.json/net.bin\n", best_epoch,
                best_dsc);
}

void cmd_infer(const PipelineConfig& cfg, const std::string& net_base,
               const std::vector<std::string>& ids) {
    validate_pipeline_config(cfg);
    std::vector<std::string> targets = ids;
    if (targets.empty()) targets = scan_ids(cfg.output_dir, "_full");
    if (targets.empty())
        throw data_error("infer: no preprocessed volumes in " + cfg.output_dir.string());

    const Network net = load_network(net_base + ".json", net_base + ".bin");
    RunManifest manifest = open_manifest(manifest_path(cfg), config_to_json(cfg));

    for (const std::string& id : targets) {
        const auto t0 = std::chrono::steady_clock::now();
        const PreprocessedVolume pv = load_preprocessed(cfg.output_dir, id, false);
        const LabelMask pred = predict_labels(net, pv.full, pv.low, cfg.crf);
        const fs::path out = cfg.output_dir / (id + "_pred.mhd");
        save_mask_mhd(pred, out, pv.full.spacing, pv.full.origin);

        std::size_t fg = 0;
        for (std::uint8_t v : pred.labels) fg += v;
        std::printf("%s: %zu foreground voxels%s\n", id.c_str(), fg,
                    cfg.crf.enabled ? " (CRF refined)" : "");

        StageRecord rec;
        rec.stage = "infer";
        rec.item = id;
        rec.seconds = seconds_since(t0);
        for (const char* suffix : {"_full.mhd", "_low.mhd"}) {
            const fs::path p = cfg.output_dir / (id + suffix);
            rec.inputs.emplace_back(p.filename().string(), hash_file_hex(p));
        }
        rec.inputs.emplace_back("net.json", hash_file_hex(net_base + ".json"));
        rec.inputs.emplace_back("net.bin", hash_file_hex(net_base + ".bin"));
        rec.outputs.emplace_back(out.filename().string(), hash_file_hex(out));
        const fs::path raw = cfg.output_dir / (id + "_pred.raw");
        rec.outputs.emplace_back(raw.filename().string(), hash_file_hex(raw));
        record_stage(manifest, std::move(rec));
    }
    save_manifest(manifest, manifest_path(cfg));
}

void cmd_evaluate(const PipelineConfig& cfg) {
    validate_pipeline_config(cfg);
    const auto t0 = std::chrono::steady_clock::now();
    const std::vector<std::string> ids = scan_ids(cfg.output_dir, "_pred");
    std::vector<std::string> paired;
    for (const std::string& id : ids)
        if (fs::exists(cfg.output_dir / (id + "_mask.mhd"))) paired.push_back(id);
    if (paired.empty())
        throw data_error("evaluate: no prediction/mask pairs in " + cfg.output_dir.string());

    DatasetGroup group{"all", {}};
    for (const std::string& id : paired) {
        const LabelMask pred = load_mask_mhd(cfg.output_dir / (id + "_pred.mhd"));
        const LabelMask truth = load_mask_mhd(cfg.output_dir / (id + "_mask.mhd"));
        if (!(pred.dims.nx == truth.dims.nx && pred.dims.ny == truth.dims.ny &&
              pred.dims.nz == truth.dims.nz))
            throw data_error("evaluate " + id + ": prediction and truth shapes differ");
        MetricReport r = compute_metrics(confusion(pred, truth));
        r.volume_id = id;
        group.reports.push_back(r);
    }
    const Summary summary = aggregate({group});

    write_metrics_csv(group.reports, cfg.output_dir / "report.csv");
    write_summary_json(summary, cfg.output_dir / "summary.json");

    std::printf("%-12s %7s %7s %7s %7s\n", "volume", "ACC", "SEN", "SPE", "DSC");
    for (const MetricReport& r : group.reports)
        std::printf("%-12s %7.2f %7.2f %7.2f %7.2f%s\n", r.volume_id.c_str(), 100 * r.acc,
                    100 * r.sen, 100 * r.spe, 100 * r.dsc, r.degenerate ? " (degenerate)" : "");
    std::printf("%-12s %7.2f %7.2f %7.2f %7.2f\n", "average", 100 * summary.average.acc,
                100 * summary.average.sen, 100 * summary.average.spe,
                100 * summary.average.dsc);

    RunManifest manifest = open_manifest(manifest_path(cfg), config_to_json(cfg));
    StageRecord rec;
    rec.stage = "evaluate";
    rec.item = "all";
    rec.seconds = seconds_since(t0);
    for (const std::string& id : paired)
        for (const char* suffix : {"_pred.mhd", "_mask.mhd"}) {
            const fs::path p = cfg.output_dir / (id + suffix);
            rec.inputs.emplace_back(p.filename().string(), hash_file_hex(p));
        }
    for (const char* name : {"report.csv", "summary.json"})
        rec.outputs.emplace_back(name, hash_file_hex(cfg.output_dir / name));
    record_stage(manifest, std::move(rec));
    save_manifest(manifest, manifest_path(cfg));
}

void cmd_overlay(const std::filesystem::path& volume_path,
                 const std::filesystem::path& mask_path, int slice_index,
                 const std::filesystem::path& out_png, const PipelineConfig* cfg) {
    const auto t0 = std::chrono::steady_clock::now();
    const Volume vol = load_mhd(volume_path);
    const LabelMask mask = load_mask_mhd(mask_path);
    write_overlay_png(vol, mask, slice_index, out_png);
    std::printf("%s: slice %d -> %s\n", volume_path.filename().string().c_str(), slice_index,
                out_png.string().c_str());

    if (cfg) {
        RunManifest manifest = open_manifest(manifest_path(*cfg), config_to_json(*cfg));
        StageRecord rec;
        rec.stage = "overlay";
        rec.item = volume_path.filename().string() + ":" + std::to_string(slice_index);
        rec.seconds = seconds_since(t0);
        rec.inputs.emplace_back(volume_path.filename().string(), hash_file_hex(volume_path));
        rec.inputs.emplace_back(mask_path.filename().string(), hash_file_hex(mask_path));
        rec.outputs.emplace_back(out_png.filename().string(), hash_file_hex(out_png));
        record_stage(manifest, std::move(rec));
        save_manifest(manifest, manifest_path(*cfg));
    }
}

}  // namespace volseg
