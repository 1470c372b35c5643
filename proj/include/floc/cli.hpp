#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "floc/checkpoint.hpp"
#include "floc/config.hpp"
#include "floc/evaluator.hpp"
#include "floc/plot.hpp"
#include "floc/synth.hpp"
#include "floc/trainer.hpp"

namespace floc {
namespace cli {

namespace fs = std::filesystem;

// Every run records what it produced plus the resolved config and seed, so a
// run is reproducible from its output directory alone.
class RunDir {
public:
    explicit RunDir(const std::string& out) : root_(out) {
        std::error_code ec;
        fs::create_directories(root_, ec);
        FLOC_CHECK(!ec && fs::is_directory(root_), "cannot create output directory '", out, "'");
    }

    fs::path path(const std::string& name) {
        produced_.push_back(name);
        return root_ / name;
    }

    const fs::path& root() const { return root_; }

    void write_config(const RunConfig& cfg) { write_config_echo(path("resolved_config.txt").string(), cfg); }

    void finish() {
        nlohmann::json j;
        j["files"] = produced_;
        std::ofstream out(root_ / "files.json");
        out << j.dump(2) << "\n";
    }

private:
    fs::path root_;
    std::vector<std::string> produced_;
};

inline KvList overrides_from_flags(const std::vector<std::string>& sets, uint64_t* seed_flag) {
    KvList kv;
    for (const auto& s : sets) {
        const size_t eq = s.find('=');
        FLOC_CHECK(eq != std::string::npos, "--set expects key=value, got '", s, "'");
        kv.emplace_back(s.substr(0, eq), s.substr(eq + 1));
    }
    if (seed_flag) kv.emplace_back("seed", std::to_string(*seed_flag));
    return kv;
}

inline RunConfig resolve_config(const std::string& config_path, const std::vector<std::string>& sets,
                                const uint64_t* seed_flag) {
    KvList file_kv;
    if (!config_path.empty()) file_kv = parse_config_file(config_path);
    KvList over;
    for (const auto& s : sets) {
        const size_t eq = s.find('=');
        FLOC_CHECK(eq != std::string::npos, "--set expects key=value, got '", s, "'");
        over.emplace_back(s.substr(0, eq), s.substr(eq + 1));
    }
    if (seed_flag) over.emplace_back("seed", std::to_string(*seed_flag));
    return validate_config(file_kv, over);
}

inline void save_score_png(const std::string& path, const ScoreMap& scores) {
    U8Image img(scores.h, scores.w, 1);
    for (size_t i = 0; i < scores.probs.size(); ++i) img.data[i] = quantize_u8(scores.probs[i]);
    save_png(path, img);
}

inline void save_mask_png(const std::string& path, const Mask& mask) {
    U8Image img(mask.h, mask.w, 1);
    for (size_t i = 0; i < mask.data.size(); ++i) img.data[i] = mask.data[i] ? 255 : 0;
    save_png(path, img);
}

// -- subcommand bodies -------------------------------------------------------

inline void cmd_synth(int count, uint64_t seed, int size, const std::string& out) {
    FLOC_CHECK(count >= 1, "synth: --count must be >= 1");
    FLOC_CHECK(size >= 128, "synth: --size must be >= 128");
    RunDir run(out);
    fs::create_directories(run.root() / "images");
    fs::create_directories(run.root() / "masks");
    Manifest manifest;
    for (int i = 0; i < count; ++i) {
        const ImageSample s = make_synthetic_sample(size, hash_seq({seed, static_cast<uint64_t>(i)}));
        const std::string img_rel = "images/synth_" + std::to_string(i) + ".png";
        const std::string mask_rel = "masks/synth_" + std::to_string(i) + "_mask.png";
        save_png(run.path(img_rel).string(), to_u8(s.image));
        save_mask_png(run.path(mask_rel).string(), s.mask);
        manifest.entries.push_back({img_rel, mask_rel, "synthetic", ""});
    }
    save_manifest(run.path("manifest.jsonl").string(), manifest);
    std::ofstream seed_file(run.path("seed.txt").string());
    seed_file << seed << "\n";
    run.finish();
    std::cout << "wrote " << count << " synthetic samples under " << run.root().string() << "\n";
}

inline void cmd_train_backbone(const RunConfig& cfg, const std::string& manifest_path, const std::string& out) {
    RunDir run(out);
    run.write_config(cfg);
    const Manifest manifest = load_manifest(manifest_path);
    auto samples = load_all_samples(manifest, cfg.image_size);
    LocalizationModel model(cfg.backbone, hash_mix(cfg.seed, 0x1157));
    run.path("stage1_last.ckpt");
    run.path("stage1_best.ckpt");
    const auto art = stage1_pretrain(samples, model, cfg, run.root().string());
    save_train_log_csv(run.path("train_log.csv").string(), art.log);
    run.finish();
    std::cout << "stage-1 pretraining done: best loss " << art.best.loss_curve.back() << " over "
              << art.log.rows.size() << " epochs\n";
}

inline void cmd_train_head(const RunConfig& cfg_in, const std::string& manifest_path, const std::string& ckpt_path,
                           const std::string& out) {
    RunDir run(out);
    const CheckpointData stage1 = load_checkpoint(ckpt_path);
    // The architecture comes from the checkpoint; training knobs from config.
    RunConfig cfg = cfg_in;
    cfg.backbone = stage1.run_config().backbone;
    run.write_config(cfg);
    const Manifest manifest = load_manifest(manifest_path);
    auto samples = load_all_samples(manifest, cfg.image_size);
    LocalizationModel model(cfg.backbone, hash_mix(stage1.seed, 0x1157));
    run.path("stage2_last.ckpt");
    run.path("stage2_best.ckpt");
    const auto art = stage2_finetune(stage1, samples, model, cfg, run.root().string());
    save_train_log_csv(run.path("train_log.csv").string(), art.log);
    run.finish();
    std::cout << "stage-2 fine-tuning done: best loss " << art.best.loss_curve.back() << " over "
              << art.log.rows.size() << " epochs\n";
}

inline void cmd_predict(const std::string& ckpt_path, const std::string& image_path, real threshold,
                        const std::string& out) {
    RunDir run(out);
    const CheckpointData ckpt = load_checkpoint(ckpt_path);
    const U8Image raw = load_image_file(image_path);
    U8Image rgb = raw;
    if (rgb.c == 1) {
        U8Image expanded(rgb.h, rgb.w, 3);
        for (int y = 0; y < rgb.h; ++y)
            for (int x = 0; x < rgb.w; ++x)
                for (int ch = 0; ch < 3; ++ch) expanded.at(y, x, ch) = rgb.at(y, x, 0);
        rgb = std::move(expanded);
    }
    const ScoreMap scores = predict_from_checkpoint(ckpt, to_real(rgb));
    save_score_png(run.path("score.png").string(), scores);
    save_mask_png(run.path("pred.png").string(), binarize(scores, threshold));
    run.finish();
    std::cout << "score map " << scores.h << "x" << scores.w << " written under " << run.root().string() << "\n";
}

inline PredictFn predictor_from(const CheckpointData& ckpt, const LocalizationModel& model) {
    const RunConfig cfg = ckpt.run_config();
    return [&model, cfg](const ImageSample& s) { return predict(model, cfg, s.image); };
}

inline void cmd_eval(const std::string& ckpt_path, const std::vector<std::string>& manifest_paths, real threshold,
                     const std::string& out) {
    RunDir run(out);
    const CheckpointData ckpt = load_checkpoint(ckpt_path);
    FLOC_CHECK(ckpt.head_initialized(),
               "eval: head uninitialized (stage-1 checkpoint; run the fine-tuning stage first)");
    const LocalizationModel model = model_from_checkpoint(ckpt);
    const RunConfig cfg = ckpt.run_config();

    std::vector<std::vector<ImageSample>> datasets;
    for (const auto& mp : manifest_paths) datasets.push_back(load_all_samples(load_manifest(mp), cfg.image_size));
    const auto report = evaluate(predictor_from(ckpt, model), datasets, threshold);

    std::ofstream jout(run.path("report.json").string());
    jout << report.to_json().dump(2) << "\n";
    std::ofstream cout_file(run.path("report.csv").string());
    cout_file << report.to_csv();
    run.finish();
    std::cout << "weighted F1 " << report.avg_f1 << ", weighted IoU " << report.avg_iou << "\n";
}

inline void cmd_robustness(const std::string& ckpt_path, const std::string& manifest_path, const std::string& axis,
                           const std::string& chain, real threshold, uint64_t seed, const std::string& out) {
    FLOC_CHECK(axis.empty() != chain.empty(), "robustness: pass exactly one of --axis or --chain");
    RunDir run(out);
    const CheckpointData ckpt = load_checkpoint(ckpt_path);
    FLOC_CHECK(ckpt.head_initialized(),
               "robustness: head uninitialized (stage-1 checkpoint; run the fine-tuning stage first)");
    const LocalizationModel model = model_from_checkpoint(ckpt);
    const RunConfig cfg = ckpt.run_config();
    const auto samples = load_all_samples(load_manifest(manifest_path), cfg.image_size);
    const auto predict_fn = predictor_from(ckpt, model);

    std::vector<CurveRow> curve;
    std::string x_label;
    if (!axis.empty()) {
        curve = robustness_sweep(predict_fn, samples, SweepAxis::by_name(axis), threshold, seed);
        x_label = axis;
    } else {
        curve = robustness_chains(predict_fn, samples, {parse_degradation_chain(chain)}, threshold, seed);
        x_label = "chain";
    }
    std::ofstream csv(run.path("curve.csv").string());
    csv << curve_to_csv(curve);
    nlohmann::json j = nlohmann::json::array();
    for (const auto& r : curve) j.push_back({{"label", r.label}, {"param", r.param}, {"f1", r.mean_f1}});
    std::ofstream jout(run.path("curve.json").string());
    jout << j.dump(2) << "\n";
    save_curve_plot(run.path("curve.png").string(), curve, x_label);
    run.finish();
    std::cout << "robustness curve with " << curve.size() << " rows written under " << run.root().string() << "\n";
}

// -- entry point -------------------------------------------------------------

// Exit codes: 0 success, 1 usage/config error, 2 runtime failure.
inline int run(const std::vector<std::string>& args) {
    CLI::App app{"pixel-contrast forgery localization toolkit"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic splice dataset with masks and a manifest");
    int synth_count = 16;
    uint64_t synth_seed = 0;
    int synth_size = 256;
    std::string synth_out;
    synth->add_option("--count", synth_count, "number of samples");
    synth->add_option("--seed", synth_seed, "generator seed");
    synth->add_option("--size", synth_size, "square image size (>= 128)");
    synth->add_option("--out", synth_out, "output directory")->required();

    // shared train/eval options
    struct Common {
        std::string config, manifest, ckpt, out, image;
        std::vector<std::string> manifests;
        std::vector<std::string> sets;
        uint64_t seed = 0;
        bool seed_given = false;
        real threshold = 0.5;
        std::string axis, chain;
        uint64_t rob_seed = 0;
    } c;

    auto add_config_opts = [&](CLI::App* sub) {
        sub->add_option("--config", c.config, "flat key=value config file");
        sub->add_option("--set", c.sets, "override a config key (key=value, repeatable)");
        sub->add_option("--seed", c.seed, "override the global seed");
        sub->add_option("--out", c.out, "output directory")->required();
    };

    auto* train_b = app.add_subcommand("train-backbone", "stage 1: contrastive pretraining of backbone + projections");
    add_config_opts(train_b);
    train_b->add_option("--manifest", c.manifest, "training manifest (JSON lines)")->required();

    auto* train_h = app.add_subcommand("train-head", "stage 2: freeze backbone, fine-tune the localization head");
    add_config_opts(train_h);
    train_h->add_option("--manifest", c.manifest, "training manifest (JSON lines)")->required();
    train_h->add_option("--checkpoint", c.ckpt, "stage-1 checkpoint")->required();

    auto* predict_cmd = app.add_subcommand("predict", "score map for one image");
    predict_cmd->add_option("--checkpoint", c.ckpt, "stage-2 checkpoint")->required();
    predict_cmd->add_option("--image", c.image, "input image (PNG or JPEG)")->required();
    predict_cmd->add_option("--threshold", c.threshold, "binarization threshold");
    predict_cmd->add_option("--out", c.out, "output directory")->required();

    auto* eval_cmd = app.add_subcommand("eval", "pixel-level F1/IoU evaluation over one or more manifests");
    eval_cmd->add_option("--checkpoint", c.ckpt, "stage-2 checkpoint")->required();
    eval_cmd->add_option("--manifest", c.manifests, "test manifest (repeatable)")->required();
    eval_cmd->add_option("--threshold", c.threshold, "binarization threshold");
    eval_cmd->add_option("--out", c.out, "output directory")->required();

    auto* rob_cmd = app.add_subcommand("robustness", "degradation sweep or chain evaluation with curve plot");
    rob_cmd->add_option("--checkpoint", c.ckpt, "stage-2 checkpoint")->required();
    rob_cmd->add_option("--manifest", c.manifest, "test manifest")->required();
    rob_cmd->add_option("--axis", c.axis, "sweep axis: jpeg|blur|noise|resize");
    rob_cmd->add_option("--chain", c.chain, "degradation chain, e.g. jpeg:60,resize:0.6,blur:5,noise:0.006");
    rob_cmd->add_option("--threshold", c.threshold, "binarization threshold");
    rob_cmd->add_option("--seed", c.rob_seed, "degradation seed");
    rob_cmd->add_option("--out", c.out, "output directory")->required();

    std::vector<std::string> argv_copy = args;
    std::vector<char*> argv;
    argv.push_back(const_cast<char*>("floc"));
    for (auto& a : argv_copy) argv.push_back(a.data());

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e); // prints usage, exit 0
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (synth->parsed()) {
            cmd_synth(synth_count, synth_seed, synth_size, synth_out);
        } else if (train_b->parsed()) {
            c.seed_given = train_b->count("--seed") > 0;
            const RunConfig cfg = resolve_config(c.config, c.sets, c.seed_given ? &c.seed : nullptr);
            FLOC_CHECK(cfg.contrast.any_enabled(), "config: all contrastive losses are disabled; stage 1 has "
                                                   "nothing to optimize");
            cmd_train_backbone(cfg, c.manifest, c.out);
        } else if (train_h->parsed()) {
            c.seed_given = train_h->count("--seed") > 0;
            const RunConfig cfg = resolve_config(c.config, c.sets, c.seed_given ? &c.seed : nullptr);
            cmd_train_head(cfg, c.manifest, c.ckpt, c.out);
        } else if (predict_cmd->parsed()) {
            cmd_predict(c.ckpt, c.image, c.threshold, c.out);
        } else if (eval_cmd->parsed()) {
            cmd_eval(c.ckpt, c.manifests, c.threshold, c.out);
        } else if (rob_cmd->parsed()) {
            cmd_robustness(c.ckpt, c.manifest, c.axis, c.chain, c.threshold, c.rob_seed, c.out);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}

} // namespace cli
} // namespace floc
