#pragma once

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "floc/augment.hpp"
#include "floc/checkpoint.hpp"
#include "floc/config.hpp"
#include "floc/dataset.hpp"
#include "floc/net.hpp"

namespace floc {

struct TrainLogRow {
    int epoch = 0;
    real loss = 0;
    real lr = 0;
    real retained_frac = 0;
    real seconds = 0;
};

struct TrainLog {
    std::vector<TrainLogRow> rows;
};

inline void save_train_log_csv(const std::string& path, const TrainLog& log) {
    std::ofstream out(path);
    FLOC_CHECK(out.good(), "cannot write train log '", path, "'");
    out << "epoch,loss,lr,retained_frac,seconds\n";
    out.precision(17);
    for (const auto& r : log.rows)
        out << r.epoch << "," << r.loss << "," << r.lr << "," << r.retained_frac << "," << r.seconds << "\n";
}

inline uint64_t loss_curve_digest(const TrainLog& log) {
    uint64_t h = 1469598103934665603ULL;
    for (const auto& r : log.rows) h = digest_bytes(&r.loss, sizeof(r.loss), h);
    return h;
}

// Adam with beta = (0.9, 0.999) and zero weight decay.
class Adam {
public:
    explicit Adam(std::vector<VarPtr> params) : params_(std::move(params)) {
        for (const auto& p : params_) {
            m_.emplace_back(p->value.shape);
            v_.emplace_back(p->value.shape);
        }
    }

    void zero_grad() {
        for (const auto& p : params_) {
            p->ensure_grad();
            p->zero_grad();
        }
    }

    // Multiply accumulated gradients (e.g. by 1/batch) before stepping.
    void scale_grads(real c) {
        for (const auto& p : params_) {
            p->ensure_grad();
            for (auto& g : p->grad.data) g *= c;
        }
    }

    void step(real lr) {
        ++t_;
        const real bc1 = 1.0 - std::pow(beta1_, t_);
        const real bc2 = 1.0 - std::pow(beta2_, t_);
        for (size_t i = 0; i < params_.size(); ++i) {
            auto& p = params_[i];
            p->ensure_grad();
            real* w = p->value.ptr();
            const real* g = p->grad.ptr();
            real* m = m_[i].ptr();
            real* v = v_[i].ptr();
            for (size_t j = 0; j < p->value.data.size(); ++j) {
                m[j] = beta1_ * m[j] + (1.0 - beta1_) * g[j];
                v[j] = beta2_ * v[j] + (1.0 - beta2_) * g[j] * g[j];
                const real mhat = m[j] / bc1;
                const real vhat = v[j] / bc2;
                w[j] -= lr * mhat / (std::sqrt(vhat) + eps_);
            }
        }
    }

private:
    std::vector<VarPtr> params_;
    std::vector<Tensor> m_, v_;
    int t_ = 0;
    static constexpr real beta1_ = 0.9;
    static constexpr real beta2_ = 0.999;
    static constexpr real eps_ = 1e-8;
};

// Reduce-on-plateau: halve after `patience` consecutive non-improving epochs,
// never increase, respect the floor.
class PlateauSchedule {
public:
    PlateauSchedule(real lr_init, real factor, int patience, real lr_min)
        : lr_(lr_init), factor_(factor), patience_(patience), lr_min_(lr_min) {}

    real lr() const { return lr_; }

    void observe(real epoch_loss) {
        if (epoch_loss < best_) {
            best_ = epoch_loss;
            bad_ = 0;
            return;
        }
        if (++bad_ >= patience_) {
            lr_ = std::max(lr_ * factor_, lr_min_);
            bad_ = 0;
        }
    }

private:
    real lr_;
    real factor_;
    int patience_;
    real lr_min_;
    real best_ = std::numeric_limits<real>::infinity();
    int bad_ = 0;
};

// lr(t) = min + (init - min) * (1 + cos(pi t / T)) / 2, hitting the floor at
// the final step.
inline real cosine_lr(int step, int total_steps, real lr_init, real lr_min) {
    if (total_steps <= 1) return lr_min;
    const real t = static_cast<real>(step) / static_cast<real>(total_steps - 1);
    return lr_min + (lr_init - lr_min) * (1.0 + std::cos(3.14159265358979323846 * t)) * 0.5;
}

namespace detail {

inline std::vector<size_t> epoch_order(size_t n, uint64_t seed, int epoch) {
    std::vector<size_t> order(n);
    for (size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng(hash_seq({seed, 0x07de7, static_cast<uint64_t>(epoch)}));
    for (size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.bounded(i)]);
    return order;
}

struct StageTimer {
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
    real seconds() const {
        return std::chrono::duration<real>(std::chrono::steady_clock::now() - t0).count();
    }
};

} // namespace detail

struct StageArtifacts {
    CheckpointData best;
    TrainLog log;
};

inline std::vector<ImageSample> load_all_samples(const Manifest& manifest, int image_size) {
    std::vector<ImageSample> out;
    out.reserve(manifest.entries.size());
    for (const auto& e : manifest.entries) out.push_back(load_sample(e, image_size));
    return out;
}

namespace detail {

inline CheckpointData snapshot(const LocalizationModel& model, int stage, const RunConfig& cfg, const TrainLog& log) {
    CheckpointData ckpt;
    ckpt.stage = stage;
    ckpt.seed = cfg.seed;
    ckpt.config_kv = config_to_kv(cfg);
    for (const auto& r : log.rows) ckpt.loss_curve.push_back(r.loss);
    ckpt.loss_digest = loss_curve_digest(log);
    ckpt.tensors = model.state_dict(/*include_head=*/stage >= 2);
    return ckpt;
}

inline void maybe_write(const CheckpointData& ckpt, const std::string& dir, const std::string& name) {
    if (dir.empty()) return;
    save_checkpoint((std::filesystem::path(dir) / name).string(), ckpt);
}

} // namespace detail

// Stage 1: optimize the total multi-view contrastive loss over backbone +
// projection weights; the head is untouched. Plateau schedule driven by the
// epoch-mean training loss. Checkpoints written each epoch (`stage1_last`)
// plus at the best loss (`stage1_best`) when `ckpt_dir` is given.
inline StageArtifacts stage1_pretrain(const std::vector<ImageSample>& samples, LocalizationModel& model,
                                      const RunConfig& cfg, const std::string& ckpt_dir = "") {
    FLOC_CHECK(!samples.empty(), "stage1_pretrain: empty manifest");
    FLOC_CHECK(cfg.contrast.any_enabled(), "stage1_pretrain: all contrastive losses are disabled");
    FLOC_CHECK(!cfg.contrast.loss_cross_modality || cfg.backbone.dropout_rate > 0,
               "stage1_pretrain: cross-modality loss requires dropout_rate > 0");

    model.set_trainable("backbone", true);
    model.set_trainable("projections", true);
    model.set_trainable("head", false);
    Adam opt(model.trainable_params());
    PlateauSchedule sched(cfg.lr_init, cfg.plateau_factor, cfg.plateau_patience, cfg.lr_min);

    StageArtifacts art;
    real best_loss = std::numeric_limits<real>::infinity();
    for (int epoch = 0; epoch < cfg.epochs_stage1; ++epoch) {
        detail::StageTimer timer;
        const real lr = sched.lr();
        const auto order = detail::epoch_order(samples.size(), cfg.seed, epoch);
        real epoch_loss = 0;
        long long nondegenerate = 0, retained_total = 0, attempted_total = 0;
        int batch_count = 0;
        opt.zero_grad();

        for (size_t pos = 0; pos < order.size(); ++pos) {
            const size_t idx = order[pos];
            const ImageSample sample =
                cfg.augment_stage1 ? augment(samples[idx], hash_seq({cfg.seed, static_cast<uint64_t>(epoch), idx}))
                                   : samples[idx];
            const auto l1 = downsample_mask(sample.mask, 4);
            const auto l2 = downsample_mask(sample.mask, 8);
            const auto l3 = downsample_mask(sample.mask, 16);
            const auto l4 = downsample_mask(sample.mask, 32);

            const uint64_t pass_seed = hash_seq({cfg.seed, 0xd0a1, static_cast<uint64_t>(epoch), idx});
            const uint64_t samp_seed = hash_seq({cfg.seed, 0x5a31, static_cast<uint64_t>(epoch), idx});

            FeaturePyramid pyr, pyr_dual;
            if (cfg.contrast.loss_cross_modality) {
                auto pair = model.forward_dual(sample.image, pass_seed);
                pyr = pair.first;
                pyr_dual = pair.second;
            } else {
                pyr = model.forward_backbone(sample.image, true, hash_mix(pass_seed, 1));
            }
            const auto proj = model.project_for_contrast(pyr);

            std::vector<VarPtr> terms;
            ContrastLossResult r_within, r_scale, r_modal;
            if (cfg.contrast.loss_within) {
                const auto set = draw_sample_set(l1, {&l1}, 0, cfg.sampler, hash_mix(samp_seed, 1));
                terms.push_back(contrast_loss_node(set, proj[0], {proj[0]}, cfg.contrast, &r_within));
            }
            if (cfg.contrast.loss_cross_scale) {
                const auto set = draw_sample_set(l1, {&l2, &l3, &l4}, -1, cfg.sampler, hash_mix(samp_seed, 2));
                terms.push_back(contrast_loss_node(set, proj[0], {proj[1], proj[2], proj[3]}, cfg.contrast, &r_scale));
            }
            if (cfg.contrast.loss_cross_modality) {
                const auto proj_dual = model.project_for_contrast(pyr_dual);
                const auto set = draw_sample_set(l1, {&l1}, -1, cfg.sampler, hash_mix(samp_seed, 3));
                terms.push_back(contrast_loss_node(set, proj[0], {proj_dual[0]}, cfg.contrast, &r_modal));
            }
            retained_total += r_within.retained + r_scale.retained + r_modal.retained;
            attempted_total += r_within.attempted + r_scale.attempted + r_modal.attempted;
            if (r_within.retained + r_scale.retained + r_modal.retained == 0) continue; // degenerate image

            auto total = addn(terms);
            epoch_loss += total->value.data[0];
            ++nondegenerate;
            ++batch_count;
            backward(total);

            if (batch_count == cfg.batch_size || pos + 1 == order.size()) {
                if (batch_count > 0) {
                    opt.scale_grads(1.0 / batch_count);
                    opt.step(lr);
                }
                opt.zero_grad();
                batch_count = 0;
            }
        }

        FLOC_CHECK(nondegenerate > 0,
                   "stage1_pretrain: all-degenerate batch stream, no image yields contrastive anchors "
                   "(every mask is single-class at feature resolution)");
        epoch_loss /= static_cast<real>(nondegenerate);
        sched.observe(epoch_loss);

        TrainLogRow row;
        row.epoch = epoch;
        row.loss = epoch_loss;
        row.lr = lr;
        row.retained_frac = attempted_total > 0 ? static_cast<real>(retained_total) / attempted_total : 0.0;
        row.seconds = timer.seconds();
        art.log.rows.push_back(row);

        const auto ckpt = detail::snapshot(model, 1, cfg, art.log);
        detail::maybe_write(ckpt, ckpt_dir, "stage1_last.ckpt");
        if (epoch_loss < best_loss) {
            best_loss = epoch_loss;
            art.best = ckpt;
            detail::maybe_write(ckpt, ckpt_dir, "stage1_best.ckpt");
        }
    }
    return art;
}

// Stage 2: backbone and projections frozen, head optimized with focal
// cross-entropy under a cosine schedule; dropout-off forward features.
inline StageArtifacts stage2_finetune(const CheckpointData& stage1_ckpt, const std::vector<ImageSample>& samples,
                                      LocalizationModel& model, const RunConfig& cfg,
                                      const std::string& ckpt_dir = "") {
    FLOC_CHECK(stage1_ckpt.stage == 1, "stage2_finetune: checkpoint stage mismatch (expected a stage-1 "
                                       "checkpoint, got stage ", stage1_ckpt.stage, ")");
    FLOC_CHECK(!samples.empty(), "stage2_finetune: empty manifest");
    model.load_state_dict(stage1_ckpt.tensors);
    model.set_trainable("backbone", false);
    model.set_trainable("projections", false);
    model.set_trainable("head", true);
    Adam opt(model.trainable_params());

    const int steps_per_epoch =
        static_cast<int>((samples.size() + static_cast<size_t>(cfg.batch_size) - 1) / cfg.batch_size);
    const int total_steps = steps_per_epoch * cfg.epochs_stage2;
    int step = 0;

    StageArtifacts art;
    real best_loss = std::numeric_limits<real>::infinity();
    for (int epoch = 0; epoch < cfg.epochs_stage2; ++epoch) {
        detail::StageTimer timer;
        const auto order = detail::epoch_order(samples.size(), hash_mix(cfg.seed, 2), epoch);
        real epoch_loss = 0;
        real last_lr = 0;
        int batch_count = 0;
        opt.zero_grad();

        for (size_t pos = 0; pos < order.size(); ++pos) {
            const size_t idx = order[pos];
            const ImageSample sample =
                cfg.augment_stage2
                    ? augment(samples[idx], hash_seq({cfg.seed, 0xf2, static_cast<uint64_t>(epoch), idx}))
                    : samples[idx];
            const auto pyr = model.forward_backbone(sample.image, false);
            const auto probs = model.forward_head(pyr, sample.image.h, sample.image.w);
            auto loss = focal_loss_node(probs, sample.mask, cfg.focal);
            epoch_loss += loss->value.data[0];
            ++batch_count;
            backward(loss);

            if (batch_count == cfg.batch_size || pos + 1 == order.size()) {
                const real lr = cosine_lr(step, total_steps, cfg.lr_init, cfg.lr_min);
                last_lr = lr;
                opt.scale_grads(1.0 / batch_count);
                opt.step(lr);
                opt.zero_grad();
                batch_count = 0;
                ++step;
            }
        }
        epoch_loss /= static_cast<real>(samples.size());

        TrainLogRow row;
        row.epoch = epoch;
        row.loss = epoch_loss;
        row.lr = last_lr;
        row.retained_frac = 1.0;
        row.seconds = timer.seconds();
        art.log.rows.push_back(row);

        const auto ckpt = detail::snapshot(model, 2, cfg, art.log);
        detail::maybe_write(ckpt, ckpt_dir, "stage2_last.ckpt");
        if (epoch_loss < best_loss) {
            best_loss = epoch_loss;
            art.best = ckpt;
            detail::maybe_write(ckpt, ckpt_dir, "stage2_best.ckpt");
        }
    }
    return art;
}

// Deterministic eval-mode score map for arbitrary-size input: the image is
// resized to the configured square size for the forward pass and the score
// map is resized back to the native resolution.
inline ScoreMap predict(const LocalizationModel& model, const RunConfig& cfg, const Image& image,
                        bool head_ready = true) {
    FLOC_CHECK(head_ready, "predict: head uninitialized (stage-1 checkpoint; run the fine-tuning stage first)");
    Image input = image;
    if (image.h != cfg.image_size || image.w != cfg.image_size)
        input = resize_bilinear(image, cfg.image_size, cfg.image_size);
    const auto pyr = model.forward_backbone(input, false);
    const auto probs = model.forward_head(pyr, cfg.image_size, cfg.image_size);
    ScoreMap native = model.score_map_from(probs);
    if (image.h == cfg.image_size && image.w == cfg.image_size) return native;

    Image tmp(cfg.image_size, cfg.image_size, 1);
    tmp.data = native.probs;
    Image resized = resize_bilinear(tmp, image.h, image.w);
    ScoreMap out(image.h, image.w);
    out.probs = resized.data;
    return out;
}

inline ScoreMap predict_from_checkpoint(const CheckpointData& ckpt, const Image& image) {
    FLOC_CHECK(ckpt.head_initialized(),
               "predict: head uninitialized (stage-1 checkpoint; run the fine-tuning stage first)");
    const LocalizationModel model = model_from_checkpoint(ckpt);
    return predict(model, ckpt.run_config(), image);
}

} // namespace floc
