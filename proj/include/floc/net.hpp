#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "floc/nn.hpp"

namespace floc {

struct BackboneConfig {
    std::string size = "small"; // "small" (16,32,64,128) or "base" (32,64,128,256)
    std::array<int, 4> channels{16, 32, 64, 128};
    real dropout_rate = 0.1;
    int contrast_dim = 128;
    int head_hidden = 256;

    static std::array<int, 4> channels_for(const std::string& size) {
        if (size == "small") return {16, 32, 64, 128};
        if (size == "base") return {32, 64, 128, 256};
        fail("backbone size must be 'small' or 'base', got '", size, "'");
    }

    void apply_size() { channels = channels_for(size); }
};

// Four per-scale feature grids (strides 4/8/16/32) from one backbone pass.
struct FeaturePyramid {
    std::array<VarPtr, 4> x;
};

// Multi-resolution convolutional backbone with parallel streams and fusion
// stages (one spatial-dropout layer per stream per stage), per-scale linear
// projections for the contrastive stage, and a 1x1-conv localization head on
// the concatenated pyramid. Parameters live in three freezable groups:
// "backbone", "projections", "head".
class LocalizationModel {
public:
    LocalizationModel(const BackboneConfig& cfg, uint64_t init_seed) : cfg_(cfg) {
        Rng rng(hash_mix(init_seed, 0x1234abcd5678ef90ULL));
        const auto& ch = cfg_.channels;

        add_conv("backbone.stem1", 6, ch[0], 3, rng);
        add_conv("backbone.stem2", ch[0], ch[0], 3, rng);
        for (int s = 1; s <= 3; ++s) {
            add_conv("backbone.create" + std::to_string(s), ch[static_cast<size_t>(s - 1)],
                     ch[static_cast<size_t>(s)], 3, rng);
            for (int i = 0; i <= s; ++i)
                add_conv("backbone.stage" + std::to_string(s) + ".unit" + std::to_string(i),
                         ch[static_cast<size_t>(i)], ch[static_cast<size_t>(i)], 3, rng);
            for (int tgt = 0; tgt <= s; ++tgt)
                for (int src = 0; src <= s; ++src) {
                    if (src == tgt) continue;
                    add_conv("backbone.stage" + std::to_string(s) + ".fuse" + std::to_string(src) + "to" +
                                 std::to_string(tgt),
                             ch[static_cast<size_t>(src)], ch[static_cast<size_t>(tgt)], 1, rng);
                }
        }
        for (int i = 0; i < 4; ++i)
            add_linear("proj." + std::to_string(i), ch[static_cast<size_t>(i)], cfg_.contrast_dim, rng);

        const int ctot = ch[0] + ch[1] + ch[2] + ch[3];
        add_linear("head.fc1", ctot, cfg_.head_hidden, rng);
        add_linear("head.fc2", cfg_.head_hidden, 1, rng);

        set_trainable("backbone", true);
        set_trainable("projections", true);
        set_trainable("head", true);
    }

    const BackboneConfig& config() const { return cfg_; }

    // -- forward passes -----------------------------------------------------

    // Strides {4,8,16,32}; train mode applies seed-deterministic spatial
    // dropout, eval mode is a pure function of (weights, image).
    FeaturePyramid forward_backbone(const Image& img, bool train, uint64_t seed = 0) const {
        FLOC_CHECK(img.c == 3, "forward_backbone: RGB input required");
        FLOC_CHECK(img.h % 32 == 0 && img.w % 32 == 0, "forward_backbone: input ", img.h, "x", img.w,
                   " must have both sides divisible by 32 (resize upstream)");
        Rng drop_rng(hash_mix(seed, 0x0f0f0f0f0f0f0f0fULL));
        // Six input planes: RGB plus its high-pass residual (image minus a
        // 3x3 Gaussian blur), the noise-level view splice cues live in.
        const Image blurred = gaussian_blur(img, 3);
        Tensor input({6, img.h, img.w});
        {
            const size_t plane = static_cast<size_t>(img.h) * img.w;
            for (int ch = 0; ch < 3; ++ch)
                for (int y = 0; y < img.h; ++y)
                    for (int xx = 0; xx < img.w; ++xx) {
                        const size_t at = static_cast<size_t>(y) * img.w + xx;
                        input.data[static_cast<size_t>(ch) * plane + at] = img.at(y, xx, ch);
                        input.data[static_cast<size_t>(3 + ch) * plane + at] = img.at(y, xx, ch) - blurred.at(y, xx, ch);
                    }
        }
        auto x = Var::make(std::move(input));

        auto b0 = relu(conv2d(x, p("backbone.stem1.w"), p("backbone.stem1.b"), 2, 1, PadMode::reflect));
        b0 = relu(conv2d(b0, p("backbone.stem2.w"), p("backbone.stem2.b"), 2, 1, PadMode::reflect));
        std::vector<VarPtr> branches{b0};

        for (int s = 1; s <= 3; ++s) {
            const std::string stage = "backbone.stage" + std::to_string(s);
            branches.push_back(relu(conv2d(branches[static_cast<size_t>(s - 1)],
                                           p("backbone.create" + std::to_string(s) + ".w"),
                                           p("backbone.create" + std::to_string(s) + ".b"), 2, 1, PadMode::reflect)));
            std::vector<VarPtr> units;
            for (int i = 0; i <= s; ++i)
                units.push_back(relu(conv2d(branches[static_cast<size_t>(i)],
                                            p(stage + ".unit" + std::to_string(i) + ".w"),
                                            p(stage + ".unit" + std::to_string(i) + ".b"), 1, 1, PadMode::reflect)));
            std::vector<VarPtr> fused;
            for (int tgt = 0; tgt <= s; ++tgt) {
                std::vector<VarPtr> terms{units[static_cast<size_t>(tgt)]};
                const int th = units[static_cast<size_t>(tgt)]->value.dim(1);
                const int tw = units[static_cast<size_t>(tgt)]->value.dim(2);
                for (int src = 0; src <= s; ++src) {
                    if (src == tgt) continue;
                    auto t = conv2d(units[static_cast<size_t>(src)],
                                    p(stage + ".fuse" + std::to_string(src) + "to" + std::to_string(tgt) + ".w"),
                                    p(stage + ".fuse" + std::to_string(src) + "to" + std::to_string(tgt) + ".b"), 1, 0);
                    terms.push_back(upsample_bilinear(t, th, tw));
                }
                fused.push_back(relu(addn(terms)));
            }
            for (int i = 0; i <= s; ++i)
                branches[static_cast<size_t>(i)] =
                    train ? dropout2d(fused[static_cast<size_t>(i)], cfg_.dropout_rate, drop_rng)
                          : fused[static_cast<size_t>(i)];
        }
        // Final per-cell normalization to unit L2 bounds the emitted feature
        // scale (contrastive training otherwise grows raw norms without limit)
        // and gives every scale the same magnitude budget in the head's
        // concatenated input.
        for (size_t i = 0; i < branches.size(); ++i)
            branches[i] = scale(rms_norm_cells(branches[i]), 1.0 / std::sqrt(static_cast<real>(cfg_.channels[i])));
        return FeaturePyramid{{branches[0], branches[1], branches[2], branches[3]}};
    }

    // Two train-mode passes with independent dropout draws derived from the
    // seed; weights are shared, so gradients from both views accumulate.
    std::pair<FeaturePyramid, FeaturePyramid> forward_dual(const Image& img, uint64_t seed) const {
        FLOC_CHECK(cfg_.dropout_rate > 0,
                   "forward_dual: dropout_rate is 0, the two views would coincide and the "
                   "cross-modality loss would be vacuous");
        return {forward_backbone(img, true, hash_mix(seed, 1)), forward_backbone(img, true, hash_mix(seed, 2))};
    }

    // Per-scale linear projection of each grid to the common contrast
    // dimension; cell-major [h*w, D] outputs. Stage-1 only.
    std::array<VarPtr, 4> project_for_contrast(const FeaturePyramid& pyr) const {
        std::array<VarPtr, 4> out;
        for (int i = 0; i < 4; ++i) {
            const std::string name = "proj." + std::to_string(i);
            out[static_cast<size_t>(i)] = linear(to_cells(pyr.x[static_cast<size_t>(i)]), p(name + ".w"), p(name + ".b"));
        }
        return out;
    }

    // Coarse scales upsampled to the stride-4 grid, concatenated with it, two
    // 1x1 convolutions with a ReLU between, logits upsampled to (out_h,out_w),
    // sigmoid last. Consumes raw pyramid features.
    VarPtr forward_head(const FeaturePyramid& pyr, int out_h, int out_w) const {
        const int h = pyr.x[0]->value.dim(1), w = pyr.x[0]->value.dim(2);
        std::vector<VarPtr> scales{pyr.x[0]};
        for (int i = 1; i < 4; ++i) scales.push_back(upsample_bilinear(pyr.x[static_cast<size_t>(i)], h, w));
        auto cells = to_cells(concat_channels(scales));
        auto hidden = relu(linear(cells, p("head.fc1.w"), p("head.fc1.b")));
        auto logits = linear(hidden, p("head.fc2.w"), p("head.fc2.b"));
        auto plane = cells_to_plane(logits, h, w);
        return sigmoid(upsample_bilinear(plane, out_h, out_w));
    }

    ScoreMap score_map_from(const VarPtr& probs) const {
        ScoreMap m(probs->value.dim(1), probs->value.dim(2));
        m.probs = probs->value.data;
        return m;
    }

    // -- parameter groups ----------------------------------------------------

    static std::string group_of(const std::string& name) {
        if (name.rfind("backbone.", 0) == 0) return "backbone";
        if (name.rfind("proj.", 0) == 0) return "projections";
        if (name.rfind("head.", 0) == 0) return "head";
        fail("unknown parameter group for '", name, "'");
    }

    void set_trainable(const std::string& part, bool trainable) {
        FLOC_CHECK(part == "backbone" || part == "projections" || part == "head",
                   "set_trainable: unknown part '", part, "' (expected backbone|projections|head)");
        bool touched = false;
        for (auto& [name, var] : params_)
            if (group_of(name) == part) {
                var->requires_grad = trainable;
                touched = true;
            }
        FLOC_CHECK(touched, "set_trainable: no parameters in part '", part, "'");
    }

    std::vector<VarPtr> trainable_params() const {
        std::vector<VarPtr> out;
        for (const auto& [name, var] : params_)
            if (var->requires_grad) out.push_back(var);
        return out;
    }

    const std::vector<std::pair<std::string, VarPtr>>& named_params() const { return params_; }

    VarPtr param(const std::string& name) const {
        auto it = lookup_.find(name);
        FLOC_CHECK(it != lookup_.end(), "unknown parameter '", name, "'");
        return params_[it->second].second;
    }

    // FNV-1a over the raw bytes of every tensor in the group, in declaration
    // order; bitwise-stable across optimizer steps when frozen.
    uint64_t group_checksum(const std::string& part) const {
        uint64_t h = 1469598103934665603ULL;
        for (const auto& [name, var] : params_) {
            if (group_of(name) != part) continue;
            const auto* bytes = reinterpret_cast<const unsigned char*>(var->value.data.data());
            const size_t n = var->value.data.size() * sizeof(real);
            for (size_t i = 0; i < n; ++i) {
                h ^= bytes[i];
                h *= 1099511628211ULL;
            }
        }
        return h;
    }

    std::vector<std::pair<std::string, Tensor>> state_dict(bool include_head) const {
        std::vector<std::pair<std::string, Tensor>> out;
        for (const auto& [name, var] : params_) {
            if (!include_head && group_of(name) == "head") continue;
            out.emplace_back(name, var->value);
        }
        return out;
    }

    void load_state_dict(const std::vector<std::pair<std::string, Tensor>>& tensors) {
        for (const auto& [name, t] : tensors) {
            auto var = param(name);
            FLOC_CHECK(var->value.shape == t.shape, "checkpoint tensor '", name, "' shape mismatch");
            var->value.data = t.data;
        }
    }

private:
    void add_conv(const std::string& name, int cin, int cout, int k, Rng& rng) {
        Tensor w({cout, cin, k, k});
        const real std = std::sqrt(2.0 / (cin * k * k));
        for (auto& v : w.data) v = std * rng.normal();
        register_param(name + ".w", std::move(w));
        register_param(name + ".b", Tensor({cout}));
    }

    void add_linear(const std::string& name, int in, int out, Rng& rng) {
        Tensor w({out, in});
        const real std = std::sqrt(2.0 / in);
        for (auto& v : w.data) v = std * rng.normal();
        register_param(name + ".w", std::move(w));
        register_param(name + ".b", Tensor({out}));
    }

    void register_param(const std::string& name, Tensor t) {
        lookup_[name] = params_.size();
        params_.emplace_back(name, Var::make(std::move(t), true));
    }

    VarPtr p(const std::string& name) const { return param(name); }

    BackboneConfig cfg_;
    std::vector<std::pair<std::string, VarPtr>> params_;
    std::map<std::string, size_t> lookup_;
};

} // namespace floc
