#pragma once

#include <algorithm>
#include <optional>
#include <unordered_set>
#include <vector>

#include "floc/image.hpp"
#include "floc/rng.hpp"

namespace floc {

// Ground-truth labels aligned to one feature scale.
struct ScaleLabelMap {
    int h = 0, w = 0, stride = 1;
    std::vector<uint8_t> labels;

    uint8_t at(int y, int x) const { return labels[static_cast<size_t>(y) * w + x]; }
    int cells() const { return h * w; }
    bool has_both_classes() const {
        bool c0 = false, c1 = false;
        for (uint8_t v : labels) (v ? c1 : c0) = true;
        return c0 && c1;
    }
};

// Top-left nearest-neighbor: labels[i][j] = mask[i*stride][j*stride]. Keeps
// thin tampered structures that a majority vote would erase.
inline ScaleLabelMap downsample_mask(const Mask& mask, int stride) {
    FLOC_CHECK(stride >= 1, "downsample_mask: stride must be >= 1");
    FLOC_CHECK(mask.h % stride == 0 && mask.w % stride == 0, "downsample_mask: stride ", stride,
               " does not divide mask dimensions ", mask.h, "x", mask.w);
    ScaleLabelMap out;
    out.stride = stride;
    out.h = mask.h / stride;
    out.w = mask.w / stride;
    out.labels.resize(static_cast<size_t>(out.h) * out.w);
    for (int y = 0; y < out.h; ++y)
        for (int x = 0; x < out.w; ++x)
            out.labels[static_cast<size_t>(y) * out.w + x] = mask.at(y * stride, x * stride);
    return out;
}

namespace detail {

// Uniform k-subset of [0, n) without replacement (Floyd's algorithm),
// emitted in draw order.
inline std::vector<int> sample_without_replacement(int n, int k, Rng& rng) {
    std::vector<int> out;
    if (n <= 0 || k <= 0) return out;
    if (k >= n) {
        out.resize(static_cast<size_t>(n));
        for (int i = 0; i < n; ++i) out[static_cast<size_t>(i)] = i;
        return out;
    }
    std::unordered_set<int> chosen;
    out.reserve(static_cast<size_t>(k));
    for (int j = n - k; j < n; ++j) {
        const int t = static_cast<int>(rng.bounded(static_cast<uint64_t>(j) + 1));
        if (chosen.insert(t).second)
            out.push_back(t);
        else {
            chosen.insert(j);
            out.push_back(j);
        }
    }
    return out;
}

inline std::vector<int> class_cells(const ScaleLabelMap& labels, uint8_t cls) {
    std::vector<int> cells;
    for (int i = 0; i < labels.cells(); ++i)
        if (labels.labels[static_cast<size_t>(i)] == cls) cells.push_back(i);
    return cells;
}

} // namespace detail

struct AnchorPick {
    int cell = 0;
    uint8_t label = 0;
};

// Up to per_class anchors per present class, uniform without replacement.
inline std::vector<AnchorPick> sample_anchors(const ScaleLabelMap& labels, int per_class, uint64_t seed) {
    FLOC_CHECK(per_class >= 0, "sample_anchors: per_class must be >= 0");
    std::vector<AnchorPick> anchors;
    Rng rng(hash_mix(seed, 0xa5a5a5a5a5a5a5a5ULL));
    for (uint8_t cls : {uint8_t{0}, uint8_t{1}}) {
        const auto cells = detail::class_cells(labels, cls);
        const auto picks = detail::sample_without_replacement(static_cast<int>(cells.size()),
                                                              std::min<int>(per_class, static_cast<int>(cells.size())), rng);
        for (int p : picks) anchors.push_back({cells[static_cast<size_t>(p)], cls});
    }
    return anchors;
}

// Reference into one of the pool grids (grid index within the pool list).
struct PoolRef {
    int grid = 0;
    int cell = 0;
};

struct PoolPair {
    std::vector<PoolRef> positives;
    std::vector<PoolRef> negatives;
};

// Draw per-anchor positive/negative collections from the union of pool grids.
// Positives share the anchor's class, negatives take the opposite class.
// Returns nullopt ("degenerate-pool") when either side has no candidates; the
// caller must skip the anchor. `exclude` removes one candidate (the anchor
// itself) from the positive side.
inline std::optional<PoolPair> build_pools(uint8_t anchor_label,
                                           const std::vector<const ScaleLabelMap*>& pool_labels, int pos_count,
                                           int neg_count, uint64_t seed,
                                           std::optional<PoolRef> exclude = std::nullopt) {
    FLOC_CHECK(pos_count >= 1 && neg_count >= 1, "build_pools: pool sizes must be >= 1");
    std::vector<PoolRef> pos_candidates, neg_candidates;
    for (size_t g = 0; g < pool_labels.size(); ++g) {
        const auto& lm = *pool_labels[g];
        for (int i = 0; i < lm.cells(); ++i) {
            const bool same = lm.labels[static_cast<size_t>(i)] == anchor_label;
            if (same) {
                if (exclude && exclude->grid == static_cast<int>(g) && exclude->cell == i) continue;
                pos_candidates.push_back({static_cast<int>(g), i});
            } else {
                neg_candidates.push_back({static_cast<int>(g), i});
            }
        }
    }
    if (pos_candidates.empty() || neg_candidates.empty()) return std::nullopt;

    Rng rng(hash_mix(seed, 0xdeadbeefcafef00dULL));
    PoolPair out;
    for (int idx : detail::sample_without_replacement(static_cast<int>(pos_candidates.size()),
                                                      std::min<int>(pos_count, static_cast<int>(pos_candidates.size())),
                                                      rng))
        out.positives.push_back(pos_candidates[static_cast<size_t>(idx)]);
    for (int idx : detail::sample_without_replacement(static_cast<int>(neg_candidates.size()),
                                                      std::min<int>(neg_count, static_cast<int>(neg_candidates.size())),
                                                      rng))
        out.negatives.push_back(neg_candidates[static_cast<size_t>(idx)]);
    return out;
}

struct SamplerConfig {
    int anchors_per_class = 256;
    int positives_per_anchor = 256;
    int negatives_per_anchor = 512;
    bool shared_pools = false; // one pool draw per class instead of per anchor
};

// One anchor with its resolved pools. The anchor always lives on the anchor
// grid; pool refs index the pool grid list.
struct SampledAnchor {
    int cell = 0;
    uint8_t label = 0;
    PoolPair pools;
};

struct PixelSampleSet {
    std::vector<SampledAnchor> anchors; // retained anchors only
    int attempted = 0;                  // anchors drawn before degenerate-pool skips
};

// Anchors from the anchor grid, pools from the union of pool grids.
// `self_pool_grid` >= 0 marks which pool grid IS the anchor grid, enabling
// self-exclusion from the positive pool (the within-image loss).
inline PixelSampleSet draw_sample_set(const ScaleLabelMap& anchor_labels,
                                      const std::vector<const ScaleLabelMap*>& pool_labels, int self_pool_grid,
                                      const SamplerConfig& cfg, uint64_t seed) {
    PixelSampleSet set;
    const auto anchors = sample_anchors(anchor_labels, cfg.anchors_per_class, hash_mix(seed, 1));
    set.attempted = static_cast<int>(anchors.size());

    std::optional<PoolPair> shared[2];
    if (cfg.shared_pools) {
        for (uint8_t cls : {uint8_t{0}, uint8_t{1}})
            shared[cls] = build_pools(cls, pool_labels, cfg.positives_per_anchor, cfg.negatives_per_anchor,
                                      hash_seq({seed, 2, cls}));
    }

    for (size_t i = 0; i < anchors.size(); ++i) {
        const auto& a = anchors[i];
        std::optional<PoolPair> pools;
        if (cfg.shared_pools) {
            pools = shared[a.label];
            if (pools && self_pool_grid >= 0) {
                // Shared draws cannot pre-exclude each anchor; drop self-pairs here.
                auto& pos = pools->positives;
                pos.erase(std::remove_if(pos.begin(), pos.end(),
                                         [&](const PoolRef& r) {
                                             return r.grid == self_pool_grid && r.cell == a.cell;
                                         }),
                          pos.end());
                if (pos.empty()) pools.reset();
            }
        } else {
            std::optional<PoolRef> exclude;
            if (self_pool_grid >= 0) exclude = PoolRef{self_pool_grid, a.cell};
            pools = build_pools(a.label, pool_labels, cfg.positives_per_anchor, cfg.negatives_per_anchor,
                                hash_seq({seed, 3, i}), exclude);
        }
        if (!pools) continue;
        set.anchors.push_back({a.cell, a.label, std::move(*pools)});
    }
    return set;
}

} // namespace floc
