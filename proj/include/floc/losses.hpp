#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "floc/image.hpp"
#include "floc/sampler.hpp"

namespace floc {

struct ContrastConfig {
    real temperature = 0.1;
    bool normalize_embeddings = true;
    bool loss_within = true;
    bool loss_cross_scale = true;
    bool loss_cross_modality = true;
    // Adds the positive terms to the denominator (standard supervised
    // contrastive variant). Default follows the negatives-only form, whose
    // value may be negative.
    bool supcon_denominator = false;

    bool any_enabled() const { return loss_within || loss_cross_scale || loss_cross_modality; }
};

struct FocalConfig {
    real alpha = 0.5;
    real gamma = 2.0;
};

// Per-pixel tamper probability grid.
struct ScoreMap {
    int h = 0, w = 0;
    std::vector<real> probs;

    ScoreMap() = default;
    ScoreMap(int h_, int w_, real fill = 0.0) : h(h_), w(w_), probs(static_cast<size_t>(h_) * w_, fill) {}
    real& at(int y, int x) { return probs[static_cast<size_t>(y) * w + x]; }
    real at(int y, int x) const { return probs[static_cast<size_t>(y) * w + x]; }
};

namespace detail {

inline void unit_normalize(const real* x, int d, real* out) {
    real sq = 0;
    for (int i = 0; i < d; ++i) sq += x[i] * x[i];
    const real norm = std::sqrt(sq);
    FLOC_CHECK(norm > 0, "pair_contrast: zero vector under normalize");
    for (int i = 0; i < d; ++i) out[i] = x[i] / norm;
}

// log sum exp over values summed in descending order, so the result does not
// depend on the input ordering.
inline real sorted_logsumexp(std::vector<real> vals) {
    std::sort(vals.begin(), vals.end(), std::greater<real>());
    const real m = vals.front();
    if (!std::isfinite(m)) return m;
    real s = 0;
    for (real v : vals) s += std::exp(v - m);
    return m + std::log(s);
}

} // namespace detail

struct PairContrastGrad {
    std::vector<real> d_anchor;
    std::vector<std::vector<real>> d_positives;
    std::vector<std::vector<real>> d_negatives;
};

// Contrastive kernel shared by all three losses:
//   -log[ (1/|P|) * sum_p exp(a.p/tau) / sum_n exp(a.n/tau) ]
// evaluated as logsumexp(neg) - logsumexp(pos) + log|P|, with optional unit
// normalization of every vector first. With supcon_denominator the positive
// terms join the denominator. When `grad` is given, analytic gradients with
// respect to the raw (pre-normalization) inputs are filled in.
inline real pair_contrast(const real* anchor, int d, const std::vector<const real*>& positives,
                          const std::vector<const real*>& negatives, real tau, bool normalize,
                          bool supcon_denominator = false, PairContrastGrad* grad = nullptr) {
    FLOC_CHECK(d >= 1, "pair_contrast: empty vectors");
    FLOC_CHECK(!positives.empty(), "pair_contrast: empty positive list");
    FLOC_CHECK(!negatives.empty(), "pair_contrast: empty negative list");
    FLOC_CHECK(tau > 0, "pair_contrast: temperature must be > 0, got ", tau);
    const int np = static_cast<int>(positives.size());
    const int nn = static_cast<int>(negatives.size());

    // Normalized copies (or raw views when normalization is off).
    std::vector<real> buf;
    std::vector<const real*> pv(positives), nv(negatives);
    const real* av = anchor;
    if (normalize) {
        buf.resize(static_cast<size_t>(1 + np + nn) * d);
        detail::unit_normalize(anchor, d, buf.data());
        av = buf.data();
        for (int i = 0; i < np; ++i) {
            real* dst = buf.data() + static_cast<size_t>(1 + i) * d;
            detail::unit_normalize(positives[static_cast<size_t>(i)], d, dst);
            pv[static_cast<size_t>(i)] = dst;
        }
        for (int j = 0; j < nn; ++j) {
            real* dst = buf.data() + static_cast<size_t>(1 + np + j) * d;
            detail::unit_normalize(negatives[static_cast<size_t>(j)], d, dst);
            nv[static_cast<size_t>(j)] = dst;
        }
    }

    auto dot = [d](const real* a, const real* b) {
        real s = 0;
        for (int i = 0; i < d; ++i) s += a[i] * b[i];
        return s;
    };
    std::vector<real> sp(static_cast<size_t>(np)), sn(static_cast<size_t>(nn));
    for (int i = 0; i < np; ++i) sp[static_cast<size_t>(i)] = dot(av, pv[static_cast<size_t>(i)]) / tau;
    for (int j = 0; j < nn; ++j) sn[static_cast<size_t>(j)] = dot(av, nv[static_cast<size_t>(j)]) / tau;

    const real lse_p = detail::sorted_logsumexp(sp);
    real lse_den;
    if (supcon_denominator) {
        std::vector<real> all(sn);
        all.insert(all.end(), sp.begin(), sp.end());
        lse_den = detail::sorted_logsumexp(all);
    } else {
        lse_den = detail::sorted_logsumexp(sn);
    }
    const real loss = lse_den - lse_p + std::log(static_cast<real>(np));

    if (grad) {
        // dL/ds for each similarity, then chain through the dot products and
        // (when enabled) the normalization.
        std::vector<real> dsp(static_cast<size_t>(np)), dsn(static_cast<size_t>(nn));
        for (int i = 0; i < np; ++i) {
            dsp[static_cast<size_t>(i)] = -std::exp(sp[static_cast<size_t>(i)] - lse_p);
            if (supcon_denominator) dsp[static_cast<size_t>(i)] += std::exp(sp[static_cast<size_t>(i)] - lse_den);
        }
        for (int j = 0; j < nn; ++j) dsn[static_cast<size_t>(j)] = std::exp(sn[static_cast<size_t>(j)] - lse_den);

        std::vector<real> d_av(static_cast<size_t>(d), 0.0);
        grad->d_positives.assign(static_cast<size_t>(np), std::vector<real>(static_cast<size_t>(d), 0.0));
        grad->d_negatives.assign(static_cast<size_t>(nn), std::vector<real>(static_cast<size_t>(d), 0.0));
        for (int i = 0; i < np; ++i) {
            const real c = dsp[static_cast<size_t>(i)] / tau;
            const real* p = pv[static_cast<size_t>(i)];
            auto& gp = grad->d_positives[static_cast<size_t>(i)];
            for (int k = 0; k < d; ++k) {
                d_av[static_cast<size_t>(k)] += c * p[k];
                gp[static_cast<size_t>(k)] += c * av[k];
            }
        }
        for (int j = 0; j < nn; ++j) {
            const real c = dsn[static_cast<size_t>(j)] / tau;
            const real* nvec = nv[static_cast<size_t>(j)];
            auto& gn = grad->d_negatives[static_cast<size_t>(j)];
            for (int k = 0; k < d; ++k) {
                d_av[static_cast<size_t>(k)] += c * nvec[k];
                gn[static_cast<size_t>(k)] += c * av[k];
            }
        }
        grad->d_anchor.assign(static_cast<size_t>(d), 0.0);
        if (normalize) {
            // d/dx of g(x/|x|): (g - (g.u)u)/|x|.
            auto through_norm = [d](const real* raw, const real* unit, const std::vector<real>& g, real* out) {
                real sq = 0;
                for (int k = 0; k < d; ++k) sq += raw[k] * raw[k];
                const real norm = std::sqrt(sq);
                real gu = 0;
                for (int k = 0; k < d; ++k) gu += g[static_cast<size_t>(k)] * unit[k];
                for (int k = 0; k < d; ++k) out[k] = (g[static_cast<size_t>(k)] - gu * unit[k]) / norm;
            };
            through_norm(anchor, av, d_av, grad->d_anchor.data());
            for (int i = 0; i < np; ++i) {
                std::vector<real> g = grad->d_positives[static_cast<size_t>(i)];
                through_norm(positives[static_cast<size_t>(i)], pv[static_cast<size_t>(i)], g,
                             grad->d_positives[static_cast<size_t>(i)].data());
            }
            for (int j = 0; j < nn; ++j) {
                std::vector<real> g = grad->d_negatives[static_cast<size_t>(j)];
                through_norm(negatives[static_cast<size_t>(j)], nv[static_cast<size_t>(j)], g,
                             grad->d_negatives[static_cast<size_t>(j)].data());
            }
        } else {
            grad->d_anchor = d_av;
        }
    }
    return loss;
}

inline real pair_contrast(const std::vector<real>& anchor, const std::vector<std::vector<real>>& positives,
                          const std::vector<std::vector<real>>& negatives, real tau, bool normalize,
                          bool supcon_denominator = false, PairContrastGrad* grad = nullptr) {
    std::vector<const real*> pv, nv;
    for (const auto& p : positives) pv.push_back(p.data());
    for (const auto& n : negatives) nv.push_back(n.data());
    return pair_contrast(anchor.data(), static_cast<int>(anchor.size()), pv, nv, tau, normalize, supcon_denominator,
                         grad);
}

// ---------------------------------------------------------------------------
// Grid-level losses

// Cell-major view over projected embeddings: row i is the D-vector of cell i.
struct EmbeddingGrid {
    int h = 0, w = 0, d = 0;
    const real* data = nullptr;

    const real* cell(int i) const { return data + static_cast<size_t>(i) * d; }
    int cells() const { return h * w; }
};

struct ContrastLossResult {
    real value = 0.0;
    int retained = 0;
    int attempted = 0;
};

// Mean pair_contrast over the retained anchors of a drawn sample set.
// `anchor_grad` / `pool_grads` (same layout as the grids) accumulate
// d(mean)/d(embedding) when non-null; for pools that alias the anchor grid,
// pass the same buffer so contributions add up.
inline ContrastLossResult contrast_loss_from_sets(const PixelSampleSet& set, const EmbeddingGrid& anchor_grid,
                                                  const std::vector<EmbeddingGrid>& pool_grids,
                                                  const ContrastConfig& cfg, real* anchor_grad = nullptr,
                                                  const std::vector<real*>& pool_grads = {}) {
    ContrastLossResult res;
    res.attempted = set.attempted;
    res.retained = static_cast<int>(set.anchors.size());
    if (set.anchors.empty()) return res;
    FLOC_CHECK(pool_grads.empty() || pool_grads.size() == pool_grids.size(),
               "contrast_loss_from_sets: pool_grads size mismatch");
    const bool want_grad = anchor_grad != nullptr;
    const real inv_r = 1.0 / res.retained;

    real total = 0;
    std::vector<const real*> pv, nv;
    PairContrastGrad g;
    for (const auto& a : set.anchors) {
        pv.clear();
        nv.clear();
        for (const auto& r : a.pools.positives) pv.push_back(pool_grids[static_cast<size_t>(r.grid)].cell(r.cell));
        for (const auto& r : a.pools.negatives) nv.push_back(pool_grids[static_cast<size_t>(r.grid)].cell(r.cell));
        total += pair_contrast(anchor_grid.cell(a.cell), anchor_grid.d, pv, nv, cfg.temperature,
                               cfg.normalize_embeddings, cfg.supcon_denominator, want_grad ? &g : nullptr);
        if (want_grad) {
            real* ga = anchor_grad + static_cast<size_t>(a.cell) * anchor_grid.d;
            for (int k = 0; k < anchor_grid.d; ++k) ga[k] += inv_r * g.d_anchor[static_cast<size_t>(k)];
            for (size_t i = 0; i < a.pools.positives.size(); ++i) {
                const auto& r = a.pools.positives[i];
                real* gp = pool_grads[static_cast<size_t>(r.grid)] +
                           static_cast<size_t>(r.cell) * pool_grids[static_cast<size_t>(r.grid)].d;
                for (int k = 0; k < anchor_grid.d; ++k) gp[k] += inv_r * g.d_positives[i][static_cast<size_t>(k)];
            }
            for (size_t j = 0; j < a.pools.negatives.size(); ++j) {
                const auto& r = a.pools.negatives[j];
                real* gn = pool_grads[static_cast<size_t>(r.grid)] +
                           static_cast<size_t>(r.cell) * pool_grids[static_cast<size_t>(r.grid)].d;
                for (int k = 0; k < anchor_grid.d; ++k) gn[k] += inv_r * g.d_negatives[j][static_cast<size_t>(k)];
            }
        }
    }
    res.value = total * inv_r;
    return res;
}

// Within-image loss: anchors and pools both on the highest-resolution grid,
// the anchor excluded from its own positive pool.
inline ContrastLossResult within_image_loss(const EmbeddingGrid& x1, const ScaleLabelMap& l1,
                                            const ContrastConfig& ccfg, const SamplerConfig& scfg, uint64_t seed,
                                            real* x1_grad = nullptr) {
    const auto set = draw_sample_set(l1, {&l1}, 0, scfg, seed);
    return contrast_loss_from_sets(set, x1, {x1}, ccfg, x1_grad, x1_grad ? std::vector<real*>{x1_grad}
                                                                         : std::vector<real*>{});
}

// Cross-scale loss: anchors on the highest-resolution grid, pools drawn from
// the union of the three coarser (projected) grids.
inline ContrastLossResult cross_scale_loss(const EmbeddingGrid& x1, const ScaleLabelMap& l1,
                                           const std::vector<EmbeddingGrid>& coarse,
                                           const std::vector<const ScaleLabelMap*>& coarse_labels,
                                           const ContrastConfig& ccfg, const SamplerConfig& scfg, uint64_t seed,
                                           real* x1_grad = nullptr, const std::vector<real*>& coarse_grads = {}) {
    FLOC_CHECK(coarse.size() == coarse_labels.size(), "cross_scale_loss: grid/label count mismatch");
    const auto set = draw_sample_set(l1, coarse_labels, -1, scfg, seed);
    return contrast_loss_from_sets(set, x1, coarse, ccfg, x1_grad, coarse_grads);
}

// Cross-modality loss: anchors on the first pass, pools on the second
// stochastic pass of the same image. No self-exclusion; the dual grid is a
// distinct view even at the same coordinates.
inline ContrastLossResult cross_modality_loss(const EmbeddingGrid& x1, const EmbeddingGrid& x1_dual,
                                              const ScaleLabelMap& l1, const ContrastConfig& ccfg,
                                              const SamplerConfig& scfg, uint64_t seed, real* x1_grad = nullptr,
                                              real* dual_grad = nullptr) {
    const auto set = draw_sample_set(l1, {&l1}, -1, scfg, seed);
    return contrast_loss_from_sets(set, x1, {x1_dual}, ccfg, x1_grad,
                                   dual_grad ? std::vector<real*>{dual_grad} : std::vector<real*>{});
}

// Unweighted sum of the enabled terms.
inline real total_contrastive_loss(real l_within, real l_cross_scale, real l_cross_modality,
                                   const ContrastConfig& cfg) {
    real total = 0;
    if (cfg.loss_within) total += l_within;
    if (cfg.loss_cross_scale) total += l_cross_scale;
    if (cfg.loss_cross_modality) total += l_cross_modality;
    return total;
}

// ---------------------------------------------------------------------------
// Focal cross-entropy

constexpr real kScoreClampEps = 1e-7;

// Mean over pixels of -a(1-y)^g yhat log(y) - (1-a) y^g (1-yhat) log(1-y),
// scores clamped to [eps, 1-eps] first. `grad` (same length, pre-zeroed by
// the caller) receives d(mean)/d(score); the clamp contributes zero gradient
// outside its range.
inline real focal_ce_raw(const real* scores, int h, int w, const Mask& mask, const FocalConfig& cfg,
                         real* grad = nullptr) {
    FLOC_CHECK(h == mask.h && w == mask.w, "focal_ce: score map ", h, "x", w, " vs mask ", mask.h, "x", mask.w,
               " shape mismatch");
    FLOC_CHECK(cfg.alpha >= 0 && cfg.alpha <= 1, "focal_ce: alpha must be in [0,1]");
    FLOC_CHECK(cfg.gamma >= 0, "focal_ce: gamma must be >= 0");
    const size_t n = static_cast<size_t>(h) * w;
    FLOC_CHECK(n > 0, "focal_ce: empty score map");

    const real a = cfg.alpha, g = cfg.gamma;
    real total = 0;
    for (size_t i = 0; i < n; ++i) {
        const real raw = scores[i];
        const bool clamped_lo = raw < kScoreClampEps;
        const bool clamped_hi = raw > 1.0 - kScoreClampEps;
        const real y = clamped_lo ? kScoreClampEps : (clamped_hi ? 1.0 - kScoreClampEps : raw);
        const real yhat = mask.data[i];
        real d = 0;
        if (yhat > 0.5) {
            total += -a * std::pow(1.0 - y, g) * std::log(y);
            if (grad) {
                d = -a * std::pow(1.0 - y, g) / y;
                if (g > 0) d += a * g * std::pow(1.0 - y, g - 1.0) * std::log(y);
            }
        } else {
            total += -(1.0 - a) * std::pow(y, g) * std::log(1.0 - y);
            if (grad) {
                d = (1.0 - a) * std::pow(y, g) / (1.0 - y);
                if (g > 0) d += -(1.0 - a) * g * std::pow(y, g - 1.0) * std::log(1.0 - y);
            }
        }
        if (grad) grad[i] = (clamped_lo || clamped_hi) ? 0.0 : d / static_cast<real>(n);
    }
    return total / static_cast<real>(n);
}

inline real focal_ce(const ScoreMap& scores, const Mask& mask, const FocalConfig& cfg,
                     std::vector<real>* grad = nullptr) {
    if (grad) {
        grad->assign(scores.probs.size(), 0.0);
        return focal_ce_raw(scores.probs.data(), scores.h, scores.w, mask, cfg, grad->data());
    }
    return focal_ce_raw(scores.probs.data(), scores.h, scores.w, mask, cfg, nullptr);
}

} // namespace floc
