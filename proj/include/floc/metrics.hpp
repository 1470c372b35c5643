#pragma once

#include <algorithm>
#include <vector>

#include "floc/image.hpp"
#include "floc/losses.hpp"

namespace floc {

// pred = 1 iff score > threshold (strict, so an exact-0.5 score under the
// default threshold is deterministic: pristine).
inline Mask binarize(const ScoreMap& scores, real threshold = 0.5) {
    Mask out(scores.h, scores.w);
    for (size_t i = 0; i < scores.probs.size(); ++i) out.data[i] = scores.probs[i] > threshold ? 1 : 0;
    return out;
}

struct F1Iou {
    real f1 = 0;
    real iou = 0;
};

// Pixel-level F1/IoU with tampered as the positive class; both metrics are
// 1.0 when prediction and ground truth are both empty.
inline F1Iou f1_iou(const Mask& pred, const Mask& gt) {
    FLOC_CHECK(pred.h == gt.h && pred.w == gt.w, "f1_iou: shape mismatch ", pred.h, "x", pred.w, " vs ", gt.h, "x",
               gt.w);
    long long tp = 0, fp = 0, fn = 0;
    for (size_t i = 0; i < pred.data.size(); ++i) {
        const bool p = pred.data[i] != 0;
        const bool g = gt.data[i] != 0;
        if (p && g)
            ++tp;
        else if (p && !g)
            ++fp;
        else if (!p && g)
            ++fn;
    }
    if (tp + fp + fn == 0) return {1.0, 1.0};
    F1Iou out;
    out.f1 = 2.0 * static_cast<real>(tp) / static_cast<real>(2 * tp + fp + fn);
    out.iou = static_cast<real>(tp) / static_cast<real>(tp + fp + fn);
    return out;
}

// Sample-weighted average over datasets: sum(metric_i * n_i) / sum(n_i).
// Rows are accumulated in a sorted order so the result is independent of the
// caller's row ordering.
inline real weighted_average(std::vector<std::pair<real, long long>> rows) {
    FLOC_CHECK(!rows.empty(), "weighted_average: empty row list");
    for (const auto& [metric, count] : rows) {
        (void)metric;
        FLOC_CHECK(count >= 1, "weighted_average: counts must be >= 1");
    }
    std::sort(rows.begin(), rows.end());
    real num = 0, den = 0;
    for (const auto& [metric, count] : rows) {
        num += metric * static_cast<real>(count);
        den += static_cast<real>(count);
    }
    return num / den;
}

} // namespace floc
