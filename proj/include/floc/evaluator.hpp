#pragma once

#include <algorithm>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "floc/dataset.hpp"
#include "floc/degrade.hpp"
#include "floc/metrics.hpp"

namespace floc {

struct DatasetRow {
    std::string dataset_id;
    long long n = 0;
    real mean_f1 = 0;
    real mean_iou = 0;
};

struct CurveRow {
    std::string label; // "baseline", "jpeg:60", a chain spec, ...
    real param = 0;    // axis value; 0 for baseline/chain rows
    real mean_f1 = 0;
};

struct EvalReport {
    std::vector<DatasetRow> rows;
    real avg_f1 = 0;
    real avg_iou = 0;
    std::vector<CurveRow> curve; // optional robustness rows

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["datasets"] = nlohmann::json::array();
        for (const auto& r : rows)
            j["datasets"].push_back({{"dataset", r.dataset_id}, {"n", r.n}, {"f1", r.mean_f1}, {"iou", r.mean_iou}});
        j["weighted_f1"] = avg_f1;
        j["weighted_iou"] = avg_iou;
        if (!curve.empty()) {
            j["curve"] = nlohmann::json::array();
            for (const auto& c : curve)
                j["curve"].push_back({{"label", c.label}, {"param", c.param}, {"f1", c.mean_f1}});
        }
        return j;
    }

    static EvalReport from_json(const nlohmann::json& j) {
        EvalReport r;
        for (const auto& d : j.at("datasets"))
            r.rows.push_back({d.at("dataset").get<std::string>(), d.at("n").get<long long>(),
                              d.at("f1").get<real>(), d.at("iou").get<real>()});
        r.avg_f1 = j.at("weighted_f1").get<real>();
        r.avg_iou = j.at("weighted_iou").get<real>();
        if (j.contains("curve"))
            for (const auto& c : j.at("curve"))
                r.curve.push_back({c.at("label").get<std::string>(), c.at("param").get<real>(),
                                   c.at("f1").get<real>()});
        return r;
    }

    std::string to_csv() const {
        std::ostringstream os;
        os.precision(17);
        os << "dataset,n,f1,iou\n";
        for (const auto& r : rows) os << r.dataset_id << "," << r.n << "," << r.mean_f1 << "," << r.mean_iou << "\n";
        os << "weighted," << 0 << "," << avg_f1 << "," << avg_iou << "\n";
        return os.str();
    }
};

using PredictFn = std::function<ScoreMap(const ImageSample&)>;

// Per-image F1/IoU, averaged per dataset, then sample-weighted across
// datasets. Samples are sorted by (dataset_id, sample_id) before reduction so
// aggregation order is deterministic.
inline EvalReport evaluate_samples(const PredictFn& predict_fn, std::vector<const ImageSample*> samples,
                                   real threshold = 0.5) {
    FLOC_CHECK(!samples.empty(), "evaluate: empty manifest");
    std::sort(samples.begin(), samples.end(), [](const ImageSample* a, const ImageSample* b) {
        return std::tie(a->dataset_id, a->sample_id) < std::tie(b->dataset_id, b->sample_id);
    });
    std::map<std::string, std::pair<long long, std::pair<real, real>>> agg; // id -> (n, (sum_f1, sum_iou))
    for (const ImageSample* s : samples) {
        const ScoreMap scores = predict_fn(*s);
        const auto m = f1_iou(binarize(scores, threshold), s->mask);
        auto& slot = agg[s->dataset_id];
        slot.first += 1;
        slot.second.first += m.f1;
        slot.second.second += m.iou;
    }
    EvalReport report;
    std::vector<std::pair<real, long long>> f1_rows, iou_rows;
    for (const auto& [id, slot] : agg) {
        DatasetRow row;
        row.dataset_id = id;
        row.n = slot.first;
        row.mean_f1 = slot.second.first / static_cast<real>(slot.first);
        row.mean_iou = slot.second.second / static_cast<real>(slot.first);
        report.rows.push_back(row);
        f1_rows.emplace_back(row.mean_f1, row.n);
        iou_rows.emplace_back(row.mean_iou, row.n);
    }
    report.avg_f1 = weighted_average(f1_rows);
    report.avg_iou = weighted_average(iou_rows);
    return report;
}

inline EvalReport evaluate(const PredictFn& predict_fn, const std::vector<std::vector<ImageSample>>& datasets,
                           real threshold = 0.5) {
    std::vector<const ImageSample*> flat;
    for (const auto& d : datasets)
        for (const auto& s : d) flat.push_back(&s);
    return evaluate_samples(predict_fn, std::move(flat), threshold);
}

// Robustness sweep axes (Fig. 4-style grids).
struct SweepAxis {
    DegradationOp::Kind kind;
    std::vector<real> values;

    static SweepAxis jpeg() { return {DegradationOp::Kind::jpeg, {100, 90, 80, 70, 60}}; }
    static SweepAxis blur() { return {DegradationOp::Kind::blur, {3, 5, 7, 9}}; }
    static SweepAxis noise() { return {DegradationOp::Kind::noise, {0.002, 0.004, 0.006, 0.008, 0.010}}; }
    static SweepAxis resize() { return {DegradationOp::Kind::resize, {0.9, 0.8, 0.7, 0.6, 0.5}}; }

    static SweepAxis by_name(const std::string& name) {
        if (name == "jpeg") return jpeg();
        if (name == "blur") return blur();
        if (name == "noise") return noise();
        if (name == "resize") return resize();
        fail("unknown robustness axis '", name, "' (expected jpeg|blur|noise|resize)");
    }

    DegradationOp op_for(real v) const {
        switch (kind) {
            case DegradationOp::Kind::jpeg: return DegradationOp::jpeg(static_cast<int>(v));
            case DegradationOp::Kind::blur: return DegradationOp::blur(static_cast<int>(v));
            case DegradationOp::Kind::noise: return DegradationOp::noise(v);
            case DegradationOp::Kind::resize: return DegradationOp::resize(v);
        }
        fail("unreachable");
    }
};

namespace detail {

inline real mean_f1_over(const PredictFn& predict_fn, const std::vector<ImageSample>& samples,
                         const std::function<Image(const Image&, size_t)>& transform, real threshold) {
    real sum = 0;
    for (size_t i = 0; i < samples.size(); ++i) {
        ImageSample s = samples[i];
        s.image = transform(s.image, i);
        const auto m = f1_iou(binarize(predict_fn(s), threshold), s.mask);
        sum += m.f1;
    }
    return sum / static_cast<real>(samples.size());
}

} // namespace detail

// One row per axis value plus an undegraded baseline row first.
// Per-image degradation seeds derive from (seed, row, image), so the sweep is
// reproducible end to end.
inline std::vector<CurveRow> robustness_sweep(const PredictFn& predict_fn, const std::vector<ImageSample>& samples,
                                              const SweepAxis& axis, real threshold = 0.5, uint64_t seed = 0) {
    FLOC_CHECK(!axis.values.empty(), "robustness_sweep: empty axis");
    FLOC_CHECK(!samples.empty(), "robustness_sweep: empty manifest");
    std::vector<CurveRow> curve;
    curve.push_back({"baseline", 0.0,
                     detail::mean_f1_over(predict_fn, samples, [](const Image& img, size_t) { return img; },
                                          threshold)});
    for (size_t vi = 0; vi < axis.values.size(); ++vi) {
        const real v = axis.values[vi];
        DegradationSpec spec;
        spec.chain = {axis.op_for(v)};
        const real f1 = detail::mean_f1_over(
            predict_fn, samples,
            [&](const Image& img, size_t i) {
                DegradationSpec s = spec;
                s.seed = hash_seq({seed, vi + 1, i});
                return degrade(img, s);
            },
            threshold);
        curve.push_back({spec.chain[0].label(), v, f1});
    }
    return curve;
}

// Chain variant: one row per degradation chain (Table-style combined
// post-processing), baseline row first.
inline std::vector<CurveRow> robustness_chains(const PredictFn& predict_fn, const std::vector<ImageSample>& samples,
                                               const std::vector<DegradationSpec>& chains, real threshold = 0.5,
                                               uint64_t seed = 0) {
    FLOC_CHECK(!chains.empty(), "robustness_chains: empty chain list");
    FLOC_CHECK(!samples.empty(), "robustness_chains: empty manifest");
    std::vector<CurveRow> curve;
    curve.push_back({"baseline", 0.0,
                     detail::mean_f1_over(predict_fn, samples, [](const Image& img, size_t) { return img; },
                                          threshold)});
    for (size_t ci = 0; ci < chains.size(); ++ci) {
        const real f1 = detail::mean_f1_over(
            predict_fn, samples,
            [&](const Image& img, size_t i) {
                DegradationSpec s = chains[ci];
                s.seed = hash_seq({seed, 0xc5a1u, ci, i});
                return degrade(img, s);
            },
            threshold);
        curve.push_back({chains[ci].label(), static_cast<real>(ci + 1), f1});
    }
    return curve;
}

inline std::string curve_to_csv(const std::vector<CurveRow>& curve) {
    std::ostringstream os;
    os.precision(17);
    os << "label,param,mean_f1\n";
    for (const auto& r : curve) os << r.label << "," << r.param << "," << r.mean_f1 << "\n";
    return os.str();
}

} // namespace floc
