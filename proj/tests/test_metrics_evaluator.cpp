#include <doctest.h>

#include <filesystem>

#include "floc/evaluator.hpp"
#include "floc/metrics.hpp"
#include "floc/plot.hpp"
#include "floc/synth.hpp"

using namespace floc;

namespace {

Mask random_mask(int h, int w, real density, Rng& rng) {
    Mask m(h, w);
    for (auto& v : m.data) v = rng.bernoulli(density) ? 1 : 0;
    return m;
}

// independent per-pixel confusion-matrix oracle
F1Iou oracle_f1_iou(const Mask& pred, const Mask& gt) {
    long long tp = 0, fp = 0, fn = 0, tn = 0;
    for (int y = 0; y < pred.h; ++y)
        for (int x = 0; x < pred.w; ++x) {
            const bool p = pred.at(y, x) != 0, g = gt.at(y, x) != 0;
            if (p && g) ++tp;
            if (p && !g) ++fp;
            if (!p && g) ++fn;
            if (!p && !g) ++tn;
        }
    (void)tn;
    if (tp + fp + fn == 0) return {1.0, 1.0};
    return {2.0 * static_cast<real>(tp) / static_cast<real>(2 * tp + fp + fn),
            static_cast<real>(tp) / static_cast<real>(tp + fp + fn)};
}

// perfect predictor: scores = labels
ScoreMap perfect_scores(const ImageSample& s) {
    ScoreMap m(s.mask.h, s.mask.w);
    for (size_t i = 0; i < m.probs.size(); ++i) m.probs[i] = s.mask.data[i] ? 1.0 : 0.0;
    return m;
}

} // namespace

TEST_SUITE("metrics_evaluator") {

    TEST_CASE("binarize uses a strict threshold") {
        ScoreMap s(1, 4);
        s.probs = {0.5, 0.5000001, 0.9, 0.0};
        const Mask m = binarize(s, 0.5);
        CHECK(m.data == std::vector<uint8_t>({0, 1, 1, 0}));
        const Mask all = binarize(s, 0.0);
        CHECK(all.data == std::vector<uint8_t>({1, 1, 1, 0})); // score > 0
        ScoreMap hi(2, 2, 0.9);
        const Mask ones = binarize(hi);
        CHECK(ones.count() == 4);
    }

    TEST_CASE("f1_iou hand-counted example and conventions") {
        // TP=2, FP=2, FN=2 in a 1x8 strip
        Mask pred(1, 8), gt(1, 8);
        pred.data = {1, 1, 1, 1, 0, 0, 0, 0};
        gt.data = {1, 1, 0, 0, 1, 1, 0, 0};
        const auto m = f1_iou(pred, gt);
        CHECK(m.f1 == doctest::Approx(0.5).epsilon(1e-15));
        CHECK(m.iou == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

        Mask empty(1, 8);
        CHECK(f1_iou(empty, empty).f1 == 1.0);
        CHECK(f1_iou(empty, empty).iou == 1.0);
        CHECK(f1_iou(pred, empty).f1 == 0.0);
        CHECK(f1_iou(pred, empty).iou == 0.0);
        const auto perfect = f1_iou(gt, gt);
        CHECK(perfect.f1 == 1.0);
        CHECK(perfect.iou == 1.0);

        Mask wrong(2, 8);
        CHECK_THROWS_WITH_AS(f1_iou(pred, wrong), doctest::Contains("shape mismatch"), Error);
    }

    TEST_CASE("f1_iou equals the brute-force oracle exactly on random maps") {
        Rng rng(21);
        for (int trial = 0; trial < 300; ++trial) {
            const real dp = rng.uniform(0.0, 1.0), dg = rng.uniform(0.0, 1.0);
            const Mask pred = random_mask(64, 64, dp, rng);
            const Mask gt = random_mask(64, 64, dg, rng);
            const auto got = f1_iou(pred, gt);
            const auto want = oracle_f1_iou(pred, gt);
            REQUIRE(got.f1 == want.f1);   // bitwise
            REQUIRE(got.iou == want.iou);
            // F1 = 2 IoU / (1 + IoU), and 0 <= IoU <= F1 <= 1
            REQUIRE(std::abs(got.f1 - 2.0 * got.iou / (1.0 + got.iou)) <= 1e-12);
            REQUIRE(got.iou >= 0.0);
            REQUIRE(got.iou <= got.f1);
            REQUIRE(got.f1 <= 1.0);
        }
    }

    TEST_CASE("weighted_average follows the sample-weighted form") {
        CHECK(weighted_average({{0.5, 2}, {1.0, 3}}) == 0.8); // exact
        CHECK(weighted_average({{0.37, 5}}) == 0.37);
        CHECK(weighted_average({{0.2, 4}, {0.6, 4}}) == doctest::Approx(0.4).epsilon(1e-15));
        // row order invariance is exact (sorted reduction)
        Rng rng(31);
        for (int t = 0; t < 50; ++t) {
            std::vector<std::pair<real, long long>> rows;
            const int n = rng.uniform_int(2, 8);
            for (int i = 0; i < n; ++i) rows.emplace_back(rng.uniform(), rng.uniform_int(1, 100));
            auto shuffled = rows;
            for (size_t i = shuffled.size(); i > 1; --i) std::swap(shuffled[i - 1], shuffled[rng.bounded(i)]);
            REQUIRE(weighted_average(rows) == weighted_average(shuffled));
            // splitting one row into two with the same metric is invariant to 1e-12
            auto split = rows;
            if (split[0].second >= 2) {
                const auto [m, c] = split[0];
                split[0] = {m, c / 2};
                split.emplace_back(m, c - c / 2);
                REQUIRE(std::abs(weighted_average(rows) - weighted_average(split)) <= 1e-12);
            }
        }
        CHECK_THROWS_WITH_AS(weighted_average({}), doctest::Contains("empty"), Error);
        CHECK_THROWS_AS(weighted_average({{0.5, 0}}), Error);
    }

    TEST_CASE("evaluate aggregates per dataset and weights by sample count") {
        std::vector<std::vector<ImageSample>> datasets(2);
        for (int i = 0; i < 2; ++i) {
            ImageSample s = make_synthetic_sample(128, 600 + static_cast<uint64_t>(i));
            s.dataset_id = "a";
            datasets[0].push_back(std::move(s));
        }
        for (int i = 0; i < 3; ++i) {
            ImageSample s = make_synthetic_sample(128, 700 + static_cast<uint64_t>(i));
            s.dataset_id = "b";
            datasets[1].push_back(std::move(s));
        }
        // perfect model: report is exactly 1.0 everywhere
        const auto report = evaluate(perfect_scores, datasets, 0.5);
        REQUIRE(report.rows.size() == 2);
        CHECK(report.rows[0].dataset_id == "a");
        CHECK(report.rows[0].n == 2);
        CHECK(report.rows[1].n == 3);
        CHECK(report.avg_f1 == 1.0);
        CHECK(report.avg_iou == 1.0);

        // a half-blind model on dataset b only: weighted average must follow Eq-style weighting
        const auto half = evaluate(
            [](const ImageSample& s) {
                ScoreMap m(s.mask.h, s.mask.w, 0.0);
                if (s.dataset_id == "a")
                    for (size_t i = 0; i < m.probs.size(); ++i) m.probs[i] = s.mask.data[i] ? 1.0 : 0.0;
                return m; // all-zero scores for b
            },
            datasets, 0.5);
        std::vector<std::pair<real, long long>> rows;
        for (const auto& r : half.rows) rows.emplace_back(r.mean_f1, r.n);
        CHECK(half.avg_f1 == weighted_average(rows)); // bit-exact internal consistency
        CHECK(half.rows[0].mean_f1 == 1.0);
        CHECK(half.rows[1].mean_f1 == 0.0);
        CHECK(half.avg_f1 == doctest::Approx(0.4).epsilon(1e-15));

        CHECK_THROWS_WITH_AS(evaluate(perfect_scores, {}, 0.5), doctest::Contains("empty"), Error);
    }

    TEST_CASE("eval report round-trips through json losslessly") {
        EvalReport r;
        r.rows = {{"a", 2, 0.123456789012345678, 0.3}, {"b", 3, 1.0 / 3.0, 0.7071067811865476}};
        r.avg_f1 = weighted_average({{r.rows[0].mean_f1, 2}, {r.rows[1].mean_f1, 3}});
        r.avg_iou = weighted_average({{0.3, 2}, {0.7071067811865476, 3}});
        r.curve = {{"baseline", 0.0, 0.9}, {"jpeg:60", 60.0, 0.8411111111111111}};
        const auto j = r.to_json();
        const auto back = EvalReport::from_json(nlohmann::json::parse(j.dump()));
        CHECK(back.rows.size() == 2);
        CHECK(back.rows[1].mean_f1 == r.rows[1].mean_f1);   // bitwise through json
        CHECK(back.rows[1].mean_iou == r.rows[1].mean_iou);
        CHECK(back.avg_f1 == r.avg_f1);
        CHECK(back.curve[1].mean_f1 == r.curve[1].mean_f1);
        // stored averages equal recomputation from stored rows
        std::vector<std::pair<real, long long>> rows;
        for (const auto& row : back.rows) rows.emplace_back(row.mean_f1, row.n);
        CHECK(back.avg_f1 == weighted_average(rows));
        CHECK(back.to_json().dump() == j.dump());
    }

    TEST_CASE("robustness sweep: identity transform reproduces plain evaluation") {
        std::vector<ImageSample> samples;
        for (int i = 0; i < 3; ++i) samples.push_back(make_synthetic_sample(128, 800 + static_cast<uint64_t>(i)));
        // a predictor with an actual dependence on pixels: mean-shift detector
        auto predictor = [](const ImageSample& s) {
            ScoreMap m(s.image.h, s.image.w);
            for (int y = 0; y < s.image.h; ++y)
                for (int x = 0; x < s.image.w; ++x)
                    m.at(y, x) = clamp01(1.2 * s.image.at(y, x, 2) - 0.6 * s.image.at(y, x, 0));
            return m;
        };
        std::vector<std::vector<ImageSample>> datasets{samples};
        const auto plain = evaluate(predictor, datasets, 0.5);

        const auto curve = robustness_sweep(predictor, samples, SweepAxis::jpeg(), 0.5, 3);
        REQUIRE(curve.size() == 6); // baseline + 5 qualities
        CHECK(curve[0].label == "baseline");
        CHECK(curve[0].mean_f1 == plain.avg_f1); // identity row equals evaluate exactly
        CHECK(curve[1].label == "jpeg:100");
        CHECK(curve[5].label == "jpeg:60");

        // chain mode emits baseline + one row per chain
        const auto chains = robustness_chains(predictor, samples,
                                              {parse_degradation_chain("jpeg:60,resize:0.6,blur:5,noise:0.006")},
                                              0.5, 3);
        REQUIRE(chains.size() == 2);
        CHECK(chains[1].label == "jpeg:60,resize:0.6,blur:5,noise:0.006");
        CHECK(std::isfinite(chains[1].mean_f1));

        // determinism: rerunning the sweep gives bit-identical rows
        const auto curve2 = robustness_sweep(predictor, samples, SweepAxis::jpeg(), 0.5, 3);
        for (size_t i = 0; i < curve.size(); ++i) REQUIRE(curve[i].mean_f1 == curve2[i].mean_f1);

        CHECK_THROWS_WITH_AS(robustness_sweep(predictor, samples, SweepAxis{DegradationOp::Kind::jpeg, {}}, 0.5, 3),
                             doctest::Contains("empty axis"), Error);
    }

    TEST_CASE("sweep axes carry the documented grids") {
        CHECK(SweepAxis::jpeg().values == std::vector<real>({100, 90, 80, 70, 60}));
        CHECK(SweepAxis::blur().values == std::vector<real>({3, 5, 7, 9}));
        CHECK(SweepAxis::noise().values == std::vector<real>({0.002, 0.004, 0.006, 0.008, 0.010}));
        CHECK(SweepAxis::resize().values == std::vector<real>({0.9, 0.8, 0.7, 0.6, 0.5}));
        CHECK_THROWS_AS(SweepAxis::by_name("gamma"), Error);
    }

    TEST_CASE("curve csv and plot are emitted") {
        namespace fs = std::filesystem;
        const auto dir = fs::temp_directory_path() / "floc_plot";
        fs::create_directories(dir);
        std::vector<CurveRow> curve{{"baseline", 0, 0.92}, {"jpeg:100", 100, 0.91}, {"jpeg:80", 80, 0.8},
                                    {"jpeg:60", 60, 0.66}};
        const std::string csv = curve_to_csv(curve);
        CHECK(csv.find("label,param,mean_f1") == 0);
        CHECK(csv.find("jpeg:80") != std::string::npos);
        const std::string path = (dir / "curve.png").string();
        save_curve_plot(path, curve, "jpeg quality");
        const U8Image img = load_png(path);
        CHECK(img.h > 0);
        CHECK(img.c == 3);
        // the canvas is not blank
        bool any_dark = false;
        for (size_t i = 0; i < img.data.size(); i += 3) any_dark |= img.data[i] < 100;
        CHECK(any_dark);
    }
}
