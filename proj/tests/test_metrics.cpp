#include <doctest/doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mddformer/csv.hpp"
#include "mddformer/metrics.hpp"
#include "mddformer/rng.hpp"

using namespace mdd;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) {
        path = fs::temp_directory_path() / ("mddformer_metrics_" + tag);
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    REQUIRE(f.good());
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

/// Brute-force metric computation kept deliberately naive and separate from
/// the production code paths: recount every pair, apply the formulas longhand.
struct NaiveMetrics {
    double accuracy, precision, recall, f1, specificity;
};

NaiveMetrics naive_binary(const std::vector<int>& preds, const std::vector<int>& truth,
                          int positive) {
    double tp = 0, tn = 0, fp = 0, fn = 0;
    for (size_t i = 0; i < preds.size(); ++i) {
        const bool t = truth[i] == positive;
        const bool p = preds[i] == positive;
        if (t && p) tp += 1;
        if (!t && !p) tn += 1;
        if (!t && p) fp += 1;
        if (t && !p) fn += 1;
    }
    NaiveMetrics m{};
    m.accuracy = (tp + tn) / (tp + tn + fp + fn);
    m.precision = tp + fp > 0 ? tp / (tp + fp) : 0.0;
    m.recall = tp + fn > 0 ? tp / (tp + fn) : 0.0;
    m.specificity = tn + fp > 0 ? tn / (tn + fp) : 0.0;
    m.f1 = m.precision + m.recall > 0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
                                      : 0.0;
    return m;
}

NaiveMetrics naive_weighted(const std::vector<int>& preds, const std::vector<int>& truth) {
    const NaiveMetrics m1 = naive_binary(preds, truth, 1);
    const NaiveMetrics m0 = naive_binary(preds, truth, 0);
    double n1 = 0, n0 = 0;
    for (int t : truth) (t == 1 ? n1 : n0) += 1;
    const double n = n0 + n1;
    NaiveMetrics w{};
    w.accuracy = m1.accuracy;
    w.precision = (n1 * m1.precision + n0 * m0.precision) / n;
    w.recall = (n1 * m1.recall + n0 * m0.recall) / n;
    w.f1 = (n1 * m1.f1 + n0 * m0.f1) / n;
    w.specificity = (n1 * m1.specificity + n0 * m0.specificity) / n;
    return w;
}

std::vector<PredictionRecord> make_fold(const std::vector<int>& preds,
                                        const std::vector<int>& truth, const std::string& tag) {
    std::vector<PredictionRecord> out;
    for (size_t i = 0; i < preds.size(); ++i) {
        PredictionRecord r;
        r.sample_id = tag + "_" + std::to_string(i);
        r.truth = truth[i];
        r.predicted = preds[i];
        r.p1 = preds[i] == 1 ? 0.9 : 0.1;
        r.p0 = 1.0 - r.p1;
        out.push_back(r);
    }
    return out;
}

}  // namespace

TEST_CASE("confusion counts the worked examples") {
    auto c = confusion({1, 0, 1}, {1, 0, 1});
    CHECK(c.tp == 2);
    CHECK(c.tn == 1);
    CHECK(c.fp == 0);
    CHECK(c.fn == 0);
    CHECK(c.total() == 3);

    c = confusion({0, 1, 0}, {1, 0, 1});  // complement
    CHECK(c.tp == 0);
    CHECK(c.tn == 0);
    CHECK(c.fp == 1);
    CHECK(c.fn == 2);

    c = confusion({1, 1, 1, 1, 0, 0, 0, 0, 1, 0}, {1, 1, 1, 0, 1, 0, 0, 0, 0, 0});
    CHECK(c.tp == 3);
    CHECK(c.fp == 2);
    CHECK(c.fn == 1);
    CHECK(c.tn == 4);
}

TEST_CASE("confusion rejects bad input") {
    CHECK_THROWS_WITH_AS(confusion({1, 0}, {1}), doctest::Contains("length mismatch"),
                         std::runtime_error);
    CHECK_THROWS_WITH_AS(confusion({}, {}), doctest::Contains("empty"), std::runtime_error);
    CHECK_THROWS_WITH_AS(confusion({2, 0}, {1, 0}), doctest::Contains("labels must be 0 or 1"),
                         std::runtime_error);
    CHECK_THROWS_WITH_AS(confusion({1, 0}, {1, -1}), doctest::Contains("labels must be 0 or 1"),
                         std::runtime_error);
}

TEST_CASE("confusion is invariant under sample reordering") {
    RngStream rng(913);
    std::vector<int> preds, truth;
    for (int i = 0; i < 40; ++i) {
        preds.push_back(rng.bernoulli(0.5) ? 1 : 0);
        truth.push_back(rng.bernoulli(0.5) ? 1 : 0);
    }
    const auto base = confusion(preds, truth);
    std::vector<size_t> order(preds.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (int trial = 0; trial < 10; ++trial) {
        rng.shuffle(order.begin(), order.end());
        std::vector<int> p2, t2;
        for (size_t idx : order) {
            p2.push_back(preds[idx]);
            t2.push_back(truth[idx]);
        }
        const auto c = confusion(p2, t2);
        CHECK(c.tp == base.tp);
        CHECK(c.tn == base.tn);
        CHECK(c.fp == base.fp);
        CHECK(c.fn == base.fn);
    }
}

TEST_CASE("binary_metrics matches the worked example") {
    MetricCounts c;
    c.tp = 3;
    c.fp = 1;
    c.tn = 4;
    c.fn = 2;
    const auto r = binary_metrics(c);
    CHECK(r.variant == "binary_positive_class");
    CHECK(r.accuracy == doctest::Approx(0.7).epsilon(1e-12));
    CHECK(r.precision == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(r.recall == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(r.f1 == doctest::Approx(0.6667).epsilon(1e-4));
    CHECK(r.specificity == doctest::Approx(0.8).epsilon(1e-12));
    CHECK(!r.degenerate_precision);
    CHECK(!r.degenerate_recall);
    CHECK(!r.degenerate_f1);
}

TEST_CASE("binary_metrics perfect and degenerate cases") {
    MetricCounts perfect;
    perfect.tp = 5;
    perfect.tn = 7;
    auto r = binary_metrics(perfect);
    CHECK(r.accuracy == 1.0);
    CHECK(r.precision == 1.0);
    CHECK(r.recall == 1.0);
    CHECK(r.f1 == 1.0);

    // Nothing predicted positive and nothing actually positive: precision,
    // recall, and f1 all hit zero denominators; values stay 0, never NaN.
    MetricCounts none;
    none.tn = 4;
    r = binary_metrics(none);
    CHECK(r.precision == 0.0);
    CHECK(r.degenerate_precision);
    CHECK(r.recall == 0.0);
    CHECK(r.degenerate_recall);
    CHECK(r.f1 == 0.0);
    CHECK(r.degenerate_f1);
    CHECK(!r.degenerate_specificity);
    CHECK(std::isfinite(r.accuracy));

    // All positive: specificity is the degenerate one.
    MetricCounts allpos;
    allpos.tp = 3;
    r = binary_metrics(allpos);
    CHECK(r.degenerate_specificity);
    CHECK(r.specificity == 0.0);

    MetricCounts empty;
    CHECK_THROWS_WITH_AS(binary_metrics(empty), doctest::Contains("empty counts"),
                         std::runtime_error);
    MetricCounts bad;
    bad.tp = -1;
    bad.tn = 5;
    CHECK_THROWS_WITH_AS(binary_metrics(bad), doctest::Contains("negative"), std::runtime_error);
}

TEST_CASE("metric suite agrees with the brute-force oracle on random inputs") {
    RngStream rng(20260819);
    for (int trial = 0; trial < 1000; ++trial) {
        const int n = 1 + static_cast<int>(rng.uniform_int(50));
        std::vector<int> preds(n), truth(n);
        for (int i = 0; i < n; ++i) {
            preds[i] = rng.bernoulli(0.5) ? 1 : 0;
            truth[i] = rng.bernoulli(0.5) ? 1 : 0;
        }
        const auto want = naive_binary(preds, truth, 1);
        const auto got = binary_metrics(confusion(preds, truth));
        CHECK(std::abs(got.accuracy - want.accuracy) < 1e-12);
        CHECK(std::abs(got.precision - want.precision) < 1e-12);
        CHECK(std::abs(got.recall - want.recall) < 1e-12);
        CHECK(std::abs(got.f1 - want.f1) < 1e-12);
        CHECK(std::abs(got.specificity - want.specificity) < 1e-12);

        const auto wwant = naive_weighted(preds, truth);
        const auto wgot = weighted_metrics(preds, truth);
        CHECK(std::abs(wgot.accuracy - wwant.accuracy) < 1e-12);
        CHECK(std::abs(wgot.precision - wwant.precision) < 1e-12);
        CHECK(std::abs(wgot.recall - wwant.recall) < 1e-12);
        CHECK(std::abs(wgot.f1 - wwant.f1) < 1e-12);

        // Report invariants: everything in [0,1]; the harmonic mean never
        // exceeds the arithmetic mean of precision and recall.
        for (double v : {got.accuracy, got.precision, got.recall, got.f1, wgot.precision,
                         wgot.recall, wgot.f1}) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
        CHECK(got.f1 <= (got.precision + got.recall) / 2.0 + 1e-15);

        // Weighted recall is accuracy, always.
        CHECK(std::abs(wgot.recall - got.accuracy) < 1e-12);
    }
}

TEST_CASE("weighted_metrics worked examples") {
    // The 10-sample confusion example: weighted recall must equal accuracy.
    const std::vector<int> preds = {1, 1, 1, 1, 0, 0, 0, 0, 1, 0};
    const std::vector<int> truth = {1, 1, 1, 0, 1, 0, 0, 0, 0, 0};
    const auto w = weighted_metrics(preds, truth);
    CHECK(w.variant == "weighted_average");
    CHECK(w.recall == doctest::Approx(0.7).epsilon(1e-12));
    CHECK(w.accuracy == doctest::Approx(0.7).epsilon(1e-12));

    // Balanced truth with one symmetric error per class: both per-class views
    // coincide, so the weighted average equals either binary report.
    const std::vector<int> t2 = {1, 1, 1, 0, 0, 0};
    const std::vector<int> p2 = {1, 1, 0, 0, 0, 1};
    const auto wb = weighted_metrics(p2, t2);
    const auto bb = binary_metrics(confusion(p2, t2));
    CHECK(wb.precision == doctest::Approx(bb.precision).epsilon(1e-12));
    CHECK(wb.recall == doctest::Approx(bb.recall).epsilon(1e-12));
    CHECK(wb.f1 == doctest::Approx(bb.f1).epsilon(1e-12));

    // All-correct predictions.
    const auto wp = weighted_metrics({1, 0, 1, 0}, {1, 0, 1, 0});
    CHECK(wp.accuracy == 1.0);
    CHECK(wp.precision == 1.0);
    CHECK(wp.recall == 1.0);
    CHECK(wp.f1 == 1.0);
}

TEST_CASE("mean_reports averages and flags") {
    MetricCounts c1;
    c1.tp = 3;
    c1.tn = 3;
    c1.fp = 2;
    c1.fn = 2;  // accuracy 0.6
    MetricCounts c2;
    c2.tp = 4;
    c2.tn = 4;
    c2.fp = 1;
    c2.fn = 1;  // accuracy 0.8
    const auto r1 = binary_metrics(c1);
    const auto r2 = binary_metrics(c2);
    const auto mean = mean_reports({r1, r2});
    CHECK(mean.accuracy == doctest::Approx(0.7).epsilon(1e-12));
    CHECK(mean.precision == doctest::Approx((r1.precision + r2.precision) / 2).epsilon(1e-12));

    const auto same = mean_reports({r1, r1, r1});
    CHECK(same.accuracy == doctest::Approx(r1.accuracy).epsilon(1e-12));
    CHECK(same.f1 == doctest::Approx(r1.f1).epsilon(1e-12));

    // A degenerate fold taints the mean's flag.
    MetricCounts none;
    none.tn = 4;
    const auto degen = binary_metrics(none);
    CHECK(mean_reports({r1, degen}).degenerate_precision);
    CHECK(!mean_reports({r1, r2}).degenerate_precision);

    CHECK_THROWS_WITH_AS(mean_reports({}), doctest::Contains("empty"), std::runtime_error);
}

TEST_CASE("summarize_cv aggregates folds both ways") {
    const std::vector<int> p1 = {1, 0, 1, 0, 1}, t1 = {1, 0, 0, 0, 1};
    const std::vector<int> p2 = {0, 0, 1, 1}, t2 = {1, 0, 1, 1};
    const auto s = summarize_cv({make_fold(p1, t1, "a"), make_fold(p2, t2, "b")});

    REQUIRE(s.per_fold_counts.size() == 2);
    REQUIRE(s.per_fold_binary.size() == 2);
    REQUIRE(s.per_fold_weighted.size() == 2);

    // Per-fold numbers match direct computation.
    const auto c1 = confusion(p1, t1);
    CHECK(s.per_fold_counts[0].tp == c1.tp);
    CHECK(s.per_fold_binary[0].accuracy ==
          doctest::Approx(binary_metrics(c1).accuracy).epsilon(1e-12));
    CHECK(s.per_fold_weighted[1].recall ==
          doctest::Approx(weighted_metrics(p2, t2).recall).epsilon(1e-12));

    // Pooling concatenates the folds.
    std::vector<int> pp = p1, tt = t1;
    pp.insert(pp.end(), p2.begin(), p2.end());
    tt.insert(tt.end(), t2.begin(), t2.end());
    const auto pooled = confusion(pp, tt);
    CHECK(s.pooled_counts.tp == pooled.tp);
    CHECK(s.pooled_counts.tn == pooled.tn);
    CHECK(s.pooled_counts.fp == pooled.fp);
    CHECK(s.pooled_counts.fn == pooled.fn);
    CHECK(s.pooled_binary.accuracy ==
          doctest::Approx(binary_metrics(pooled).accuracy).epsilon(1e-12));

    // Fold mean is the unweighted average.
    CHECK(s.mean_binary.accuracy ==
          doctest::Approx((s.per_fold_binary[0].accuracy + s.per_fold_binary[1].accuracy) / 2)
              .epsilon(1e-12));

    // Identical folds: mean == pooled == per-fold.
    const auto same = summarize_cv({make_fold(p1, t1, "a"), make_fold(p1, t1, "b")});
    CHECK(same.mean_binary.accuracy == doctest::Approx(same.per_fold_binary[0].accuracy));
    CHECK(same.pooled_binary.accuracy == doctest::Approx(same.per_fold_binary[0].accuracy));

    // Single fold: both aggregates equal that fold.
    const auto one = summarize_cv({make_fold(p1, t1, "a")});
    CHECK(one.mean_binary.accuracy == doctest::Approx(one.per_fold_binary[0].accuracy));
    CHECK(one.pooled_weighted.f1 == doctest::Approx(one.per_fold_weighted[0].f1));

    CHECK_THROWS_WITH_AS(summarize_cv({}), doctest::Contains("no folds"), std::runtime_error);
    CHECK_THROWS_WITH_AS(summarize_cv({{}}), doctest::Contains("no predictions"),
                         std::runtime_error);
}

TEST_CASE("report_to_json carries both aggregations and the truth-row matrix") {
    const std::vector<int> p1 = {1, 0, 1, 0}, t1 = {1, 0, 0, 1};
    const auto s = summarize_cv({make_fold(p1, t1, "x")});
    const auto j = report_to_json(s);

    REQUIRE(j.contains("per_fold"));
    REQUIRE(j["per_fold"].size() == 1);
    CHECK(j["per_fold"][0]["binary"]["variant"] == "binary_positive_class");
    CHECK(j["per_fold"][0]["weighted"]["variant"] == "weighted_average");
    CHECK(j.contains("fold_mean"));
    CHECK(j.contains("pooled"));

    const auto& m = j["pooled"]["confusion"]["matrix_row_is_truth"];
    REQUIRE(m.size() == 2);
    CHECK(m[0][0].get<long long>() == s.pooled_counts.tn);
    CHECK(m[0][1].get<long long>() == s.pooled_counts.fp);
    CHECK(m[1][0].get<long long>() == s.pooled_counts.fn);
    CHECK(m[1][1].get<long long>() == s.pooled_counts.tp);

    CHECK(j["pooled"]["binary"]["accuracy"].get<double>() ==
          doctest::Approx(s.pooled_binary.accuracy));
}

TEST_CASE("write_report_json emits run info plus results") {
    TempDir tmp("report");
    const auto s = summarize_cv({make_fold({1, 0, 1}, {1, 0, 1}, "x")});
    nlohmann::json info;
    info["seed"] = 42;
    info["config_hash"] = "abc123";
    const auto path = tmp.path / "report.json";
    write_report_json(path, info, s);

    const auto back = nlohmann::json::parse(slurp(path));
    CHECK(back["run"]["seed"] == 42);
    CHECK(back["run"]["config_hash"] == "abc123");
    CHECK(back["results"]["pooled"]["binary"]["accuracy"].get<double>() == 1.0);

    CHECK_THROWS(write_report_json(tmp.path / "nope" / "report.json", info, s));
}

TEST_CASE("write_confusion_csv emits the exact truth-row layout") {
    TempDir tmp("conf");
    MetricCounts c;
    c.tp = 3;
    c.fp = 2;
    c.fn = 1;
    c.tn = 4;
    const auto path = tmp.path / "confusion.csv";
    write_confusion_csv(path, c);
    CHECK(slurp(path) == ",pred_0,pred_1\ntruth_0,4,2\ntruth_1,1,3\n");
}

TEST_CASE("metric bar data and figure are deterministic") {
    TempDir tmp("bars");
    MetricCounts c;
    c.tp = 3;
    c.fp = 1;
    c.tn = 4;
    c.fn = 2;
    const auto r = binary_metrics(c);
    std::vector<std::pair<std::string, MetricReport>> models = {{"mddformer", r}, {"knn", r}};

    const auto csv_path = tmp.path / "bars.csv";
    write_metric_bars_csv(csv_path, models);
    const std::string first = slurp(csv_path);
    std::istringstream lines(first);
    std::string line;
    std::getline(lines, line);
    CHECK(line == "model,accuracy,precision,recall,f1");
    std::getline(lines, line);
    CHECK(line == "mddformer,0.7,0.75,0.6," + csv::format_double(r.f1));
    CHECK(line.substr(0, 24) == "mddformer,0.7,0.75,0.6,0");
    write_metric_bars_csv(csv_path, models);
    CHECK(slurp(csv_path) == first);

    const auto svg_path = tmp.path / "bars.svg";
    write_metric_bars_svg(svg_path, models);
    const std::string svg = slurp(svg_path);
    CHECK(svg.rfind("<svg", 0) == 0);
    CHECK(svg.find("mddformer") != std::string::npos);
    CHECK(svg.find("recall") != std::string::npos);
    // 4 bars per model plus 4 legend swatches.
    size_t rects = 0, at = 0;
    while ((at = svg.find("<rect", at)) != std::string::npos) {
        ++rects;
        at += 5;
    }
    CHECK(rects == 4 * models.size() + 4);
    write_metric_bars_svg(svg_path, models);
    CHECK(slurp(svg_path) == svg);

    CHECK_THROWS_WITH_AS(write_metric_bars_svg(svg_path, {}), doctest::Contains("no models"),
                         std::runtime_error);
}
