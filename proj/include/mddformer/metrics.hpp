#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "mddformer/train.hpp"

namespace mdd {

// Positive class is depressed (label 1). Confusion matrices are emitted
// row = truth, column = predicted.
struct MetricCounts {
    long long tp = 0, tn = 0, fp = 0, fn = 0;

    long long total() const { return tp + tn + fp + fn; }
};

struct MetricReport {
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    double specificity = 0.0;  // TN/(TN+FP); absent from headline tables but emitted
    // Zero-denominator metrics report 0 with the matching flag set (never NaN).
    bool degenerate_precision = false;
    bool degenerate_recall = false;
    bool degenerate_f1 = false;
    bool degenerate_specificity = false;
    std::string variant;  // "binary_positive_class" or "weighted_average"
};

MetricCounts confusion(const std::vector<int>& preds, const std::vector<int>& truth);

MetricReport binary_metrics(const MetricCounts& c);

/// Per-class metrics combined by support weights. Weighted recall always
/// equals plain accuracy.
MetricReport weighted_metrics(const std::vector<int>& preds, const std::vector<int>& truth);

/// Unweighted mean over fold reports (degenerate flags OR-ed).
MetricReport mean_reports(const std::vector<MetricReport>& reports);

/// Everything a cross-validation run reports: per-fold and pooled, in both
/// metric variants, clearly labeled. Neither aggregation is privileged.
struct CvSummary {
    std::vector<MetricCounts> per_fold_counts;
    std::vector<MetricReport> per_fold_binary;
    std::vector<MetricReport> per_fold_weighted;
    MetricReport mean_binary;    // unweighted mean of per-fold binary reports
    MetricReport mean_weighted;  // unweighted mean of per-fold weighted reports
    MetricCounts pooled_counts;  // all held-out predictions pooled
    MetricReport pooled_binary;
    MetricReport pooled_weighted;
};

CvSummary summarize_cv(const std::vector<std::vector<PredictionRecord>>& fold_preds);

nlohmann::json report_to_json(const CvSummary& summary);

/// Full report file: run info (config hash, seed, ...) plus the summary.
void write_report_json(const std::filesystem::path& path, const nlohmann::json& run_info,
                       const CvSummary& summary);

/// 2x2 confusion matrix as CSV, row = truth.
void write_confusion_csv(const std::filesystem::path& path, const MetricCounts& c);

/// Grouped bar-chart values (models x metrics) as CSV.
void write_metric_bars_csv(const std::filesystem::path& path,
                           const std::vector<std::pair<std::string, MetricReport>>& models);

/// Optional convenience rendering of the same values as a standalone SVG.
void write_metric_bars_svg(const std::filesystem::path& path,
                           const std::vector<std::pair<std::string, MetricReport>>& models);

}  // namespace mdd
