#include "mddformer/metrics.hpp"

#include <fstream>
#include <stdexcept>

#include "mddformer/csv.hpp"

namespace mdd {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error("metrics: " + msg); }

double ratio(long long num, long long den, bool& degenerate) {
    if (den == 0) {
        degenerate = true;
        return 0.0;
    }
    return static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

MetricCounts confusion(const std::vector<int>& preds, const std::vector<int>& truth) {
    if (preds.size() != truth.size()) fail("prediction/truth length mismatch");
    if (preds.empty()) fail("empty prediction list");
    MetricCounts c;
    for (size_t i = 0; i < preds.size(); ++i) {
        if ((preds[i] != 0 && preds[i] != 1) || (truth[i] != 0 && truth[i] != 1))
            fail("labels must be 0 or 1 (sample index " + std::to_string(i) + ")");
        if (truth[i] == 1)
            (preds[i] == 1 ? c.tp : c.fn) += 1;
        else
            (preds[i] == 1 ? c.fp : c.tn) += 1;
    }
    return c;
}

MetricReport binary_metrics(const MetricCounts& c) {
    if (c.total() == 0) fail("empty counts");
    if (c.tp < 0 || c.tn < 0 || c.fp < 0 || c.fn < 0) fail("negative counts");
    MetricReport r;
    r.variant = "binary_positive_class";
    bool degenerate_accuracy = false;
    r.accuracy = ratio(c.tp + c.tn, c.total(), degenerate_accuracy);
    r.precision = ratio(c.tp, c.tp + c.fp, r.degenerate_precision);
    r.recall = ratio(c.tp, c.tp + c.fn, r.degenerate_recall);
    r.specificity = ratio(c.tn, c.tn + c.fp, r.degenerate_specificity);
    if (r.precision + r.recall > 0.0) {
        r.f1 = 2.0 * r.precision * r.recall / (r.precision + r.recall);
    } else {
        r.f1 = 0.0;
        r.degenerate_f1 = true;
    }
    return r;
}

MetricReport weighted_metrics(const std::vector<int>& preds, const std::vector<int>& truth) {
    const MetricCounts pos = confusion(preds, truth);

    // Class 0 viewed as positive swaps the roles of the counts.
    MetricCounts neg;
    neg.tp = pos.tn;
    neg.tn = pos.tp;
    neg.fp = pos.fn;
    neg.fn = pos.fp;

    const MetricReport r1 = binary_metrics(pos);
    const MetricReport r0 = binary_metrics(neg);
    const double n1 = static_cast<double>(pos.tp + pos.fn);
    const double n0 = static_cast<double>(pos.tn + pos.fp);
    const double n = n0 + n1;

    MetricReport r;
    r.variant = "weighted_average";
    r.accuracy = r1.accuracy;  // same for both orientations
    r.precision = (n1 * r1.precision + n0 * r0.precision) / n;
    r.recall = (n1 * r1.recall + n0 * r0.recall) / n;
    r.f1 = (n1 * r1.f1 + n0 * r0.f1) / n;
    r.specificity = (n1 * r1.specificity + n0 * r0.specificity) / n;
    r.degenerate_precision = r1.degenerate_precision || r0.degenerate_precision;
    r.degenerate_recall = r1.degenerate_recall || r0.degenerate_recall;
    r.degenerate_f1 = r1.degenerate_f1 || r0.degenerate_f1;
    r.degenerate_specificity = r1.degenerate_specificity || r0.degenerate_specificity;
    return r;
}

MetricReport mean_reports(const std::vector<MetricReport>& reports) {
    if (reports.empty()) fail("cannot average an empty report list");
    MetricReport out;
    out.variant = reports.front().variant;
    for (const MetricReport& r : reports) {
        out.accuracy += r.accuracy;
        out.precision += r.precision;
        out.recall += r.recall;
        out.f1 += r.f1;
        out.specificity += r.specificity;
        out.degenerate_precision = out.degenerate_precision || r.degenerate_precision;
        out.degenerate_recall = out.degenerate_recall || r.degenerate_recall;
        out.degenerate_f1 = out.degenerate_f1 || r.degenerate_f1;
        out.degenerate_specificity = out.degenerate_specificity || r.degenerate_specificity;
    }
    const double k = static_cast<double>(reports.size());
    out.accuracy /= k;
    out.precision /= k;
    out.recall /= k;
    out.f1 /= k;
    out.specificity /= k;
    return out;
}

CvSummary summarize_cv(const std::vector<std::vector<PredictionRecord>>& fold_preds) {
    if (fold_preds.empty()) fail("no folds to summarize");
    CvSummary s;
    std::vector<int> pooled_p, pooled_t;
    for (const auto& fold : fold_preds) {
        if (fold.empty()) fail("a fold has no predictions");
        std::vector<int> p, t;
        p.reserve(fold.size());
        t.reserve(fold.size());
        for (const PredictionRecord& r : fold) {
            p.push_back(r.predicted);
            t.push_back(r.truth);
            pooled_p.push_back(r.predicted);
            pooled_t.push_back(r.truth);
        }
        const MetricCounts c = confusion(p, t);
        s.per_fold_counts.push_back(c);
        s.per_fold_binary.push_back(binary_metrics(c));
        s.per_fold_weighted.push_back(weighted_metrics(p, t));
    }
    s.mean_binary = mean_reports(s.per_fold_binary);
    s.mean_weighted = mean_reports(s.per_fold_weighted);
    s.pooled_counts = confusion(pooled_p, pooled_t);
    s.pooled_binary = binary_metrics(s.pooled_counts);
    s.pooled_weighted = weighted_metrics(pooled_p, pooled_t);
    return s;
}

namespace {

nlohmann::json report_json(const MetricReport& r) {
    nlohmann::json j;
    j["variant"] = r.variant;
    j["accuracy"] = r.accuracy;
    j["precision"] = r.precision;
    j["recall"] = r.recall;
    j["f1"] = r.f1;
    j["specificity"] = r.specificity;
    nlohmann::json degenerate = nlohmann::json::array();
    if (r.degenerate_precision) degenerate.push_back("precision");
    if (r.degenerate_recall) degenerate.push_back("recall");
    if (r.degenerate_f1) degenerate.push_back("f1");
    if (r.degenerate_specificity) degenerate.push_back("specificity");
    j["degenerate"] = degenerate;
    return j;
}

nlohmann::json counts_json(const MetricCounts& c) {
    // row = truth, column = predicted
    return nlohmann::json{{"tp", c.tp},
                          {"tn", c.tn},
                          {"fp", c.fp},
                          {"fn", c.fn},
                          {"matrix_row_is_truth",
                           nlohmann::json::array({nlohmann::json::array({c.tn, c.fp}),
                                                  nlohmann::json::array({c.fn, c.tp})})}};
}

}  // namespace

nlohmann::json report_to_json(const CvSummary& s) {
    nlohmann::json j;
    nlohmann::json folds = nlohmann::json::array();
    for (size_t i = 0; i < s.per_fold_counts.size(); ++i) {
        nlohmann::json f;
        f["fold"] = i;
        f["confusion"] = counts_json(s.per_fold_counts[i]);
        f["binary"] = report_json(s.per_fold_binary[i]);
        f["weighted"] = report_json(s.per_fold_weighted[i]);
        folds.push_back(f);
    }
    j["per_fold"] = folds;
    j["fold_mean"] = {{"binary", report_json(s.mean_binary)},
                      {"weighted", report_json(s.mean_weighted)}};
    j["pooled"] = {{"confusion", counts_json(s.pooled_counts)},
                   {"binary", report_json(s.pooled_binary)},
                   {"weighted", report_json(s.pooled_weighted)}};
    return j;
}

void write_report_json(const std::filesystem::path& path, const nlohmann::json& run_info,
                       const CvSummary& summary) {
    nlohmann::json j;
    j["run"] = run_info;
    j["results"] = report_to_json(summary);
    std::ofstream out(path, std::ios::binary);
    if (!out) fail("cannot open '" + path.string() + "' for writing");
    out << j.dump(2) << "\n";
    if (!out.good()) fail("report write failed");
}

void write_confusion_csv(const std::filesystem::path& path, const MetricCounts& c) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail("cannot open '" + path.string() + "' for writing");
    out << ",pred_0,pred_1\n";
    out << "truth_0," << c.tn << ',' << c.fp << '\n';
    out << "truth_1," << c.fn << ',' << c.tp << '\n';
    if (!out.good()) fail("confusion write failed");
}

void write_metric_bars_csv(const std::filesystem::path& path,
                           const std::vector<std::pair<std::string, MetricReport>>& models) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail("cannot open '" + path.string() + "' for writing");
    out << "model,accuracy,precision,recall,f1\n";
    for (const auto& [name, r] : models) {
        out << name << ',' << csv::format_double(r.accuracy) << ','
            << csv::format_double(r.precision) << ',' << csv::format_double(r.recall) << ','
            << csv::format_double(r.f1) << '\n';
    }
    if (!out.good()) fail("figure data write failed");
}

void write_metric_bars_svg(const std::filesystem::path& path,
                           const std::vector<std::pair<std::string, MetricReport>>& models) {
    if (models.empty()) fail("no models to chart");
    const char* metric_names[4] = {"accuracy", "precision", "recall", "f1"};
    const char* palette[4] = {"#4878a8", "#e49444", "#5a9e6f", "#b65d60"};

    const int n_models = static_cast<int>(models.size());
    const int group_w = 4 * 22 + 24;
    const int width = 70 + n_models * group_w + 20;
    const int height = 320;
    const int base_y = 260;
    const double scale = 220.0;

    std::ofstream out(path, std::ios::binary);
    if (!out) fail("cannot open '" + path.string() + "' for writing");
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
        << height << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
    out << "<line x1=\"60\" y1=\"" << base_y << "\" x2=\"" << (width - 10) << "\" y2=\"" << base_y
        << "\" stroke=\"#444\"/>\n";
    for (int tick = 0; tick <= 4; ++tick) {
        const double frac = tick / 4.0;
        const int y = base_y - static_cast<int>(frac * scale);
        out << "<line x1=\"56\" y1=\"" << y << "\" x2=\"60\" y2=\"" << y
            << "\" stroke=\"#444\"/>\n";
        out << "<text x=\"52\" y=\"" << (y + 4) << "\" text-anchor=\"end\">"
            << csv::format_double(frac) << "</text>\n";
    }
    for (int m = 0; m < n_models; ++m) {
        const double vals[4] = {models[m].second.accuracy, models[m].second.precision,
                                models[m].second.recall, models[m].second.f1};
        const int gx = 70 + m * group_w;
        for (int k = 0; k < 4; ++k) {
            const int h = static_cast<int>(vals[k] * scale + 0.5);
            out << "<rect x=\"" << (gx + k * 22) << "\" y=\"" << (base_y - h)
                << "\" width=\"18\" height=\"" << h << "\" fill=\"" << palette[k] << "\"/>\n";
        }
        out << "<text x=\"" << (gx + 44) << "\" y=\"" << (base_y + 16)
            << "\" text-anchor=\"middle\">" << models[m].first << "</text>\n";
    }
    for (int k = 0; k < 4; ++k) {
        const int lx = 70 + k * 90;
        out << "<rect x=\"" << lx << "\" y=\"285\" width=\"12\" height=\"12\" fill=\""
            << palette[k] << "\"/>\n";
        out << "<text x=\"" << (lx + 16) << "\" y=\"295\">" << metric_names[k] << "</text>\n";
    }
    out << "</svg>\n";
    if (!out.good()) fail("figure write failed");
}

}  // namespace mdd
