#include "mddformer/ingest.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include "mddformer/csv.hpp"
#include "mddformer/rng.hpp"

namespace mdd {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error("ingest: " + msg); }

std::string expected_header(const ModalityConfig& config) {
    std::string h;
    for (const auto& [group, dim] : config.column_map) {
        for (int i = 0; i < dim; ++i) {
            if (!h.empty()) h += ',';
            h += group + "_" + std::to_string(i);
        }
    }
    return h;
}

}  // namespace

void ModalityConfig::validate() const {
    if (name != "audio" && name != "visual") fail("modality name must be 'audio' or 'visual'");
    if (column_map.empty()) fail("column_map is empty for modality '" + name + "'");
    int total = 0;
    for (const auto& [group, dim] : column_map) {
        if (group.empty() || dim <= 0) fail("bad column group in modality '" + name + "'");
        total += dim;
    }
    if (total != expected_total_dim) {
        fail("expected_total_dim " + std::to_string(expected_total_dim) +
             " does not equal sum of group dims " + std::to_string(total));
    }
}

ModalityConfig ModalityConfig::default_audio() {
    return ModalityConfig{"audio", {{"vggish", 128}}, 128};
}

ModalityConfig ModalityConfig::default_visual() {
    return ModalityConfig{
        "visual", {{"fau", 17}, {"landmarks", 136}, {"gaze", 12}, {"head_pose", 6}}, 171};
}

ModalityConfig audio_config_for_dim(int d) {
    if (d == 128) return ModalityConfig::default_audio();
    if (d <= 0) fail("audio width must be positive");
    return ModalityConfig{"audio", {{"vggish", d}}, d};
}

ModalityConfig visual_config_for_dim(int d) {
    if (d == 171) return ModalityConfig::default_visual();
    if (d <= 0) fail("visual width must be positive");
    return ModalityConfig{"visual", {{"visual", d}}, d};
}

int FoldAssignment::fold_of(const std::string& sample_id) const {
    auto it = assignments.find(sample_id);
    if (it == assignments.end()) fail("sample '" + sample_id + "' has no fold assignment");
    return it->second;
}

ModalitySequence parse_feature_file(std::istream& in, const ModalityConfig& config) {
    config.validate();
    std::string line;
    if (!std::getline(in, line)) fail("empty file (no header row)");

    const std::string want = expected_header(config);
    if (std::string(csv::strip_cr(line)) != want) {
        auto got = csv::split_fields(csv::strip_cr(line));
        auto expect = csv::split_fields(want);
        if (got.size() != expect.size()) {
            fail("dimension mismatch: header has " + std::to_string(got.size()) +
                 " columns, config '" + config.name + "' expects " +
                 std::to_string(config.expected_total_dim));
        }
        for (size_t c = 0; c < got.size(); ++c) {
            if (got[c] != expect[c]) {
                fail("header mismatch at line 1, column " + std::to_string(c + 1) + ": got '" +
                     std::string(got[c]) + "', expected '" + std::string(expect[c]) + "'");
            }
        }
    }

    const int dim = config.expected_total_dim;
    std::vector<double> values;
    int rows = 0;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        auto stripped = csv::strip_cr(line);
        if (stripped.empty()) continue;
        auto fields = csv::split_fields(stripped);
        if (static_cast<int>(fields.size()) != dim) {
            fail("dimension mismatch at line " + std::to_string(line_no) + ": got " +
                 std::to_string(fields.size()) + " columns, expected " + std::to_string(dim));
        }
        for (int c = 0; c < dim; ++c) {
            auto v = csv::parse_finite_double(fields[c]);
            if (!v) {
                fail("non-numeric or non-finite cell '" + std::string(fields[c]) + "' at line " +
                     std::to_string(line_no) + ", column " + std::to_string(c + 1));
            }
            values.push_back(*v);
        }
        ++rows;
    }
    if (rows == 0) fail("no data rows after header");

    ModalitySequence seq;
    seq.data = Matrix<double>(rows, dim, std::move(values));
    return seq;
}

ModalitySequence parse_feature_file(const std::filesystem::path& path,
                                    const ModalityConfig& config) {
    std::ifstream in(path);
    if (!in) fail("cannot open feature file '" + path.string() + "'");
    try {
        return parse_feature_file(in, config);
    } catch (const std::runtime_error& e) {
        throw std::runtime_error(std::string(e.what()) + " [" + path.string() + "]");
    }
}

void write_feature_file(std::ostream& out, const ModalitySequence& seq,
                        const ModalityConfig& config) {
    config.validate();
    if (seq.data.cols() != config.expected_total_dim)
        fail("sequence width does not match config '" + config.name + "'");
    out << expected_header(config) << '\n';
    for (int r = 0; r < seq.data.rows(); ++r) {
        for (int c = 0; c < seq.data.cols(); ++c) {
            if (c) out << ',';
            out << csv::format_double(seq.data(r, c));
        }
        out << '\n';
    }
}

void write_feature_file(const std::filesystem::path& path, const ModalitySequence& seq,
                        const ModalityConfig& config) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail("cannot write feature file '" + path.string() + "'");
    write_feature_file(out, seq, config);
}

ModalitySequence resample_to_fixed_length(const ModalitySequence& seq, int n_frames) {
    if (n_frames <= 0) fail("resample target length must be positive");
    const int t_raw = seq.data.rows();
    if (t_raw < 1) fail("resample input has no rows");
    ModalitySequence out;
    out.frame_rate_hint = seq.frame_rate_hint;
    out.data = Matrix<double>(n_frames, seq.data.cols());
    for (int i = 0; i < n_frames; ++i) {
        const int src = static_cast<int>((static_cast<int64_t>(i) * t_raw) / n_frames);
        std::copy(seq.data.row(src), seq.data.row(src) + seq.data.cols(), out.data.row(i));
    }
    return out;
}

std::vector<ManifestEntry> parse_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail("cannot open manifest '" + path.string() + "'");
    std::string line;
    if (!std::getline(in, line)) fail("empty manifest '" + path.string() + "'");
    auto header = csv::split_fields(csv::strip_cr(line));
    const std::vector<std::string> want = {"sample_id", "audio_path", "visual_path", "label",
                                           "platform"};
    if (header.size() < 4 || header.size() > 5) {
        fail("manifest header must be sample_id,audio_path,visual_path,label[,platform]");
    }
    for (size_t i = 0; i < header.size(); ++i) {
        if (header[i] != want[i]) fail("manifest header field " + std::to_string(i + 1) +
                                       " is '" + std::string(header[i]) + "', expected '" +
                                       want[i] + "'");
    }

    std::vector<ManifestEntry> entries;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        auto stripped = csv::strip_cr(line);
        if (stripped.empty()) continue;
        auto f = csv::split_fields(stripped);
        if (f.size() != header.size()) {
            fail("manifest line " + std::to_string(line_no) + " has " + std::to_string(f.size()) +
                 " fields, expected " + std::to_string(header.size()));
        }
        ManifestEntry e;
        e.sample_id = std::string(f[0]);
        e.audio_path = std::string(f[1]);
        e.visual_path = std::string(f[2]);
        e.label_raw = std::string(f[3]);
        if (f.size() == 5) e.platform = std::string(f[4]);
        if (e.sample_id.empty()) fail("manifest line " + std::to_string(line_no) +
                                      " has an empty sample_id");
        entries.push_back(std::move(e));
    }
    return entries;
}

Dataset build_dataset(const std::filesystem::path& manifest_path, const ModalityConfig& audio_cfg,
                      const ModalityConfig& visual_cfg, int n_audio, int n_visual) {
    auto entries = parse_manifest(manifest_path);
    return build_dataset(entries, manifest_path.parent_path(), audio_cfg, visual_cfg, n_audio,
                         n_visual);
}

Dataset build_dataset(const std::vector<ManifestEntry>& entries,
                      const std::filesystem::path& base_dir, const ModalityConfig& audio_cfg,
                      const ModalityConfig& visual_cfg, int n_audio, int n_visual) {
    if (entries.empty()) fail("manifest contains no samples");
    if (n_audio < 0 || n_visual < 0) fail("fixed sequence lengths must be non-negative");

    Dataset ds;
    std::set<std::string> seen;
    for (const auto& e : entries) {
        if (!seen.insert(e.sample_id).second) {
            ds.rejections.push_back({e.sample_id, "duplicate sample_id"});
            continue;
        }
        auto label = csv::parse_long(e.label_raw);
        if (!label || (*label != 0 && *label != 1)) {
            ds.rejections.push_back({e.sample_id, "label '" + e.label_raw + "' outside {0,1}"});
            continue;
        }
        LabeledSample s;
        s.sample_id = e.sample_id;
        s.label = static_cast<int>(*label);
        s.source_platform = e.platform;
        try {
            // A target length of 0 keeps the raw frame count.
            s.audio = parse_feature_file(base_dir / e.audio_path, audio_cfg);
            if (n_audio > 0) s.audio = resample_to_fixed_length(s.audio, n_audio);
            s.visual = parse_feature_file(base_dir / e.visual_path, visual_cfg);
            if (n_visual > 0) s.visual = resample_to_fixed_length(s.visual, n_visual);
        } catch (const std::runtime_error& err) {
            ds.rejections.push_back({e.sample_id, err.what()});
            continue;
        }
        ds.class_counts[s.label] += 1;
        ds.samples.push_back(std::move(s));
    }
    if (ds.samples.empty()) fail("no usable samples (all manifest entries rejected)");
    return ds;
}

FoldAssignment stratified_kfold(const std::vector<std::pair<std::string, int>>& labeled_ids, int k,
                                uint64_t seed) {
    if (k < 2) fail("stratified_kfold requires k >= 2");
    std::map<int, std::vector<int>> by_class;  // label -> indices into labeled_ids
    for (size_t i = 0; i < labeled_ids.size(); ++i) {
        const int label = labeled_ids[i].second;
        if (label != 0 && label != 1) fail("label outside {0,1} for sample '" +
                                           labeled_ids[i].first + "'");
        by_class[label].push_back(static_cast<int>(i));
    }
    for (const auto& [label, idx] : by_class) {
        if (static_cast<int>(idx.size()) < k) {
            fail("class " + std::to_string(label) + " has " + std::to_string(idx.size()) +
                 " samples, fewer than k=" + std::to_string(k));
        }
    }

    FoldAssignment fa;
    fa.k = k;
    std::vector<int> fold_sizes(k, 0);
    // Classes are processed in label order. Within a class, samples are dealt
    // in seeded shuffle order; each fold receives floor(n_c/k) samples and the
    // n_c mod k leftovers go to the currently smallest folds (ties by index).
    // This keeps per-class counts within 1 of proportionality and total fold
    // sizes within 1 of each other.
    for (auto& [label, idx] : by_class) {
        RngStream rng(mix_seed(seed, seed_role::kFold, static_cast<uint64_t>(label)));
        rng.shuffle(idx.begin(), idx.end());

        const int n_c = static_cast<int>(idx.size());
        const int base = n_c / k;
        const int extras = n_c % k;

        std::vector<int> order(k);
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(),
                         [&](int a, int b) { return fold_sizes[a] < fold_sizes[b]; });

        std::vector<int> take(k, base);
        for (int e = 0; e < extras; ++e) take[order[e]] += 1;

        int cursor = 0;
        for (int f = 0; f < k; ++f) {
            for (int j = 0; j < take[f]; ++j) {
                fa.assignments[labeled_ids[idx[cursor]].first] = f;
                ++cursor;
            }
            fold_sizes[f] += take[f];
        }
    }
    return fa;
}

FoldAssignment stratified_kfold(const Dataset& dataset, int k, uint64_t seed) {
    std::vector<std::pair<std::string, int>> labeled;
    labeled.reserve(dataset.samples.size());
    for (const auto& s : dataset.samples) labeled.emplace_back(s.sample_id, s.label);
    return stratified_kfold(labeled, k, seed);
}

}  // namespace mdd
