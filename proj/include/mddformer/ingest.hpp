#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "mddformer/matrix.hpp"

namespace mdd {

/// Column schema of one modality's feature files: an ordered list of
/// (group name, dimension) pairs. Header cells must read group_0, group_1, ...
/// in schema order.
struct ModalityConfig {
    std::string name;  // "audio" or "visual"
    std::vector<std::pair<std::string, int>> column_map;
    int expected_total_dim = 0;

    void validate() const;

    // vggish:128
    static ModalityConfig default_audio();
    // fau:17, landmarks:136 (68 2-D key points), gaze:12, head_pose:6 -> 171.
    // Gaze width is schema-configurable; 12 total is the default reading.
    static ModalityConfig default_visual();
};

/// Schema for an audio/visual file of the given width: the default schema
/// when the width matches it, otherwise a single generic group. Synthetic
/// writers and ingestion use the same rule so headers always agree.
ModalityConfig audio_config_for_dim(int d);
ModalityConfig visual_config_for_dim(int d);

/// Fixed-schema per-frame feature rows for one modality of one sample,
/// time-major (row = frame).
struct ModalitySequence {
    Matrix<double> data;
    std::optional<double> frame_rate_hint;
};

struct LabeledSample {
    std::string sample_id;
    ModalitySequence audio;
    ModalitySequence visual;
    int label = 0;  // 1 = depressed, 0 = non-depressed
    std::string source_platform;
};

struct RejectionRecord {
    std::string sample_id;
    std::string reason;
};

struct Dataset {
    std::vector<LabeledSample> samples;
    std::vector<RejectionRecord> rejections;
    std::array<int, 2> class_counts{0, 0};
};

struct FoldAssignment {
    int k = 0;
    std::unordered_map<std::string, int> assignments;  // sample_id -> fold

    int fold_of(const std::string& sample_id) const;
};

struct ManifestEntry {
    std::string sample_id;
    std::string audio_path;
    std::string visual_path;
    std::string label_raw;
    std::string platform;
};

/// Parse a comma-delimited feature table (header row + one row per frame).
/// Errors carry 1-based line/column positions.
ModalitySequence parse_feature_file(std::istream& in, const ModalityConfig& config);
ModalitySequence parse_feature_file(const std::filesystem::path& path,
                                    const ModalityConfig& config);

/// Serialize in the exact format parse_feature_file reads. Values are written
/// as shortest round-trip decimals, so parse(write(seq)) == seq bit-for-bit.
void write_feature_file(std::ostream& out, const ModalitySequence& seq,
                        const ModalityConfig& config);
void write_feature_file(const std::filesystem::path& path, const ModalitySequence& seq,
                        const ModalityConfig& config);

/// Uniform index resampling to exactly n_frames rows: output row i is input
/// row floor(i * T / n_frames). Duplicates rows when T < n_frames.
ModalitySequence resample_to_fixed_length(const ModalitySequence& seq, int n_frames);

/// Manifest: CSV with header sample_id,audio_path,visual_path,label,platform
/// (platform optional). Paths are resolved relative to the manifest location.
std::vector<ManifestEntry> parse_manifest(const std::filesystem::path& path);

/// Load every manifest entry, resampling to n_audio/n_visual frames (0 keeps
/// the raw frame count). Bad entries become rejection records; an empty or
/// fully rejected manifest is an error.
Dataset build_dataset(const std::filesystem::path& manifest_path, const ModalityConfig& audio_cfg,
                      const ModalityConfig& visual_cfg, int n_audio, int n_visual);
Dataset build_dataset(const std::vector<ManifestEntry>& entries,
                      const std::filesystem::path& base_dir, const ModalityConfig& audio_cfg,
                      const ModalityConfig& visual_cfg, int n_audio, int n_visual);

/// Stratified k-fold assignment over (sample_id, label) pairs: fold sizes
/// differ by at most one, per-class fold counts differ from exact
/// proportionality by at most one, deterministic in the seed.
FoldAssignment stratified_kfold(const std::vector<std::pair<std::string, int>>& labeled_ids, int k,
                                uint64_t seed);
FoldAssignment stratified_kfold(const Dataset& dataset, int k, uint64_t seed);

}  // namespace mdd
