#include "mddformer/synth.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <vector>

#include "mddformer/csv.hpp"
#include "mddformer/rng.hpp"

namespace mdd {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error("synth: " + msg); }

std::vector<double> unit_direction(uint64_t seed, uint64_t modality, int dim) {
    RngStream rng(mix_seed(seed, seed_role::kSynthDir, modality));
    std::vector<double> u(dim);
    double norm_sq = 0.0;
    for (int j = 0; j < dim; ++j) {
        u[j] = rng.normal();
        norm_sq += u[j] * u[j];
    }
    if (norm_sq == 0.0) {  // unreachable in practice, but keep the invariant
        u[0] = 1.0;
        return u;
    }
    const double inv = 1.0 / std::sqrt(norm_sq);
    for (double& v : u) v *= inv;
    return u;
}

Matrix<double> sample_frames(uint64_t seed, int index, uint64_t modality, int n_frames, int dim,
                             double sigma, double separation, const std::vector<double>& u,
                             int label) {
    RngStream rng(mix_seed(seed, seed_role::kSynthSample, static_cast<uint64_t>(index), modality));
    Matrix<double> X(n_frames, dim);
    for (int t = 0; t < n_frames; ++t) {
        double* row = X.row(t);
        for (int j = 0; j < dim; ++j) row[j] = sigma * rng.normal();
    }
    if (label == 1 && separation != 0.0) {
        for (int t = 0; t < n_frames; ++t) {
            double* row = X.row(t);
            for (int j = 0; j < dim; ++j) row[j] += separation * u[j];
        }
    }
    return X;
}

std::string sample_name(int index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "synth_%04d", index);
    return buf;
}

}  // namespace

void SynthSpec::validate() const {
    if (n_samples < 2 || n_samples % 2 != 0) fail("n_samples must be even and at least 2");
    if (n_frames < 1) fail("n_frames must be at least 1");
    if (d_audio < 1 || d_visual < 1) fail("feature widths must be positive");
    if (!(noise_sigma > 0.0)) fail("noise_sigma must be positive");
    if (separation_audio < 0.0 || separation_visual < 0.0)
        fail("separations must be non-negative");
}

Dataset generate_synthetic_dataset(const SynthSpec& spec, uint64_t seed) {
    spec.validate();
    const std::vector<double> u_audio = unit_direction(seed, 0, spec.d_audio);
    const std::vector<double> u_visual = unit_direction(seed, 1, spec.d_visual);

    Dataset ds;
    ds.samples.reserve(spec.n_samples);
    for (int i = 0; i < spec.n_samples; ++i) {
        const int label = i % 2;
        LabeledSample s;
        s.sample_id = sample_name(i);
        s.label = label;
        s.source_platform = "synthetic";
        s.audio.data = sample_frames(seed, i, 0, spec.n_frames, spec.d_audio, spec.noise_sigma,
                                     spec.separation_audio, u_audio, label);
        s.visual.data = sample_frames(seed, i, 1, spec.n_frames, spec.d_visual, spec.noise_sigma,
                                      spec.separation_visual, u_visual, label);
        ds.class_counts[label] += 1;
        ds.samples.push_back(std::move(s));
    }
    return ds;
}

void write_synthetic_dataset(const SynthSpec& spec, uint64_t seed,
                             const std::filesystem::path& out_dir) {
    Dataset ds = generate_synthetic_dataset(spec, seed);
    const ModalityConfig audio_cfg = audio_config_for_dim(spec.d_audio);
    const ModalityConfig visual_cfg = visual_config_for_dim(spec.d_visual);

    std::error_code ec;
    std::filesystem::create_directories(out_dir / "features", ec);
    if (ec) fail("cannot create output directory '" + (out_dir / "features").string() + "'");

    std::ofstream manifest(out_dir / "manifest.csv", std::ios::binary);
    if (!manifest) fail("cannot open manifest for writing");
    manifest << "sample_id,audio_path,visual_path,label,platform\n";
    for (const LabeledSample& s : ds.samples) {
        const std::string audio_rel = "features/" + s.sample_id + "_audio.csv";
        const std::string visual_rel = "features/" + s.sample_id + "_visual.csv";
        write_feature_file(out_dir / audio_rel, s.audio, audio_cfg);
        write_feature_file(out_dir / visual_rel, s.visual, visual_cfg);
        manifest << s.sample_id << ',' << audio_rel << ',' << visual_rel << ','
                 << s.label << ',' << s.source_platform << '\n';
    }
    if (!manifest.good()) fail("manifest write failed");
}

}  // namespace mdd
