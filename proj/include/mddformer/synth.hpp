#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "mddformer/ingest.hpp"

namespace mdd {

// Synthetic two-class dataset: per modality a fixed unit direction u_m, class
// 1 samples get a mean shift of separation_m * u_m on every frame, all frames
// carry i.i.d. Gaussian noise. separation = 0 makes the modality pure noise.
struct SynthSpec {
    int n_samples = 64;  // must be even so classes balance exactly
    int n_frames = 32;   // raw frames written per modality (pre-resampling)
    int d_audio = 128;
    int d_visual = 171;
    double separation_audio = 1.0;
    double separation_visual = 1.0;
    double noise_sigma = 1.0;

    void validate() const;
};

/// Generate in memory. Labels alternate 0,1,0,1,... so classes balance
/// exactly. Every sample depends only on (seed, its index), not on n_samples.
Dataset generate_synthetic_dataset(const SynthSpec& spec, uint64_t seed);

/// Write manifest.csv plus features/<id>_{audio,visual}.csv under out_dir in
/// the exact format the ingestion module reads back.
void write_synthetic_dataset(const SynthSpec& spec, uint64_t seed,
                             const std::filesystem::path& out_dir);

}  // namespace mdd
