#pragma once

#include <filesystem>

#include <nlohmann/json.hpp>

#include "mddformer/model.hpp"

namespace mdd {

// Binary checkpoint container: magic "MDDCKPT\0", format version, the model
// config as a JSON chunk, then every parameter tensor as float32 row-major in
// visit_params order. All integers little-endian uint32.
struct Checkpoint {
    ModelConfig config;
    ModelParams<float> params;
    nlohmann::json meta;  // free-form (seed, epochs, fold) written by the trainer
};

void save_checkpoint(const std::filesystem::path& path, const ModelConfig& config,
                     const ModelParams<float>& params,
                     const nlohmann::json& meta = nlohmann::json::object());

Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace mdd
