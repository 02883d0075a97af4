#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mddformer/ingest.hpp"
#include "mddformer/model.hpp"

namespace mdd {

struct TrainConfig {
    double lr_max = 1e-5;
    double lr_min = 0.0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps_adam = 1e-8;
    int batch_size = 4;
    int epochs = 300;

    void validate() const {
        require(lr_max > 0.0, "train config: lr_max must be positive");
        require(lr_min >= 0.0 && lr_min <= lr_max, "train config: need 0 <= lr_min <= lr_max");
        require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0,
                "train config: betas must be in [0,1)");
        require(eps_adam > 0.0, "train config: eps_adam must be positive");
        require(batch_size >= 1, "train config: batch_size must be at least 1");
        require(epochs >= 0, "train config: epochs must be non-negative");
    }
};

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
    j = nlohmann::json{{"lr_max", c.lr_max},       {"lr_min", c.lr_min},
                       {"beta1", c.beta1},         {"beta2", c.beta2},
                       {"eps_adam", c.eps_adam},   {"batch_size", c.batch_size},
                       {"epochs", c.epochs}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
    TrainConfig d;
    c.lr_max = j.value("lr_max", d.lr_max);
    c.lr_min = j.value("lr_min", d.lr_min);
    c.beta1 = j.value("beta1", d.beta1);
    c.beta2 = j.value("beta2", d.beta2);
    c.eps_adam = j.value("eps_adam", d.eps_adam);
    c.batch_size = j.value("batch_size", d.batch_size);
    c.epochs = j.value("epochs", d.epochs);
}

/// Epoch-granular cosine annealing from lr_max down to lr_min.
inline double cosine_lr(int epoch, const TrainConfig& cfg) {
    require(epoch >= 0 && epoch <= cfg.epochs, "cosine_lr: epoch out of range");
    if (cfg.epochs == 0) return cfg.lr_max;
    constexpr double kPi = 3.14159265358979323846;
    const double t = static_cast<double>(epoch) / static_cast<double>(cfg.epochs);
    return cfg.lr_min + 0.5 * (cfg.lr_max - cfg.lr_min) * (1.0 + std::cos(kPi * t));
}

/// One Adam update on a single tensor. Moments m/v live alongside the
/// parameter; t is the 1-based step count (after increment).
template <typename T>
void adam_update(Matrix<T>& param, const Matrix<T>& grad, Matrix<T>& m, Matrix<T>& v, int t,
                 double lr, const TrainConfig& cfg) {
    require(param.same_shape(grad) && param.same_shape(m) && param.same_shape(v),
            "adam_update: shape mismatch");
    require(t >= 1, "adam_update: step count must be at least 1");
    const double bc1 = 1.0 - std::pow(cfg.beta1, t);
    const double bc2 = 1.0 - std::pow(cfg.beta2, t);
    const long long n = static_cast<long long>(param.size());
    T* p = param.data();
    const T* g = grad.data();
    T* mp = m.data();
    T* vp = v.data();
    for (long long i = 0; i < n; ++i) {
        const double gi = static_cast<double>(g[i]);
        const double mi = cfg.beta1 * static_cast<double>(mp[i]) + (1.0 - cfg.beta1) * gi;
        const double vi = cfg.beta2 * static_cast<double>(vp[i]) + (1.0 - cfg.beta2) * gi * gi;
        mp[i] = static_cast<T>(mi);
        vp[i] = static_cast<T>(vi);
        const double mhat = mi / bc1;
        const double vhat = vi / bc2;
        p[i] = static_cast<T>(static_cast<double>(p[i]) - lr * mhat / (std::sqrt(vhat) + cfg.eps_adam));
    }
}

template <typename T>
struct AdamState {
    ModelParams<T> m, v;
    int t = 0;

    static AdamState shaped(const ModelConfig& cfg) {
        AdamState s;
        s.m = ModelParams<T>::shaped(cfg);
        s.v = ModelParams<T>::shaped(cfg);
        return s;
    }
};

/// One optimizer step over every model tensor (visit order).
template <typename T>
void adam_step(ModelParams<T>& params, const ModelParams<T>& grads, AdamState<T>& state,
               double lr, const TrainConfig& cfg) {
    state.t += 1;
    std::vector<Matrix<T>*> ps, ms, vs;
    std::vector<const Matrix<T>*> gs;
    visit_params(params, [&ps](const std::string&, Matrix<T>& x) { ps.push_back(&x); });
    visit_params(grads, [&gs](const std::string&, const Matrix<T>& x) { gs.push_back(&x); });
    visit_params(state.m, [&ms](const std::string&, Matrix<T>& x) { ms.push_back(&x); });
    visit_params(state.v, [&vs](const std::string&, Matrix<T>& x) { vs.push_back(&x); });
    require(ps.size() == gs.size() && ps.size() == ms.size() && ps.size() == vs.size(),
            "adam_step: parameter/gradient enumeration mismatch");
    for (size_t i = 0; i < ps.size(); ++i)
        adam_update(*ps[i], *gs[i], *ms[i], *vs[i], state.t, lr, cfg);
}

struct EpochRecord {
    int epoch = 0;
    double lr = 0.0;
    double train_loss = 0.0;
    double train_accuracy = 0.0;
    double wall_seconds = 0.0;  // in-memory only; kept out of history files
};

struct TrainHistory {
    std::vector<EpochRecord> epochs;
};

struct PredictionRecord {
    std::string sample_id;
    int truth = 0;
    int predicted = 0;
    double p0 = 0.0;
    double p1 = 0.0;
};

struct TrainOptions {
    bool zero_audio = false;   // ablation: feed zeros for the audio modality
    bool zero_visual = false;  // ablation: feed zeros for the visual modality
    std::ostream* log = nullptr;  // optional progress lines (stderr in the CLI)
};

struct TrainResult {
    ModelParams<float> params;
    TrainHistory history;
    std::vector<PredictionRecord> heldout;
};

/// Model-ready inputs for one sample: resampled to the configured lengths
/// and cast to the working precision.
template <typename T>
struct SampleInputs {
    std::string sample_id;
    Matrix<T> Xa, Xv;
    int label = 0;
};

template <typename T>
std::vector<SampleInputs<T>> prepare_inputs(const Dataset& ds, const ModelConfig& cfg,
                                            bool zero_audio = false, bool zero_visual = false) {
    std::vector<SampleInputs<T>> out;
    out.reserve(ds.samples.size());
    for (const LabeledSample& s : ds.samples) {
        require(s.audio.data.cols() == cfg.d_audio_in,
                "train: sample '" + s.sample_id + "' audio width does not match the model");
        require(s.visual.data.cols() == cfg.d_visual_in,
                "train: sample '" + s.sample_id + "' visual width does not match the model");
        SampleInputs<T> in;
        in.sample_id = s.sample_id;
        in.label = s.label;
        if (s.audio.data.rows() == cfg.n_audio) {
            in.Xa = s.audio.data.template cast<T>();
        } else {
            in.Xa = resample_to_fixed_length(s.audio, cfg.n_audio).data.template cast<T>();
        }
        if (s.visual.data.rows() == cfg.n_visual) {
            in.Xv = s.visual.data.template cast<T>();
        } else {
            in.Xv = resample_to_fixed_length(s.visual, cfg.n_visual).data.template cast<T>();
        }
        if (zero_audio) in.Xa.zero();
        if (zero_visual) in.Xv.zero();
        out.push_back(std::move(in));
    }
    return out;
}

/// Train on every fold except fold_id, then predict the held-out fold.
/// Deterministic in (dataset, folds, configs, seed).
TrainResult train_model(const Dataset& ds, const FoldAssignment& folds, int fold_id,
                        const ModelConfig& mcfg, const TrainConfig& tcfg, uint64_t seed,
                        const TrainOptions& opts = {});

/// Evaluate a trained model (dropout off) on the given samples.
std::vector<PredictionRecord> evaluate_model(const Mddformer<float>& model,
                                             const std::vector<SampleInputs<float>>& inputs);

void write_history(const std::filesystem::path& path, const TrainHistory& history);
void write_predictions(const std::filesystem::path& path,
                       const std::vector<PredictionRecord>& preds);
std::vector<PredictionRecord> read_predictions(const std::filesystem::path& path);

// ---- Gradient checking (f64, dropout off) ----

struct GradBatch {
    std::vector<Matrix<double>> Xa, Xv;
    std::vector<int> labels;
};

/// Random batch for gradient checking, drawn from the seed's init stream.
GradBatch make_gradcheck_batch(const ModelConfig& cfg, uint64_t seed, int batch_size);

/// Mean BCE loss of the model on a batch, dropout off.
double batch_loss(const Mddformer<double>& model, const GradBatch& batch);

/// Analytic gradients of batch_loss accumulated into `grads` (caller zeroes).
void batch_gradients(const Mddformer<double>& model, const GradBatch& batch,
                     ModelParams<double>& grads);

struct GradCheckResult {
    double max_rel_error = 0.0;
    long long coords_checked = 0;
    std::string worst_tensor;
    long long worst_index = -1;
};

/// Compare the supplied analytic gradients against central finite differences
/// of batch_loss. max_coords = 0 checks every coordinate; otherwise at least
/// min(max_coords, total) coordinates are sampled (deterministically).
GradCheckResult compare_with_fd(Mddformer<double>& model, const GradBatch& batch,
                                const ModelParams<double>& grads, double fd_eps,
                                long long max_coords, uint64_t seed);

/// End-to-end harness: build + init a model, draw a batch, compute analytic
/// gradients, and compare with finite differences.
GradCheckResult gradient_check(const ModelConfig& cfg, uint64_t seed, int batch_size,
                               double fd_eps, long long max_coords);

}  // namespace mdd
