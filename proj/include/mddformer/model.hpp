#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "mddformer/classifier.hpp"
#include "mddformer/encoders.hpp"
#include "mddformer/fusion.hpp"
#include "mddformer/matrix.hpp"
#include "mddformer/rng.hpp"

#include <nlohmann/json.hpp>

namespace mdd {

struct ModelConfig {
    int n_audio = 256;     // frames per audio sequence after resampling
    int n_visual = 256;    // frames per visual sequence (must equal n_audio)
    int d_audio_in = 128;  // audio embedding width
    int d_visual_in = 171; // visual feature width
    int d_model = 128;     // shared hidden width
    int n_heads = 4;
    int d_ff = 512;
    int d_hidden_cls = 128;
    int tcn_blocks = 2;
    int tcn_kernel = 3;
    double dropout = 0.2;
    LogitFusion logit_fusion = LogitFusion::kAverage;

    void validate() const {
        require(n_audio > 0 && n_visual > 0, "config: sequence lengths must be positive");
        require(n_audio == n_visual,
                "config: n_audio must equal n_visual (fused attention logits are n x n)");
        require(d_audio_in > 0 && d_visual_in > 0, "config: input widths must be positive");
        require(d_model > 0 && d_ff > 0 && d_hidden_cls > 0, "config: widths must be positive");
        require(n_heads > 0 && d_model % n_heads == 0,
                "config: n_heads must divide d_model");
        require(tcn_blocks > 0, "config: need at least one TCN block");
        require(tcn_kernel > 0, "config: TCN kernel width must be positive");
        require(dropout >= 0.0 && dropout < 1.0, "config: dropout must be in [0,1)");
    }
};

inline std::string to_string(LogitFusion mode) {
    return mode == LogitFusion::kAverage ? "average" : "concat_reduce";
}

inline LogitFusion logit_fusion_from_string(const std::string& s) {
    if (s == "average") return LogitFusion::kAverage;
    if (s == "concat_reduce") return LogitFusion::kConcatReduce;
    throw std::invalid_argument("config: unknown logit_fusion '" + s + "'");
}

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
    j = nlohmann::json{{"n_audio", c.n_audio},
                       {"n_visual", c.n_visual},
                       {"d_audio_in", c.d_audio_in},
                       {"d_visual_in", c.d_visual_in},
                       {"d_model", c.d_model},
                       {"n_heads", c.n_heads},
                       {"d_ff", c.d_ff},
                       {"d_hidden_cls", c.d_hidden_cls},
                       {"tcn_blocks", c.tcn_blocks},
                       {"tcn_kernel", c.tcn_kernel},
                       {"dropout", c.dropout},
                       {"logit_fusion", to_string(c.logit_fusion)}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& c) {
    ModelConfig defaults;
    c.n_audio = j.value("n_audio", defaults.n_audio);
    c.n_visual = j.value("n_visual", defaults.n_visual);
    c.d_audio_in = j.value("d_audio_in", defaults.d_audio_in);
    c.d_visual_in = j.value("d_visual_in", defaults.d_visual_in);
    c.d_model = j.value("d_model", defaults.d_model);
    c.n_heads = j.value("n_heads", defaults.n_heads);
    c.d_ff = j.value("d_ff", defaults.d_ff);
    c.d_hidden_cls = j.value("d_hidden_cls", defaults.d_hidden_cls);
    c.tcn_blocks = j.value("tcn_blocks", defaults.tcn_blocks);
    c.tcn_kernel = j.value("tcn_kernel", defaults.tcn_kernel);
    c.dropout = j.value("dropout", defaults.dropout);
    c.logit_fusion = logit_fusion_from_string(
        j.value("logit_fusion", to_string(defaults.logit_fusion)));
}

template <typename T>
struct ModelParams {
    AudioProjParams<T> audio;
    TcnParams<T> tcn;
    FusionBlockParams<T> fusion;
    HeadParams<T> head;

    /// Allocate all tensors at the shapes implied by the config, zero-filled.
    static ModelParams shaped(const ModelConfig& cfg) {
        cfg.validate();
        ModelParams p;
        p.audio.W = Matrix<T>(cfg.d_audio_in, cfg.d_model);
        p.audio.b = Matrix<T>(1, cfg.d_model);
        p.tcn.blocks.resize(cfg.tcn_blocks);
        int c_in = cfg.d_visual_in;
        int dilation = 1;
        for (int b = 0; b < cfg.tcn_blocks; ++b) {
            TcnBlockParams<T>& blk = p.tcn.blocks[b];
            blk.kernel_width = cfg.tcn_kernel;
            blk.dilation = dilation;
            blk.conv1_W = Matrix<T>(cfg.tcn_kernel * c_in, cfg.d_model);
            blk.conv1_b = Matrix<T>(1, cfg.d_model);
            blk.conv2_W = Matrix<T>(cfg.tcn_kernel * cfg.d_model, cfg.d_model);
            blk.conv2_b = Matrix<T>(1, cfg.d_model);
            if (c_in != cfg.d_model) blk.proj_W = Matrix<T>(c_in, cfg.d_model);
            c_in = cfg.d_model;
            dilation *= 2;
        }
        const int d_head = cfg.d_model / cfg.n_heads;
        p.fusion.heads.resize(cfg.n_heads);
        for (auto& h : p.fusion.heads) {
            h.Wq_a = Matrix<T>(cfg.d_model, d_head);
            h.Wk_a = Matrix<T>(cfg.d_model, d_head);
            h.Wv_a = Matrix<T>(cfg.d_model, d_head);
            h.Wq_v = Matrix<T>(cfg.d_model, d_head);
            h.Wk_v = Matrix<T>(cfg.d_model, d_head);
            h.Wv_v = Matrix<T>(cfg.d_model, d_head);
        }
        if (cfg.logit_fusion == LogitFusion::kConcatReduce) {
            p.fusion.logit_reduce.assign(cfg.n_heads, Matrix<T>(2 * cfg.n_audio, cfg.n_audio));
        }
        p.fusion.Wa = Matrix<T>(cfg.d_model, cfg.d_model);
        p.fusion.Wv = Matrix<T>(cfg.d_model, cfg.d_model);
        p.fusion.ffn_W1 = Matrix<T>(2 * cfg.d_model, cfg.d_ff);
        p.fusion.ffn_b1 = Matrix<T>(1, cfg.d_ff);
        p.fusion.ffn_W2 = Matrix<T>(cfg.d_ff, 2 * cfg.d_model);
        p.fusion.ffn_b2 = Matrix<T>(1, 2 * cfg.d_model);
        p.fusion.ln_gamma = Matrix<T>(1, 2 * cfg.d_model);
        p.fusion.ln_beta = Matrix<T>(1, 2 * cfg.d_model);
        p.head.fc1_W = Matrix<T>(2 * cfg.d_model, cfg.d_hidden_cls);
        p.head.fc1_b = Matrix<T>(1, cfg.d_hidden_cls);
        p.head.fc2_W = Matrix<T>(cfg.d_hidden_cls, 2);
        p.head.fc2_b = Matrix<T>(1, 2);
        return p;
    }

    void zero() {
        visit_params(*this, [](const std::string&, Matrix<T>& m) { m.zero(); });
    }

    template <typename U>
    ModelParams<U> cast() const {
        ModelParams<U> out;
        out.audio.W = audio.W.template cast<U>();
        out.audio.b = audio.b.template cast<U>();
        out.tcn.blocks.resize(tcn.blocks.size());
        for (size_t b = 0; b < tcn.blocks.size(); ++b) {
            const auto& src = tcn.blocks[b];
            auto& dst = out.tcn.blocks[b];
            dst.conv1_W = src.conv1_W.template cast<U>();
            dst.conv1_b = src.conv1_b.template cast<U>();
            dst.conv2_W = src.conv2_W.template cast<U>();
            dst.conv2_b = src.conv2_b.template cast<U>();
            dst.proj_W = src.proj_W.template cast<U>();
            dst.kernel_width = src.kernel_width;
            dst.dilation = src.dilation;
        }
        out.fusion.heads.resize(fusion.heads.size());
        for (size_t h = 0; h < fusion.heads.size(); ++h) {
            const auto& src = fusion.heads[h];
            auto& dst = out.fusion.heads[h];
            dst.Wq_a = src.Wq_a.template cast<U>();
            dst.Wk_a = src.Wk_a.template cast<U>();
            dst.Wv_a = src.Wv_a.template cast<U>();
            dst.Wq_v = src.Wq_v.template cast<U>();
            dst.Wk_v = src.Wk_v.template cast<U>();
            dst.Wv_v = src.Wv_v.template cast<U>();
        }
        out.fusion.logit_reduce.resize(fusion.logit_reduce.size());
        for (size_t h = 0; h < fusion.logit_reduce.size(); ++h)
            out.fusion.logit_reduce[h] = fusion.logit_reduce[h].template cast<U>();
        out.fusion.Wa = fusion.Wa.template cast<U>();
        out.fusion.Wv = fusion.Wv.template cast<U>();
        out.fusion.ffn_W1 = fusion.ffn_W1.template cast<U>();
        out.fusion.ffn_b1 = fusion.ffn_b1.template cast<U>();
        out.fusion.ffn_W2 = fusion.ffn_W2.template cast<U>();
        out.fusion.ffn_b2 = fusion.ffn_b2.template cast<U>();
        out.fusion.ln_gamma = fusion.ln_gamma.template cast<U>();
        out.fusion.ln_beta = fusion.ln_beta.template cast<U>();
        out.head.fc1_W = head.fc1_W.template cast<U>();
        out.head.fc1_b = head.fc1_b.template cast<U>();
        out.head.fc2_W = head.fc2_W.template cast<U>();
        out.head.fc2_b = head.fc2_b.template cast<U>();
        return out;
    }
};

/// Enumerate every parameter tensor with a stable dotted name. The order here
/// defines the checkpoint tensor order and the Adam slot order.
template <typename P, typename F>
void visit_params(P& params, F&& fn) {
    fn("audio.W", params.audio.W);
    fn("audio.b", params.audio.b);
    for (size_t b = 0; b < params.tcn.blocks.size(); ++b) {
        const std::string pre = "tcn." + std::to_string(b) + ".";
        auto& blk = params.tcn.blocks[b];
        fn(pre + "conv1_W", blk.conv1_W);
        fn(pre + "conv1_b", blk.conv1_b);
        fn(pre + "conv2_W", blk.conv2_W);
        fn(pre + "conv2_b", blk.conv2_b);
        if (!blk.proj_W.empty()) fn(pre + "proj_W", blk.proj_W);
    }
    for (size_t h = 0; h < params.fusion.heads.size(); ++h) {
        const std::string pre = "fusion.head" + std::to_string(h) + ".";
        auto& head = params.fusion.heads[h];
        fn(pre + "Wq_a", head.Wq_a);
        fn(pre + "Wk_a", head.Wk_a);
        fn(pre + "Wv_a", head.Wv_a);
        fn(pre + "Wq_v", head.Wq_v);
        fn(pre + "Wk_v", head.Wk_v);
        fn(pre + "Wv_v", head.Wv_v);
    }
    for (size_t h = 0; h < params.fusion.logit_reduce.size(); ++h)
        fn("fusion.logit_reduce" + std::to_string(h), params.fusion.logit_reduce[h]);
    fn("fusion.Wa", params.fusion.Wa);
    fn("fusion.Wv", params.fusion.Wv);
    fn("fusion.ffn_W1", params.fusion.ffn_W1);
    fn("fusion.ffn_b1", params.fusion.ffn_b1);
    fn("fusion.ffn_W2", params.fusion.ffn_W2);
    fn("fusion.ffn_b2", params.fusion.ffn_b2);
    fn("fusion.ln_gamma", params.fusion.ln_gamma);
    fn("fusion.ln_beta", params.fusion.ln_beta);
    fn("head.fc1_W", params.head.fc1_W);
    fn("head.fc1_b", params.head.fc1_b);
    fn("head.fc2_W", params.head.fc2_W);
    fn("head.fc2_b", params.head.fc2_b);
}

template <typename T>
struct ModelCache {
    AudioProjCache<T> audio;
    TcnCache<T> tcn;
    FusionBlockCache<T> fusion;
    HeadCache<T> head;
    int seq_len = 0;
    Matrix<T> probs;  // 1 x 2
};

template <typename T>
class Mddformer {
public:
    explicit Mddformer(const ModelConfig& cfg) : cfg_(cfg) {
        cfg_.validate();
        params_ = ModelParams<T>::shaped(cfg_);
    }

    const ModelConfig& config() const { return cfg_; }
    ModelParams<T>& params() { return params_; }
    const ModelParams<T>& params() const { return params_; }

    /// Deterministic initialization from the root seed's "init" sub-stream:
    /// weights uniform in +-sqrt(3/fan_in) drawn row-major in visit order,
    /// biases and layernorm beta zero, layernorm gamma one, logit_reduce
    /// stacked [I/2; I/2] so the fused logits start as the plain average.
    void init(uint64_t seed) {
        RngStream rng(mix_seed(seed, seed_role::kInit));
        visit_params(params_, [&rng](const std::string& name, Matrix<T>& m) {
            // Bias tensors all carry "_b" in their name except the audio
            // projection bias; "ln_beta" matches the same rule and is also zero.
            if (name.find("_b") != std::string::npos || name == "audio.b") {
                m.zero();
            } else if (name.find("ln_gamma") != std::string::npos) {
                m.fill(T(1));
            } else if (name.find("logit_reduce") != std::string::npos) {
                m.zero();
                const int n = m.cols();
                for (int i = 0; i < n; ++i) {
                    m(i, i) = T(0.5);
                    m(n + i, i) = T(0.5);
                }
            } else {
                const double bound = std::sqrt(3.0 / static_cast<double>(m.rows()));
                for (long long i = 0; i < static_cast<long long>(m.size()); ++i)
                    m.data()[i] = static_cast<T>(rng.uniform(-bound, bound));
            }
        });
    }

    /// Forward one sample. Inputs must already be resampled to the configured
    /// sequence lengths. Pass a dropout RNG to train, nullptr to evaluate.
    /// The dropout stream is consumed in a fixed order: fusion output
    /// projections (audio, visual), FFN, classifier input, classifier hidden.
    void forward(const Matrix<T>& Xa, const Matrix<T>& Xv, RngStream* dropout_rng,
                 ModelCache<T>& cache) const {
        require(Xa.rows() == cfg_.n_audio && Xa.cols() == cfg_.d_audio_in,
                "model: audio input shape mismatch");
        require(Xv.rows() == cfg_.n_visual && Xv.cols() == cfg_.d_visual_in,
                "model: visual input shape mismatch");
        const double rate = dropout_rng ? cfg_.dropout : 0.0;
        Matrix<T> Ha, Hv, Fn, pooled;
        audio_project(Xa, params_.audio, Ha, &cache.audio);
        tcn_encode(Xv, params_.tcn, Hv, &cache.tcn);
        fusion_block_forward(Ha, Hv, params_.fusion, cfg_.logit_fusion, rate, dropout_rng, Fn,
                             &cache.fusion);
        cache.seq_len = Fn.rows();
        pool_sequence(Fn, pooled);
        classify(pooled, params_.head, rate, dropout_rng, cache.probs, &cache.head);
    }

    /// Accumulate gradients for one sample into `grads` (shaped like params,
    /// caller zeroes between batches). dlogits is 1 x 2.
    void backward(const ModelCache<T>& cache, const Matrix<T>& dlogits,
                  ModelParams<T>& grads) const {
        Matrix<T> dpooled, dFn, dHa, dHv, dXa, dXv;
        classify_backward(cache.head, params_.head, dlogits, dpooled, grads.head);
        pool_sequence_backward(dpooled, cache.seq_len, dFn);
        fusion_block_backward(cache.fusion, params_.fusion, cfg_.logit_fusion, dFn, dHa, dHv,
                              grads.fusion);
        audio_project_backward(cache.audio, params_.audio, dHa, dXa, grads.audio);
        tcn_encode_backward(cache.tcn, params_.tcn, dHv, dXv, grads.tcn);
    }

private:
    ModelConfig cfg_;
    ModelParams<T> params_;
};

}  // namespace mdd
