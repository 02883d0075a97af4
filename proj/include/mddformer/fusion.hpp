#pragma once

#include <cmath>
#include <vector>

#include "mddformer/dropout.hpp"
#include "mddformer/kernels.hpp"
#include "mddformer/matrix.hpp"
#include "mddformer/rng.hpp"

namespace mdd {

// How the two per-head attention score matrices are combined into the single
// fused logit matrix shared by both modality branches.
enum class LogitFusion {
    kAverage,       // L = (Qa Ka^T + Qv Kv^T) / 2
    kConcatReduce,  // L = [Qa Ka^T | Qv Kv^T] . W_r, W_r is 2N x N per head
};

template <typename T>
struct AttentionHeadParams {
    Matrix<T> Wq_a, Wk_a, Wv_a;  // d_model x d_head
    Matrix<T> Wq_v, Wk_v, Wv_v;
};

template <typename T>
struct FusionBlockParams {
    std::vector<AttentionHeadParams<T>> heads;
    std::vector<Matrix<T>> logit_reduce;  // per head, 2N x N; concat-reduce mode only
    Matrix<T> Wa, Wv;                     // d_model x d_model, bias-free output projections
    Matrix<T> ffn_W1;                     // 2 d_model x d_ff
    Matrix<T> ffn_b1;                     // 1 x d_ff
    Matrix<T> ffn_W2;                     // d_ff x 2 d_model
    Matrix<T> ffn_b2;                     // 1 x 2 d_model
    Matrix<T> ln_gamma, ln_beta;          // 1 x 2 d_model
};

template <typename T>
struct FusionHeadCache {
    Matrix<T> Qa, Ka, Va, Qv, Kv, Vv;  // n x d_head
    Matrix<T> P;                       // n x n attention weights (post-softmax)
    Matrix<T> Fcat;                    // n x 2n, concat-reduce mode only
};

template <typename T>
struct FusionBlockCache {
    Matrix<T> Ha, Hv;  // block inputs
    std::vector<FusionHeadCache<T>> heads;
    Matrix<T> Ahat_a, Ahat_v;        // n x d_model, concatenated head outputs
    Matrix<T> drop_a, drop_v;        // dropout masks on the output projections
    Matrix<T> Ff;                    // n x 2 d_model, post-residual concat
    Matrix<T> z1;                    // FFN pre-activation
    Matrix<T> drop_ffn;              // dropout mask after ELU
    Matrix<T> R;            // FFN residual sum (layernorm input)
    Matrix<T> ln_mean_rstd; // per-row (mean, 1/std) layernorm cache
};

/// Variance floor inside layer normalization.
inline constexpr double kLayerNormEps = 1e-5;

// Standalone ops, used directly by the tests; the block forward below fuses
// them so the softmax of the shared logits is computed once per head.

template <typename T>
void project_qkv(const Matrix<T>& H, const Matrix<T>& Wq, const Matrix<T>& Wk,
                 const Matrix<T>& Wv, Matrix<T>& Q, Matrix<T>& K, Matrix<T>& V) {
    kernels::matmul_nn(H, Wq, Q);
    kernels::matmul_nn(H, Wk, K);
    kernels::matmul_nn(H, Wv, V);
}

template <typename T>
void fused_logits(const Matrix<T>& Qa, const Matrix<T>& Ka, const Matrix<T>& Qv,
                  const Matrix<T>& Kv, Matrix<T>& L) {
    Matrix<T> Fa, Fv;
    kernels::matmul_nt(Qa, Ka, Fa);
    kernels::matmul_nt(Qv, Kv, Fv);
    L.resize(Fa.rows(), Fa.cols());
    const T* a = Fa.data();
    const T* v = Fv.data();
    T* out = L.data();
    for (long long i = 0; i < static_cast<long long>(L.size()); ++i) out[i] = (a[i] + v[i]) / T(2);
}

template <typename T>
void cross_attention(const Matrix<T>& L, const Matrix<T>& V, int d_k, Matrix<T>& A) {
    require(d_k > 0, "cross_attention: d_k must be positive");
    Matrix<T> P;
    kernels::softmax_rows(L, T(1) / static_cast<T>(std::sqrt(static_cast<double>(d_k))), P);
    kernels::matmul_nn(P, V, A);
}

namespace detail {

template <typename T>
void copy_block_cols(const Matrix<T>& src, Matrix<T>& dst, int col0) {
    for (int i = 0; i < src.rows(); ++i) {
        const T* s = src.row(i);
        T* d = dst.row(i) + col0;
        for (int j = 0; j < src.cols(); ++j) d[j] = s[j];
    }
}

template <typename T>
Matrix<T> slice_cols(const Matrix<T>& src, int col0, int ncols) {
    Matrix<T> out(src.rows(), ncols);
    for (int i = 0; i < src.rows(); ++i) {
        const T* s = src.row(i) + col0;
        T* d = out.row(i);
        for (int j = 0; j < ncols; ++j) d[j] = s[j];
    }
    return out;
}

}  // namespace detail

// Multi-head cross fusion: both branches attend with the shared fused logits,
// per-branch output projections with dropout feed residual connections, and
// the concatenated result runs through an ELU FFN with residual + layernorm.
// Returns F_n (n x 2 d_model).
template <typename T>
void fusion_block_forward(const Matrix<T>& Ha, const Matrix<T>& Hv,
                          const FusionBlockParams<T>& p, LogitFusion mode, double dropout_rate,
                          RngStream* rng, Matrix<T>& Fn, FusionBlockCache<T>* cache = nullptr) {
    require(Ha.rows() == Hv.rows(), "fusion: audio and visual sequence lengths differ");
    require(Ha.cols() == Hv.cols(), "fusion: audio and visual widths differ");
    require(!p.heads.empty(), "fusion: no attention heads");
    const int n = Ha.rows();
    const int d_model = Ha.cols();
    const int n_heads = static_cast<int>(p.heads.size());
    require(d_model % n_heads == 0, "fusion: d_model not divisible by head count");
    const int d_head = d_model / n_heads;
    const T scale = T(1) / static_cast<T>(std::sqrt(static_cast<double>(d_head)));

    FusionBlockCache<T> local;
    FusionBlockCache<T>& c = cache ? *cache : local;
    c.Ha = Ha;
    c.Hv = Hv;
    c.heads.assign(n_heads, FusionHeadCache<T>());
    c.Ahat_a.resize(n, d_model);
    c.Ahat_v.resize(n, d_model);

    for (int h = 0; h < n_heads; ++h) {
        FusionHeadCache<T>& hc = c.heads[h];
        const AttentionHeadParams<T>& hp = p.heads[h];
        project_qkv(Ha, hp.Wq_a, hp.Wk_a, hp.Wv_a, hc.Qa, hc.Ka, hc.Va);
        project_qkv(Hv, hp.Wq_v, hp.Wk_v, hp.Wv_v, hc.Qv, hc.Kv, hc.Vv);
        Matrix<T> Fa, Fv, L;
        kernels::matmul_nt(hc.Qa, hc.Ka, Fa);
        kernels::matmul_nt(hc.Qv, hc.Kv, Fv);
        if (mode == LogitFusion::kAverage) {
            L.resize(n, n);
            const T* a = Fa.data();
            const T* v = Fv.data();
            T* out = L.data();
            for (long long i = 0; i < static_cast<long long>(L.size()); ++i) out[i] = (a[i] + v[i]) / T(2);
        } else {
            require(h < static_cast<int>(p.logit_reduce.size()),
                    "fusion: missing logit_reduce weight for head");
            const Matrix<T>& Wr = p.logit_reduce[h];
            require(Wr.rows() == 2 * n && Wr.cols() == n,
                    "fusion: logit_reduce must be 2n x n for sequence length n");
            hc.Fcat.resize(n, 2 * n);
            detail::copy_block_cols(Fa, hc.Fcat, 0);
            detail::copy_block_cols(Fv, hc.Fcat, n);
            kernels::matmul_nn(hc.Fcat, Wr, L);
        }
        kernels::softmax_rows(L, scale, hc.P);
        Matrix<T> Aa, Av;
        kernels::matmul_nn(hc.P, hc.Va, Aa);
        kernels::matmul_nn(hc.P, hc.Vv, Av);
        detail::copy_block_cols(Aa, c.Ahat_a, h * d_head);
        detail::copy_block_cols(Av, c.Ahat_v, h * d_head);
    }

    Matrix<T> Za, Zv;
    kernels::matmul_nn(c.Ahat_a, p.Wa, Za);
    kernels::matmul_nn(c.Ahat_v, p.Wv, Zv);
    dropout_forward(Za, dropout_rate, rng, c.drop_a);
    dropout_forward(Zv, dropout_rate, rng, c.drop_v);
    kernels::add_inplace(Za, Ha);
    kernels::add_inplace(Zv, Hv);

    c.Ff.resize(n, 2 * d_model);
    detail::copy_block_cols(Za, c.Ff, 0);
    detail::copy_block_cols(Zv, c.Ff, d_model);

    // FFN with residual, then layernorm.
    Matrix<T> a1, z2;
    kernels::matmul_nn(c.Ff, p.ffn_W1, c.z1);
    kernels::add_bias_rows(c.z1, p.ffn_b1);
    kernels::elu(c.z1, a1);
    dropout_forward(a1, dropout_rate, rng, c.drop_ffn);
    kernels::matmul_nn(a1, p.ffn_W2, z2);
    kernels::add_bias_rows(z2, p.ffn_b2);
    c.R = z2;
    kernels::add_inplace(c.R, c.Ff);
    kernels::layernorm_rows(c.R, p.ln_gamma, p.ln_beta, T(kLayerNormEps), Fn, c.ln_mean_rstd);
}

template <typename T>
void fusion_block_backward(const FusionBlockCache<T>& c, const FusionBlockParams<T>& p,
                           LogitFusion mode, const Matrix<T>& dFn, Matrix<T>& dHa, Matrix<T>& dHv,
                           FusionBlockParams<T>& grads) {
    const int n = c.Ha.rows();
    const int d_model = c.Ha.cols();
    const int n_heads = static_cast<int>(p.heads.size());
    const int d_head = d_model / n_heads;
    const T scale = T(1) / static_cast<T>(std::sqrt(static_cast<double>(d_head)));

    Matrix<T> dR;
    kernels::layernorm_rows_backward(c.R, p.ln_gamma, c.ln_mean_rstd, dFn, dR, grads.ln_gamma,
                                     grads.ln_beta);

    // Back through the FFN. dR feeds both the residual skip and the FFN output.
    Matrix<T> a1;
    kernels::elu(c.z1, a1);
    dropout_backward(c.drop_ffn, a1);  // re-apply mask to recover the dropped activations
    Matrix<T> dW2;
    kernels::matmul_tn(a1, dR, dW2);
    kernels::add_inplace(grads.ffn_W2, dW2);
    for (int i = 0; i < dR.rows(); ++i)
        for (int j = 0; j < dR.cols(); ++j) grads.ffn_b2(0, j) += dR(i, j);
    Matrix<T> da1;
    kernels::matmul_nt(dR, p.ffn_W2, da1);
    dropout_backward(c.drop_ffn, da1);
    Matrix<T> dz1;
    kernels::elu_backward(c.z1, da1, dz1);
    Matrix<T> dW1;
    kernels::matmul_tn(c.Ff, dz1, dW1);
    kernels::add_inplace(grads.ffn_W1, dW1);
    for (int i = 0; i < dz1.rows(); ++i)
        for (int j = 0; j < dz1.cols(); ++j) grads.ffn_b1(0, j) += dz1(i, j);
    Matrix<T> dFf;
    kernels::matmul_nt(dz1, p.ffn_W1, dFf);
    kernels::add_inplace(dFf, dR);  // residual path

    Matrix<T> dMa = detail::slice_cols(dFf, 0, d_model);
    Matrix<T> dMv = detail::slice_cols(dFf, d_model, d_model);

    dHa = dMa;  // residual around the attention sublayer
    dHv = dMv;

    Matrix<T> dZa = dMa;
    Matrix<T> dZv = dMv;
    dropout_backward(c.drop_a, dZa);
    dropout_backward(c.drop_v, dZv);
    Matrix<T> dW;
    kernels::matmul_tn(c.Ahat_a, dZa, dW);
    kernels::add_inplace(grads.Wa, dW);
    kernels::matmul_tn(c.Ahat_v, dZv, dW);
    kernels::add_inplace(grads.Wv, dW);
    Matrix<T> dAhat_a, dAhat_v;
    kernels::matmul_nt(dZa, p.Wa, dAhat_a);
    kernels::matmul_nt(dZv, p.Wv, dAhat_v);

    for (int h = 0; h < n_heads; ++h) {
        const FusionHeadCache<T>& hc = c.heads[h];
        const AttentionHeadParams<T>& hp = p.heads[h];
        AttentionHeadParams<T>& hg = grads.heads[h];
        Matrix<T> dAa = detail::slice_cols(dAhat_a, h * d_head, d_head);
        Matrix<T> dAv = detail::slice_cols(dAhat_v, h * d_head, d_head);

        Matrix<T> dP, tmp;
        kernels::matmul_nt(dAa, hc.Va, dP);
        kernels::matmul_nt(dAv, hc.Vv, tmp);
        kernels::add_inplace(dP, tmp);
        Matrix<T> dVa, dVv;
        kernels::matmul_tn(hc.P, dAa, dVa);
        kernels::matmul_tn(hc.P, dAv, dVv);

        Matrix<T> dL;
        kernels::softmax_rows_backward(hc.P, dP, scale, dL);

        Matrix<T> dFa, dFv;
        if (mode == LogitFusion::kAverage) {
            dFa.resize(n, n);
            dFv.resize(n, n);
            const T* src = dL.data();
            T* fa = dFa.data();
            T* fv = dFv.data();
            for (long long i = 0; i < static_cast<long long>(dL.size()); ++i) {
                fa[i] = src[i] / T(2);
                fv[i] = src[i] / T(2);
            }
        } else {
            Matrix<T> dWr;
            kernels::matmul_tn(hc.Fcat, dL, dWr);
            kernels::add_inplace(grads.logit_reduce[h], dWr);
            Matrix<T> dFcat;
            kernels::matmul_nt(dL, p.logit_reduce[h], dFcat);
            dFa = detail::slice_cols(dFcat, 0, n);
            dFv = detail::slice_cols(dFcat, n, n);
        }

        // F = Q K^T: dQ = dF K, dK = dF^T Q.
        Matrix<T> dQa, dKa, dQv, dKv;
        kernels::matmul_nn(dFa, hc.Ka, dQa);
        kernels::matmul_tn(dFa, hc.Qa, dKa);
        kernels::matmul_nn(dFv, hc.Kv, dQv);
        kernels::matmul_tn(dFv, hc.Qv, dKv);

        auto accum_proj = [](const Matrix<T>& H, const Matrix<T>& dOut, const Matrix<T>& W,
                             Matrix<T>& gW, Matrix<T>& dH) {
            Matrix<T> g;
            kernels::matmul_tn(H, dOut, g);
            kernels::add_inplace(gW, g);
            Matrix<T> dh;
            kernels::matmul_nt(dOut, W, dh);
            kernels::add_inplace(dH, dh);
        };
        accum_proj(c.Ha, dQa, hp.Wq_a, hg.Wq_a, dHa);
        accum_proj(c.Ha, dKa, hp.Wk_a, hg.Wk_a, dHa);
        accum_proj(c.Ha, dVa, hp.Wv_a, hg.Wv_a, dHa);
        accum_proj(c.Hv, dQv, hp.Wq_v, hg.Wq_v, dHv);
        accum_proj(c.Hv, dKv, hp.Wk_v, hg.Wk_v, dHv);
        accum_proj(c.Hv, dVv, hp.Wv_v, hg.Wv_v, dHv);
    }
}

}  // namespace mdd
