#pragma once

#include <vector>

#include "mddformer/kernels.hpp"
#include "mddformer/matrix.hpp"

namespace mdd {

// Audio branch: one affine projection taking per-frame embeddings to the
// common hidden width. Visual branch: a stack of dilated causal residual
// convolution blocks (dilations 1,2,4,... doubling per block).

template <typename T>
struct AudioProjParams {
    Matrix<T> W;  // d_in x d_model
    Matrix<T> b;  // 1 x d_model
};

template <typename T>
struct AudioProjCache {
    Matrix<T> X;  // input, n x d_in
};

template <typename T>
void audio_project(const Matrix<T>& X, const AudioProjParams<T>& p, Matrix<T>& H,
                   AudioProjCache<T>* cache = nullptr) {
    require(X.cols() == p.W.rows(), "audio_project: input width does not match W");
    kernels::matmul_nn(X, p.W, H);
    kernels::add_bias_rows(H, p.b);
    if (cache) cache->X = X;
}

template <typename T>
void audio_project_backward(const AudioProjCache<T>& cache, const AudioProjParams<T>& p,
                            const Matrix<T>& dH, Matrix<T>& dX, AudioProjParams<T>& grads) {
    Matrix<T> dW;
    kernels::matmul_tn(cache.X, dH, dW);
    kernels::add_inplace(grads.W, dW);
    for (int i = 0; i < dH.rows(); ++i) {
        const T* r = dH.row(i);
        for (int j = 0; j < dH.cols(); ++j) grads.b(0, j) += r[j];
    }
    kernels::matmul_nt(dH, p.W, dX);
}

template <typename T>
struct TcnBlockParams {
    Matrix<T> conv1_W;  // (kw*c_in) x c_out
    Matrix<T> conv1_b;  // 1 x c_out
    Matrix<T> conv2_W;  // (kw*c_out) x c_out
    Matrix<T> conv2_b;  // 1 x c_out
    Matrix<T> proj_W;   // c_in x c_out when c_in != c_out, else empty (identity skip)
    int kernel_width = 3;
    int dilation = 1;

    bool has_proj() const { return !proj_W.empty(); }
};

template <typename T>
struct TcnParams {
    std::vector<TcnBlockParams<T>> blocks;
};

template <typename T>
struct TcnBlockCache {
    Matrix<T> X;   // block input
    Matrix<T> z1;  // conv1 pre-activation
    Matrix<T> a1;
    Matrix<T> z2;  // conv2 pre-activation
};

template <typename T>
struct TcnCache {
    std::vector<TcnBlockCache<T>> blocks;
};

// block(x) = elu(conv2(elu(conv1(x)))) + skip(x), skip = 1x1 projection when
// channel counts differ, identity otherwise.
template <typename T>
void tcn_block_forward(const Matrix<T>& X, const TcnBlockParams<T>& p, Matrix<T>& Y,
                       TcnBlockCache<T>* cache = nullptr) {
    Matrix<T> z1, a1, z2, a2;
    kernels::causal_conv1d(X, p.conv1_W, p.conv1_b, p.kernel_width, p.dilation, z1);
    kernels::elu(z1, a1);
    kernels::causal_conv1d(a1, p.conv2_W, p.conv2_b, p.kernel_width, p.dilation, z2);
    kernels::elu(z2, a2);
    if (p.has_proj()) {
        kernels::matmul_nn(X, p.proj_W, Y);
        kernels::add_inplace(Y, a2);
    } else {
        require(X.cols() == a2.cols(), "tcn_block: identity skip needs equal channel counts");
        Y = a2;
        kernels::add_inplace(Y, X);
    }
    if (cache) {
        cache->X = X;
        cache->z1 = std::move(z1);
        cache->a1 = std::move(a1);
        cache->z2 = std::move(z2);
    }
}

template <typename T>
void tcn_block_backward(const TcnBlockCache<T>& cache, const TcnBlockParams<T>& p,
                        const Matrix<T>& dY, Matrix<T>& dX, TcnBlockParams<T>& grads) {
    Matrix<T> dz2;
    kernels::elu_backward(cache.z2, dY, dz2);
    Matrix<T> da1;
    kernels::causal_conv1d_backward(cache.a1, p.conv2_W, p.kernel_width, p.dilation, dz2, da1,
                                    grads.conv2_W, grads.conv2_b);
    Matrix<T> dz1;
    kernels::elu_backward(cache.z1, da1, dz1);
    kernels::causal_conv1d_backward(cache.X, p.conv1_W, p.kernel_width, p.dilation, dz1, dX,
                                    grads.conv1_W, grads.conv1_b);
    if (p.has_proj()) {
        Matrix<T> dproj;
        kernels::matmul_tn(cache.X, dY, dproj);
        kernels::add_inplace(grads.proj_W, dproj);
        Matrix<T> dskip;
        kernels::matmul_nt(dY, p.proj_W, dskip);
        kernels::add_inplace(dX, dskip);
    } else {
        kernels::add_inplace(dX, dY);
    }
}

template <typename T>
void tcn_encode(const Matrix<T>& X, const TcnParams<T>& p, Matrix<T>& H,
                TcnCache<T>* cache = nullptr) {
    require(!p.blocks.empty(), "tcn_encode: no blocks");
    if (cache) cache->blocks.resize(p.blocks.size());
    Matrix<T> cur = X;
    for (size_t b = 0; b < p.blocks.size(); ++b) {
        Matrix<T> next;
        tcn_block_forward(cur, p.blocks[b], next, cache ? &cache->blocks[b] : nullptr);
        cur = std::move(next);
    }
    H = std::move(cur);
}

template <typename T>
void tcn_encode_backward(const TcnCache<T>& cache, const TcnParams<T>& p, const Matrix<T>& dH,
                         Matrix<T>& dX, TcnParams<T>& grads) {
    Matrix<T> cur = dH;
    for (size_t b = p.blocks.size(); b-- > 0;) {
        Matrix<T> prev;
        tcn_block_backward(cache.blocks[b], p.blocks[b], cur, prev, grads.blocks[b]);
        cur = std::move(prev);
    }
    dX = std::move(cur);
}

}  // namespace mdd
