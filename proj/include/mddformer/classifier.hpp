#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "mddformer/dropout.hpp"
#include "mddformer/kernels.hpp"
#include "mddformer/matrix.hpp"
#include "mddformer/rng.hpp"

namespace mdd {

template <typename T>
struct HeadParams {
    Matrix<T> fc1_W;  // 2 d_model x d_hidden
    Matrix<T> fc1_b;  // 1 x d_hidden
    Matrix<T> fc2_W;  // d_hidden x 2
    Matrix<T> fc2_b;  // 1 x 2
};

template <typename T>
struct HeadCache {
    int seq_len = 0;
    Matrix<T> z0;     // pooled row after input dropout
    Matrix<T> drop0;  // mask on the pooled row
    Matrix<T> u1;     // fc1 pre-activation
    Matrix<T> a1;     // post-ELU, post-dropout
    Matrix<T> drop1;
    Matrix<T> probs;  // 1 x 2 softmax output
};

// Mean-pool over time: n x d -> 1 x d.
template <typename T>
void pool_sequence(const Matrix<T>& Fn, Matrix<T>& pooled) {
    kernels::mean_rows(Fn, pooled);
}

// pooled -> dropout -> FC -> ELU -> dropout -> FC -> softmax.
template <typename T>
void classify(const Matrix<T>& pooled, const HeadParams<T>& p, double dropout_rate,
              RngStream* rng, Matrix<T>& probs, HeadCache<T>* cache = nullptr) {
    HeadCache<T> local;
    HeadCache<T>& c = cache ? *cache : local;
    c.z0 = pooled;
    dropout_forward(c.z0, dropout_rate, rng, c.drop0);
    kernels::matmul_nn(c.z0, p.fc1_W, c.u1);
    kernels::add_bias_rows(c.u1, p.fc1_b);
    kernels::elu(c.u1, c.a1);
    dropout_forward(c.a1, dropout_rate, rng, c.drop1);
    Matrix<T> logits;
    kernels::matmul_nn(c.a1, p.fc2_W, logits);
    kernels::add_bias_rows(logits, p.fc2_b);
    kernels::softmax_rows(logits, T(1), c.probs);
    probs = c.probs;
}

// Backward from dlogits (1 x 2, already including the softmax+loss fusion)
// to the gradient on the pooled row.
template <typename T>
void classify_backward(const HeadCache<T>& c, const HeadParams<T>& p, const Matrix<T>& dlogits,
                       Matrix<T>& dpooled, HeadParams<T>& grads) {
    Matrix<T> g;
    kernels::matmul_tn(c.a1, dlogits, g);
    kernels::add_inplace(grads.fc2_W, g);
    for (int j = 0; j < dlogits.cols(); ++j) grads.fc2_b(0, j) += dlogits(0, j);
    Matrix<T> da1;
    kernels::matmul_nt(dlogits, p.fc2_W, da1);
    dropout_backward(c.drop1, da1);
    Matrix<T> du1;
    kernels::elu_backward(c.u1, da1, du1);
    kernels::matmul_tn(c.z0, du1, g);
    kernels::add_inplace(grads.fc1_W, g);
    for (int j = 0; j < du1.cols(); ++j) grads.fc1_b(0, j) += du1(0, j);
    kernels::matmul_nt(du1, p.fc1_W, dpooled);
    dropout_backward(c.drop0, dpooled);
}

// Spread a pooled-row gradient back over the sequence rows (mean pool).
template <typename T>
void pool_sequence_backward(const Matrix<T>& dpooled, int seq_len, Matrix<T>& dFn) {
    require(seq_len > 0, "pool_sequence_backward: empty sequence");
    dFn.resize(seq_len, dpooled.cols());
    const T inv = T(1) / static_cast<T>(seq_len);
    for (int i = 0; i < seq_len; ++i) {
        T* d = dFn.row(i);
        const T* s = dpooled.row(0);
        for (int j = 0; j < dpooled.cols(); ++j) d[j] = s[j] * inv;
    }
}

inline double clip_prob(double p) { return std::min(1.0 - 1e-7, std::max(1e-7, p)); }

// Mean cross-entropy over a batch of two-class softmax outputs, accumulated
// in double regardless of the working precision.
template <typename T>
double bce_loss(const std::vector<Matrix<T>>& probs, const std::vector<int>& labels) {
    require(probs.size() == labels.size(), "bce_loss: probs/labels size mismatch");
    require(!probs.empty(), "bce_loss: empty batch");
    double total = 0.0;
    for (size_t i = 0; i < probs.size(); ++i) {
        require(labels[i] == 0 || labels[i] == 1, "bce_loss: label must be 0 or 1");
        require(probs[i].rows() == 1 && probs[i].cols() == 2, "bce_loss: probs must be 1x2");
        total -= std::log(clip_prob(static_cast<double>(probs[i](0, labels[i]))));
    }
    return total / static_cast<double>(probs.size());
}

// Gradient of the mean loss w.r.t. the logits of one sample: (p - onehot) / B.
template <typename T>
void bce_dlogits(const Matrix<T>& probs, int label, int batch_size, Matrix<T>& dlogits) {
    require(batch_size > 0, "bce_dlogits: batch size must be positive");
    dlogits.resize(1, 2);
    const T inv = T(1) / static_cast<T>(batch_size);
    dlogits(0, 0) = (probs(0, 0) - (label == 0 ? T(1) : T(0))) * inv;
    dlogits(0, 1) = (probs(0, 1) - (label == 1 ? T(1) : T(0))) * inv;
}

}  // namespace mdd
