#pragma once

#include "mddformer/kernels.hpp"
#include "mddformer/matrix.hpp"
#include "mddformer/rng.hpp"

namespace mdd {

// Inverted dropout. With an RNG the mask holds 0 or 1/(1-rate) per element,
// drawn row-major; without one (eval mode, or rate == 0) the mask is left
// empty and apply/backward are identity.
template <typename T>
void dropout_forward(Matrix<T>& X, double rate, RngStream* rng, Matrix<T>& mask) {
    if (!rng || rate <= 0.0) {
        mask = Matrix<T>();
        return;
    }
    require(rate < 1.0, "dropout: rate must be < 1");
    mask.resize(X.rows(), X.cols());
    const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
    T* m = mask.data();
    T* x = X.data();
    const long long n = X.size();
    for (long long i = 0; i < n; ++i) {
        m[i] = rng->uniform() < rate ? T(0) : keep_scale;
        x[i] *= m[i];
    }
}

template <typename T>
void dropout_backward(const Matrix<T>& mask, Matrix<T>& dX) {
    if (mask.empty()) return;
    kernels::hadamard_inplace(dX, mask);
}

}  // namespace mdd
