#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

#include "mddformer/matrix.hpp"

namespace mdd::kernels {

// Production kernels parallelize over independent output rows with OpenMP.
// Each output element is accumulated by exactly one thread in a fixed index
// order, so results are bit-identical to the serial reference in kernels::ref
// regardless of thread count. Tests assert that equality exactly.

struct ExecConfig {
    bool parallel = true;
    // Minimum multiply-add count before a kernel goes parallel; below this the
    // fork/join overhead dominates.
    long long min_parallel_work = 1 << 15;
};

inline ExecConfig& exec_config() {
    static ExecConfig cfg;
    return cfg;
}

namespace detail {

template <typename F>
inline void for_rows(int n, long long work, F&& body) {
    const ExecConfig& cfg = exec_config();
    if (cfg.parallel && work >= cfg.min_parallel_work && n > 1) {
#pragma omp parallel for schedule(static)
        for (int i = 0; i < n; ++i) body(i);
    } else {
        for (int i = 0; i < n; ++i) body(i);
    }
}

inline void check(bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("kernels: shape mismatch in ") + what);
}

}  // namespace detail

/// C = A * B
template <typename T>
void matmul_nn(const Matrix<T>& A, const Matrix<T>& B, Matrix<T>& C) {
    detail::check(A.cols() == B.rows(), "matmul_nn");
    C.resize(A.rows(), B.cols());
    const int n = A.rows(), k = A.cols(), m = B.cols();
    detail::for_rows(n, 1LL * n * k * m, [&](int i) {
        const T* ai = A.row(i);
        T* ci = C.row(i);
        for (int l = 0; l < k; ++l) {
            const T a = ai[l];
            const T* bl = B.row(l);
            for (int j = 0; j < m; ++j) ci[j] += a * bl[j];
        }
    });
}

/// C = A * B^T
template <typename T>
void matmul_nt(const Matrix<T>& A, const Matrix<T>& B, Matrix<T>& C) {
    detail::check(A.cols() == B.cols(), "matmul_nt");
    C.resize(A.rows(), B.rows());
    const int n = A.rows(), k = A.cols(), m = B.rows();
    detail::for_rows(n, 1LL * n * k * m, [&](int i) {
        const T* ai = A.row(i);
        T* ci = C.row(i);
        for (int j = 0; j < m; ++j) {
            const T* bj = B.row(j);
            T s = T(0);
            for (int l = 0; l < k; ++l) s += ai[l] * bj[l];
            ci[j] = s;
        }
    });
}

/// C = A^T * B
template <typename T>
void matmul_tn(const Matrix<T>& A, const Matrix<T>& B, Matrix<T>& C) {
    detail::check(A.rows() == B.rows(), "matmul_tn");
    C.resize(A.cols(), B.cols());
    const int n = A.cols(), k = A.rows(), m = B.cols();
    detail::for_rows(n, 1LL * n * k * m, [&](int i) {
        T* ci = C.row(i);
        for (int l = 0; l < k; ++l) {
            const T a = A(l, i);
            const T* bl = B.row(l);
            for (int j = 0; j < m; ++j) ci[j] += a * bl[j];
        }
    });
}

/// M += broadcast of a 1xC bias over rows.
template <typename T>
void add_bias_rows(Matrix<T>& M, const Matrix<T>& bias) {
    detail::check(bias.rows() == 1 && bias.cols() == M.cols(), "add_bias_rows");
    detail::for_rows(M.rows(), 1LL * M.rows() * M.cols(), [&](int i) {
        T* mi = M.row(i);
        const T* b = bias.row(0);
        for (int j = 0; j < M.cols(); ++j) mi[j] += b[j];
    });
}

/// P = row-wise softmax(scale * S).
template <typename T>
void softmax_rows(const Matrix<T>& S, T scale, Matrix<T>& P) {
    P.resize(S.rows(), S.cols());
    const int n = S.rows(), m = S.cols();
    detail::for_rows(n, 4LL * n * m, [&](int i) {
        const T* si = S.row(i);
        T* pi = P.row(i);
        T mx = si[0] * scale;
        for (int j = 1; j < m; ++j) mx = std::max(mx, si[j] * scale);
        T sum = T(0);
        for (int j = 0; j < m; ++j) {
            pi[j] = std::exp(si[j] * scale - mx);
            sum += pi[j];
        }
        const T inv = T(1) / sum;
        for (int j = 0; j < m; ++j) pi[j] *= inv;
    });
}

/// dS such that P = softmax(scale*S): dS = scale * P .* (dP - rowdot(dP, P)).
template <typename T>
void softmax_rows_backward(const Matrix<T>& P, const Matrix<T>& dP, T scale, Matrix<T>& dS) {
    detail::check(P.same_shape(dP), "softmax_rows_backward");
    dS.resize(P.rows(), P.cols());
    const int n = P.rows(), m = P.cols();
    detail::for_rows(n, 3LL * n * m, [&](int i) {
        const T* pi = P.row(i);
        const T* dpi = dP.row(i);
        T* dsi = dS.row(i);
        T dot = T(0);
        for (int j = 0; j < m; ++j) dot += dpi[j] * pi[j];
        for (int j = 0; j < m; ++j) dsi[j] = scale * pi[j] * (dpi[j] - dot);
    });
}

template <typename T>
inline T elu_scalar(T x) {
    return x > T(0) ? x : std::expm1(x);
}

template <typename T>
void elu(const Matrix<T>& X, Matrix<T>& Y) {
    Y.resize(X.rows(), X.cols());
    const int n = X.rows(), m = X.cols();
    detail::for_rows(n, 2LL * n * m, [&](int i) {
        const T* xi = X.row(i);
        T* yi = Y.row(i);
        for (int j = 0; j < m; ++j) yi[j] = elu_scalar(xi[j]);
    });
}

/// dX = dY .* elu'(X), with X the pre-activation input.
template <typename T>
void elu_backward(const Matrix<T>& X, const Matrix<T>& dY, Matrix<T>& dX) {
    detail::check(X.same_shape(dY), "elu_backward");
    dX.resize(X.rows(), X.cols());
    const int n = X.rows(), m = X.cols();
    detail::for_rows(n, 2LL * n * m, [&](int i) {
        const T* xi = X.row(i);
        const T* dyi = dY.row(i);
        T* dxi = dX.row(i);
        for (int j = 0; j < m; ++j) dxi[j] = xi[j] > T(0) ? dyi[j] : dyi[j] * std::exp(xi[j]);
    });
}

// Dilated causal 1-D convolution. Kernel tap j of kw looks back
// (kw-1-j)*dilation frames; frames before t=0 are zero, so the output at time
// t depends only on inputs at times <= t. Kernel layout: (kw*Cin) x Cout with
// row j*Cin+ci.

template <typename T>
void causal_conv1d(const Matrix<T>& X, const Matrix<T>& K, const Matrix<T>& bias, int kw,
                   int dilation, Matrix<T>& Y) {
    detail::check(kw >= 1 && dilation >= 1 && K.rows() == kw * X.cols(), "causal_conv1d");
    const int n = X.rows(), cin = X.cols(), cout = K.cols();
    detail::check(bias.rows() == 1 && bias.cols() == cout, "causal_conv1d bias");
    Y.resize(n, cout);
    detail::for_rows(n, 1LL * n * kw * cin * cout, [&](int t) {
        T* yt = Y.row(t);
        for (int j = 0; j < cout; ++j) yt[j] = bias(0, j);
        for (int j = 0; j < kw; ++j) {
            const int src = t - (kw - 1 - j) * dilation;
            if (src < 0) continue;
            const T* xs = X.row(src);
            for (int ci = 0; ci < cin; ++ci) {
                const T x = xs[ci];
                const T* krow = K.row(j * cin + ci);
                for (int co = 0; co < cout; ++co) yt[co] += x * krow[co];
            }
        }
    });
}

/// Backward of causal_conv1d. dX is overwritten; dK and dbias are accumulated.
template <typename T>
void causal_conv1d_backward(const Matrix<T>& X, const Matrix<T>& K, int kw, int dilation,
                            const Matrix<T>& dY, Matrix<T>& dX, Matrix<T>& dK, Matrix<T>& dbias) {
    const int n = X.rows(), cin = X.cols(), cout = K.cols();
    detail::check(dY.rows() == n && dY.cols() == cout, "causal_conv1d_backward");
    detail::check(dK.rows() == kw * cin && dK.cols() == cout, "causal_conv1d_backward dK");
    detail::check(dbias.rows() == 1 && dbias.cols() == cout, "causal_conv1d_backward dbias");
    dX.resize(n, cin);
    detail::for_rows(n, 1LL * n * kw * cin * cout, [&](int s) {
        T* dxs = dX.row(s);
        for (int j = 0; j < kw; ++j) {
            const int t = s + (kw - 1 - j) * dilation;
            if (t >= n) continue;
            const T* dyt = dY.row(t);
            for (int ci = 0; ci < cin; ++ci) {
                const T* krow = K.row(j * cin + ci);
                T s_acc = T(0);
                for (int co = 0; co < cout; ++co) s_acc += krow[co] * dyt[co];
                dxs[ci] += s_acc;
            }
        }
    });
    // Weight/bias accumulation stays serial over t so gradient sums keep one
    // fixed order.
    for (int t = 0; t < n; ++t) {
        const T* dyt = dY.row(t);
        for (int co = 0; co < cout; ++co) dbias(0, co) += dyt[co];
        for (int j = 0; j < kw; ++j) {
            const int src = t - (kw - 1 - j) * dilation;
            if (src < 0) continue;
            const T* xs = X.row(src);
            for (int ci = 0; ci < cin; ++ci) {
                T* dkrow = dK.row(j * cin + ci);
                const T x = xs[ci];
                for (int co = 0; co < cout; ++co) dkrow[co] += x * dyt[co];
            }
        }
    }
}

/// Row-wise layer normalization with learned scale/shift. mean_rstd caches
/// (mean, 1/sqrt(var+eps)) per row for the backward pass.
template <typename T>
void layernorm_rows(const Matrix<T>& X, const Matrix<T>& gamma, const Matrix<T>& beta, T eps,
                    Matrix<T>& Y, Matrix<T>& mean_rstd) {
    detail::check(gamma.rows() == 1 && gamma.cols() == X.cols(), "layernorm_rows gamma");
    detail::check(beta.rows() == 1 && beta.cols() == X.cols(), "layernorm_rows beta");
    const int n = X.rows(), m = X.cols();
    Y.resize(n, m);
    mean_rstd.resize(n, 2);
    detail::for_rows(n, 4LL * n * m, [&](int i) {
        const T* xi = X.row(i);
        T* yi = Y.row(i);
        T mean = T(0);
        for (int j = 0; j < m; ++j) mean += xi[j];
        mean /= T(m);
        T var = T(0);
        for (int j = 0; j < m; ++j) {
            const T d = xi[j] - mean;
            var += d * d;
        }
        var /= T(m);
        const T rstd = T(1) / std::sqrt(var + eps);
        mean_rstd(i, 0) = mean;
        mean_rstd(i, 1) = rstd;
        for (int j = 0; j < m; ++j) yi[j] = gamma(0, j) * ((xi[j] - mean) * rstd) + beta(0, j);
    });
}

template <typename T>
void layernorm_rows_backward(const Matrix<T>& X, const Matrix<T>& gamma,
                             const Matrix<T>& mean_rstd, const Matrix<T>& dY, Matrix<T>& dX,
                             Matrix<T>& dgamma, Matrix<T>& dbeta) {
    const int n = X.rows(), m = X.cols();
    detail::check(dY.rows() == n && dY.cols() == m, "layernorm_rows_backward");
    dX.resize(n, m);
    detail::for_rows(n, 6LL * n * m, [&](int i) {
        const T* xi = X.row(i);
        const T* dyi = dY.row(i);
        T* dxi = dX.row(i);
        const T mean = mean_rstd(i, 0);
        const T rstd = mean_rstd(i, 1);
        T sum_dxhat = T(0), sum_dxhat_xhat = T(0);
        for (int j = 0; j < m; ++j) {
            const T xhat = (xi[j] - mean) * rstd;
            const T dxhat = dyi[j] * gamma(0, j);
            sum_dxhat += dxhat;
            sum_dxhat_xhat += dxhat * xhat;
        }
        const T inv_m = T(1) / T(m);
        for (int j = 0; j < m; ++j) {
            const T xhat = (xi[j] - mean) * rstd;
            const T dxhat = dyi[j] * gamma(0, j);
            dxi[j] = rstd * (dxhat - inv_m * sum_dxhat - xhat * inv_m * sum_dxhat_xhat);
        }
    });
    // Parameter gradients reduced serially over rows.
    for (int i = 0; i < n; ++i) {
        const T* xi = X.row(i);
        const T* dyi = dY.row(i);
        const T mean = mean_rstd(i, 0);
        const T rstd = mean_rstd(i, 1);
        for (int j = 0; j < m; ++j) {
            dgamma(0, j) += dyi[j] * ((xi[j] - mean) * rstd);
            dbeta(0, j) += dyi[j];
        }
    }
}

/// out = column means of X (1 x C).
template <typename T>
void mean_rows(const Matrix<T>& X, Matrix<T>& out) {
    detail::check(X.rows() >= 1, "mean_rows");
    const int n = X.rows(), m = X.cols();
    out.resize(1, m);
    T* o = out.row(0);
    for (int i = 0; i < n; ++i) {
        const T* xi = X.row(i);
        for (int j = 0; j < m; ++j) o[j] += xi[j];
    }
    const T inv = T(1) / T(n);
    for (int j = 0; j < m; ++j) o[j] *= inv;
}

template <typename T>
void add_inplace(Matrix<T>& A, const Matrix<T>& B) {
    detail::check(A.same_shape(B), "add_inplace");
    T* a = A.data();
    const T* b = B.data();
    for (size_t i = 0; i < A.size(); ++i) a[i] += b[i];
}

template <typename T>
void hadamard_inplace(Matrix<T>& A, const Matrix<T>& B) {
    detail::check(A.same_shape(B), "hadamard_inplace");
    T* a = A.data();
    const T* b = B.data();
    for (size_t i = 0; i < A.size(); ++i) a[i] *= b[i];
}

// ---------------------------------------------------------------------------
// Serial reference implementations. Written as plain index loops, no pointer
// tricks, no parallelism. Tests and the benchmark compare the production
// kernels against these.
// ---------------------------------------------------------------------------
namespace ref {

template <typename T>
Matrix<T> matmul_nn(const Matrix<T>& A, const Matrix<T>& B) {
    Matrix<T> C(A.rows(), B.cols());
    for (int i = 0; i < A.rows(); ++i)
        for (int j = 0; j < B.cols(); ++j) {
            T s = T(0);
            for (int l = 0; l < A.cols(); ++l) s += A(i, l) * B(l, j);
            C(i, j) = s;
        }
    return C;
}

template <typename T>
Matrix<T> matmul_nt(const Matrix<T>& A, const Matrix<T>& B) {
    Matrix<T> C(A.rows(), B.rows());
    for (int i = 0; i < A.rows(); ++i)
        for (int j = 0; j < B.rows(); ++j) {
            T s = T(0);
            for (int l = 0; l < A.cols(); ++l) s += A(i, l) * B(j, l);
            C(i, j) = s;
        }
    return C;
}

template <typename T>
Matrix<T> matmul_tn(const Matrix<T>& A, const Matrix<T>& B) {
    Matrix<T> C(A.cols(), B.cols());
    for (int i = 0; i < A.cols(); ++i)
        for (int j = 0; j < B.cols(); ++j) {
            T s = T(0);
            for (int l = 0; l < A.rows(); ++l) s += A(l, i) * B(l, j);
            C(i, j) = s;
        }
    return C;
}

template <typename T>
Matrix<T> softmax_rows(const Matrix<T>& S, T scale) {
    Matrix<T> P(S.rows(), S.cols());
    for (int i = 0; i < S.rows(); ++i) {
        T mx = S(i, 0) * scale;
        for (int j = 1; j < S.cols(); ++j) mx = std::max(mx, S(i, j) * scale);
        T sum = T(0);
        for (int j = 0; j < S.cols(); ++j) {
            P(i, j) = std::exp(S(i, j) * scale - mx);
            sum += P(i, j);
        }
        for (int j = 0; j < S.cols(); ++j) P(i, j) = P(i, j) / sum;
    }
    return P;
}

/// Direct summation over every (tap, input channel) pair, bounds checked.
template <typename T>
Matrix<T> causal_conv1d(const Matrix<T>& X, const Matrix<T>& K, const Matrix<T>& bias, int kw,
                        int dilation) {
    Matrix<T> Y(X.rows(), K.cols());
    for (int t = 0; t < X.rows(); ++t)
        for (int co = 0; co < K.cols(); ++co) {
            T s = bias(0, co);
            for (int j = 0; j < kw; ++j)
                for (int ci = 0; ci < X.cols(); ++ci) {
                    const int src = t - (kw - 1 - j) * dilation;
                    if (src >= 0) s += X(src, ci) * K(j * X.cols() + ci, co);
                }
            Y(t, co) = s;
        }
    return Y;
}

template <typename T>
Matrix<T> layernorm_rows(const Matrix<T>& X, const Matrix<T>& gamma, const Matrix<T>& beta,
                         T eps) {
    Matrix<T> Y(X.rows(), X.cols());
    const int m = X.cols();
    for (int i = 0; i < X.rows(); ++i) {
        T mean = T(0);
        for (int j = 0; j < m; ++j) mean += X(i, j);
        mean /= T(m);
        T var = T(0);
        for (int j = 0; j < m; ++j) {
            const T d = X(i, j) - mean;
            var += d * d;
        }
        var /= T(m);
        const T rstd = T(1) / std::sqrt(var + eps);
        for (int j = 0; j < m; ++j) Y(i, j) = gamma(0, j) * ((X(i, j) - mean) * rstd) + beta(0, j);
    }
    return Y;
}

}  // namespace ref

}  // namespace mdd::kernels
