#include <benchmark/benchmark.h>

#include "mddformer/kernels.hpp"
#include "mddformer/model.hpp"
#include "mddformer/rng.hpp"

// Serial reference path vs the OpenMP production kernels on model-realistic
// shapes. Both paths produce bit-identical results; this target measures the
// speedup only.

namespace {

using mdd::Matrix;

Matrix<float> random_matrix(int rows, int cols, uint64_t seed) {
    Matrix<float> m(rows, cols);
    mdd::RngStream rng(seed);
    for (long long i = 0; i < static_cast<long long>(m.size()); ++i)
        m.data()[i] = static_cast<float>(rng.uniform(-1.0, 1.0));
    return m;
}

void bench_matmul(benchmark::State& state, bool parallel) {
    mdd::kernels::exec_config().parallel = parallel;
    const Matrix<float> A = random_matrix(256, 512, 1);
    const Matrix<float> B = random_matrix(512, 512, 2);
    Matrix<float> C;
    for (auto _ : state) {
        mdd::kernels::matmul_nn(A, B, C);
        benchmark::DoNotOptimize(C.data());
    }
    mdd::kernels::exec_config().parallel = true;
}

void bench_conv(benchmark::State& state, bool parallel) {
    mdd::kernels::exec_config().parallel = parallel;
    const Matrix<float> X = random_matrix(256, 171, 3);
    const Matrix<float> K = random_matrix(3 * 171, 128, 4);
    const Matrix<float> b = random_matrix(1, 128, 5);
    Matrix<float> Y;
    for (auto _ : state) {
        mdd::kernels::causal_conv1d(X, K, b, 3, 2, Y);
        benchmark::DoNotOptimize(Y.data());
    }
    mdd::kernels::exec_config().parallel = true;
}

void bench_softmax(benchmark::State& state, bool parallel) {
    mdd::kernels::exec_config().parallel = parallel;
    const Matrix<float> L = random_matrix(256, 256, 6);
    Matrix<float> P;
    for (auto _ : state) {
        mdd::kernels::softmax_rows(L, 0.25f, P);
        benchmark::DoNotOptimize(P.data());
    }
    mdd::kernels::exec_config().parallel = true;
}

void bench_model_forward(benchmark::State& state, bool parallel) {
    mdd::kernels::exec_config().parallel = parallel;
    mdd::ModelConfig cfg;  // paper-scale defaults: N=256, d_model=128
    mdd::Mddformer<float> model(cfg);
    model.init(7);
    const Matrix<float> Xa = random_matrix(cfg.n_audio, cfg.d_audio_in, 8);
    const Matrix<float> Xv = random_matrix(cfg.n_visual, cfg.d_visual_in, 9);
    mdd::ModelCache<float> cache;
    for (auto _ : state) {
        model.forward(Xa, Xv, nullptr, cache);
        benchmark::DoNotOptimize(cache.probs.data());
    }
    mdd::kernels::exec_config().parallel = true;
}

}  // namespace

BENCHMARK_CAPTURE(bench_matmul, serial, false);
BENCHMARK_CAPTURE(bench_matmul, openmp, true);
BENCHMARK_CAPTURE(bench_conv, serial, false);
BENCHMARK_CAPTURE(bench_conv, openmp, true);
BENCHMARK_CAPTURE(bench_softmax, serial, false);
BENCHMARK_CAPTURE(bench_softmax, openmp, true);
BENCHMARK_CAPTURE(bench_model_forward, serial, false);
BENCHMARK_CAPTURE(bench_model_forward, openmp, true);

BENCHMARK_MAIN();
