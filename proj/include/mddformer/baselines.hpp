#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mddformer/ingest.hpp"
#include "mddformer/train.hpp"

namespace mdd {

// Classical reference models on pooled representations: each sample becomes
// the concatenation of its per-modality time-means (D_a + D_v entries).

struct PooledVector {
    std::string sample_id;
    std::vector<double> x;
    int label = 0;
};

std::vector<PooledVector> pool_dataset(const Dataset& ds);

/// Per-dimension z-score fitted on the training split only. Dimensions with
/// zero variance standardize to 0.
struct Standardizer {
    std::vector<double> mean, stddev;

    void fit(const std::vector<PooledVector>& train);
    std::vector<double> apply(const std::vector<double>& x) const;
};

/// Majority label among the k nearest by Euclidean distance. Distance ties
/// break toward the lower sample index; vote ties toward the smaller summed
/// distance, then toward label 0.
int knn_predict(const std::vector<PooledVector>& train, const std::vector<double>& query, int k);

/// Vote share for class 1 among the k nearest (for prediction records).
double knn_vote_share(const std::vector<PooledVector>& train, const std::vector<double>& query,
                      int k);

struct LogregModel {
    std::vector<double> w;
    double b = 0.0;
};

struct LogregConfig {
    double lr = 0.1;
    int epochs = 500;
    double lambda = 1e-4;  // L2 strength; bias unregularized
};

/// Full-batch gradient descent on L2-regularized logistic loss from zero
/// initialization (deterministic; the seed parameter is accepted for
/// interface uniformity but never consumed). Optionally records the loss
/// after each iteration.
LogregModel logreg_fit(const std::vector<PooledVector>& train, const LogregConfig& cfg,
                       uint64_t seed, std::vector<double>* loss_trace = nullptr);

/// Probability of class 1: sigmoid of the affine score.
double logreg_predict(const LogregModel& model, const std::vector<double>& query);

/// Cross-validated baseline evaluation sharing MDDformer's prediction record
/// format. model_name is "knn" or "logreg".
std::vector<std::vector<PredictionRecord>> baseline_cv(const Dataset& ds,
                                                       const FoldAssignment& folds,
                                                       const std::string& model_name, int knn_k,
                                                       const LogregConfig& logreg_cfg,
                                                       uint64_t seed);

}  // namespace mdd
