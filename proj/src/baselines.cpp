#include "mddformer/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mdd {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error("baselines: " + msg); }

double euclidean(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) fail("vector width mismatch");
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return std::sqrt(s);
}

/// log(1 + exp(t)) without overflow.
double softplus(double t) { return t > 30.0 ? t : std::log1p(std::exp(t)); }

double sigmoid(double s) {
    if (s >= 0.0) return 1.0 / (1.0 + std::exp(-s));
    const double e = std::exp(s);
    return e / (1.0 + e);
}

struct Neighbor {
    double dist;
    int index;
    int label;
};

std::vector<Neighbor> k_nearest(const std::vector<PooledVector>& train,
                                const std::vector<double>& query, int k) {
    if (train.empty()) fail("knn: empty training set");
    if (k < 1 || k > static_cast<int>(train.size()))
        fail("knn: k must be in [1, |train|]");
    std::vector<Neighbor> all;
    all.reserve(train.size());
    for (size_t i = 0; i < train.size(); ++i)
        all.push_back(Neighbor{euclidean(train[i].x, query), static_cast<int>(i), train[i].label});
    std::sort(all.begin(), all.end(), [](const Neighbor& a, const Neighbor& b) {
        if (a.dist != b.dist) return a.dist < b.dist;
        return a.index < b.index;  // distance tie: lower sample index first
    });
    all.resize(k);
    return all;
}

}  // namespace

std::vector<PooledVector> pool_dataset(const Dataset& ds) {
    if (ds.samples.empty()) fail("empty dataset");
    std::vector<PooledVector> out;
    out.reserve(ds.samples.size());
    for (const LabeledSample& s : ds.samples) {
        PooledVector v;
        v.sample_id = s.sample_id;
        v.label = s.label;
        v.x.reserve(s.audio.data.cols() + s.visual.data.cols());
        for (const Matrix<double>* m : {&s.audio.data, &s.visual.data}) {
            for (int j = 0; j < m->cols(); ++j) {
                double mean = 0.0;
                for (int i = 0; i < m->rows(); ++i) mean += (*m)(i, j);
                v.x.push_back(mean / static_cast<double>(m->rows()));
            }
        }
        out.push_back(std::move(v));
    }
    return out;
}

void Standardizer::fit(const std::vector<PooledVector>& train) {
    if (train.empty()) fail("standardizer: empty training set");
    const size_t d = train.front().x.size();
    mean.assign(d, 0.0);
    stddev.assign(d, 0.0);
    for (const PooledVector& v : train) {
        if (v.x.size() != d) fail("standardizer: inconsistent widths");
        for (size_t j = 0; j < d; ++j) mean[j] += v.x[j];
    }
    for (size_t j = 0; j < d; ++j) mean[j] /= static_cast<double>(train.size());
    for (const PooledVector& v : train)
        for (size_t j = 0; j < d; ++j) {
            const double c = v.x[j] - mean[j];
            stddev[j] += c * c;
        }
    for (size_t j = 0; j < d; ++j)
        stddev[j] = std::sqrt(stddev[j] / static_cast<double>(train.size()));
}

std::vector<double> Standardizer::apply(const std::vector<double>& x) const {
    if (x.size() != mean.size()) fail("standardizer: width mismatch");
    std::vector<double> out(x.size());
    for (size_t j = 0; j < x.size(); ++j)
        out[j] = stddev[j] > 0.0 ? (x[j] - mean[j]) / stddev[j] : 0.0;
    return out;
}

int knn_predict(const std::vector<PooledVector>& train, const std::vector<double>& query, int k) {
    const std::vector<Neighbor> near = k_nearest(train, query, k);
    int votes1 = 0;
    double dist0 = 0.0, dist1 = 0.0;
    for (const Neighbor& n : near) {
        if (n.label == 1) {
            ++votes1;
            dist1 += n.dist;
        } else {
            dist0 += n.dist;
        }
    }
    const int votes0 = k - votes1;
    if (votes1 != votes0) return votes1 > votes0 ? 1 : 0;
    if (dist1 != dist0) return dist1 < dist0 ? 1 : 0;  // vote tie: closer class wins
    return 0;
}

double knn_vote_share(const std::vector<PooledVector>& train, const std::vector<double>& query,
                      int k) {
    const std::vector<Neighbor> near = k_nearest(train, query, k);
    int votes1 = 0;
    for (const Neighbor& n : near) votes1 += n.label == 1 ? 1 : 0;
    return static_cast<double>(votes1) / static_cast<double>(k);
}

LogregModel logreg_fit(const std::vector<PooledVector>& train, const LogregConfig& cfg,
                       uint64_t /*seed*/, std::vector<double>* loss_trace) {
    if (train.empty()) fail("logreg: empty training set");
    int class_count[2] = {0, 0};
    for (const PooledVector& v : train) {
        if (v.label != 0 && v.label != 1) fail("logreg: labels must be 0 or 1");
        class_count[v.label] += 1;
    }
    if (class_count[0] == 0 || class_count[1] == 0)
        fail("logreg: training set contains a single class");
    if (cfg.lr <= 0.0 || cfg.epochs < 1 || cfg.lambda < 0.0) fail("logreg: bad config");

    const size_t d = train.front().x.size();
    const double n = static_cast<double>(train.size());
    LogregModel model;
    model.w.assign(d, 0.0);
    std::vector<double> gw(d);
    for (int it = 0; it < cfg.epochs; ++it) {
        std::fill(gw.begin(), gw.end(), 0.0);
        double gb = 0.0;
        for (const PooledVector& v : train) {
            if (v.x.size() != d) fail("logreg: inconsistent widths");
            double s = model.b;
            for (size_t j = 0; j < d; ++j) s += model.w[j] * v.x[j];
            const double err = sigmoid(s) - static_cast<double>(v.label);
            for (size_t j = 0; j < d; ++j) gw[j] += err * v.x[j];
            gb += err;
        }
        for (size_t j = 0; j < d; ++j)
            model.w[j] -= cfg.lr * (gw[j] / n + cfg.lambda * model.w[j]);
        model.b -= cfg.lr * gb / n;

        if (loss_trace) {
            double loss = 0.0;
            for (const PooledVector& v : train) {
                double s = model.b;
                for (size_t j = 0; j < d; ++j) s += model.w[j] * v.x[j];
                // -log p(y): softplus(-z) with z the label-signed score
                loss += softplus(v.label == 1 ? -s : s);
            }
            double reg = 0.0;
            for (double wj : model.w) reg += wj * wj;
            loss_trace->push_back(loss / n + 0.5 * cfg.lambda * reg);
        }
    }
    return model;
}

double logreg_predict(const LogregModel& model, const std::vector<double>& query) {
    if (query.size() != model.w.size()) fail("logreg: query width mismatch");
    double s = model.b;
    for (size_t j = 0; j < query.size(); ++j) s += model.w[j] * query[j];
    return sigmoid(s);
}

std::vector<std::vector<PredictionRecord>> baseline_cv(const Dataset& ds,
                                                       const FoldAssignment& folds,
                                                       const std::string& model_name, int knn_k,
                                                       const LogregConfig& logreg_cfg,
                                                       uint64_t seed) {
    if (model_name != "knn" && model_name != "logreg")
        fail("unknown baseline '" + model_name + "'");
    const std::vector<PooledVector> pooled = pool_dataset(ds);

    std::vector<std::vector<PredictionRecord>> fold_preds(folds.k);
    for (int fold = 0; fold < folds.k; ++fold) {
        std::vector<PooledVector> train;
        std::vector<const PooledVector*> held;
        for (const PooledVector& v : pooled) {
            if (folds.fold_of(v.sample_id) == fold)
                held.push_back(&v);
            else
                train.push_back(v);
        }
        if (train.empty() || held.empty())
            fail("fold " + std::to_string(fold) + " leaves an empty split");

        Standardizer standardizer;
        standardizer.fit(train);
        for (PooledVector& v : train) v.x = standardizer.apply(v.x);

        LogregModel logreg;
        if (model_name == "logreg") logreg = logreg_fit(train, logreg_cfg, seed);

        for (const PooledVector* v : held) {
            const std::vector<double> q = standardizer.apply(v->x);
            PredictionRecord rec;
            rec.sample_id = v->sample_id;
            rec.truth = v->label;
            if (model_name == "knn") {
                rec.predicted = knn_predict(train, q, knn_k);
                rec.p1 = knn_vote_share(train, q, knn_k);
                rec.p0 = 1.0 - rec.p1;
            } else {
                rec.p1 = logreg_predict(logreg, q);
                rec.p0 = 1.0 - rec.p1;
                rec.predicted = rec.p1 > 0.5 ? 1 : 0;
            }
            fold_preds[fold].push_back(std::move(rec));
        }
    }
    return fold_preds;
}

}  // namespace mdd
