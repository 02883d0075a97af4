#include "mddformer/train.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include "mddformer/classifier.hpp"
#include "mddformer/csv.hpp"
#include "mddformer/rng.hpp"

namespace mdd {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error("train: " + msg); }

int argmax2(double p0, double p1) { return p1 > p0 ? 1 : 0; }

}  // namespace

TrainResult train_model(const Dataset& ds, const FoldAssignment& folds, int fold_id,
                        const ModelConfig& mcfg, const TrainConfig& tcfg, uint64_t seed,
                        const TrainOptions& opts) {
    mcfg.validate();
    tcfg.validate();
    require(folds.k >= 2, "train: fold assignment must have k >= 2");
    require(fold_id >= 0 && fold_id < folds.k, "train: fold_id out of range");

    std::vector<SampleInputs<float>> inputs =
        prepare_inputs<float>(ds, mcfg, opts.zero_audio, opts.zero_visual);

    std::vector<int> train_idx, held_idx;
    for (size_t i = 0; i < inputs.size(); ++i) {
        if (folds.fold_of(inputs[i].sample_id) == fold_id)
            held_idx.push_back(static_cast<int>(i));
        else
            train_idx.push_back(static_cast<int>(i));
    }
    if (train_idx.empty()) fail("training split for fold " + std::to_string(fold_id) + " is empty");

    Mddformer<float> model(mcfg);
    model.init(seed);
    AdamState<float> adam = AdamState<float>::shaped(mcfg);
    ModelParams<float> grads = ModelParams<float>::shaped(mcfg);

    TrainResult result;
    long long global_step = 0;
    for (int epoch = 0; epoch < tcfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        const double lr = cosine_lr(epoch, tcfg);
        std::vector<int> order = train_idx;
        RngStream shuffle_rng(mix_seed(seed, seed_role::kShuffle, static_cast<uint64_t>(epoch)));
        shuffle_rng.shuffle(order.begin(), order.end());

        double loss_sum = 0.0;
        int correct = 0;
        for (size_t start = 0; start < order.size(); start += tcfg.batch_size) {
            const size_t end = std::min(order.size(), start + tcfg.batch_size);
            const int bsz = static_cast<int>(end - start);
            grads.zero();
            for (size_t slot = 0; slot + start < end; ++slot) {
                const SampleInputs<float>& s = inputs[order[start + slot]];
                RngStream drop_rng(mix_seed(seed, seed_role::kDropout,
                                            static_cast<uint64_t>(global_step),
                                            static_cast<uint64_t>(slot)));
                ModelCache<float> cache;
                model.forward(s.Xa, s.Xv, &drop_rng, cache);
                const double p_true =
                    clip_prob(static_cast<double>(cache.probs(0, s.label)));
                const double sample_loss = -std::log(p_true);
                if (!std::isfinite(sample_loss)) {
                    fail("non-finite loss at epoch " + std::to_string(epoch) + " batch " +
                         std::to_string(start / tcfg.batch_size));
                }
                loss_sum += sample_loss;
                correct += argmax2(cache.probs(0, 0), cache.probs(0, 1)) == s.label ? 1 : 0;
                Matrix<float> dlogits;
                bce_dlogits(cache.probs, s.label, bsz, dlogits);
                model.backward(cache, dlogits, grads);
            }
            adam_step(model.params(), grads, adam, lr, tcfg);
            ++global_step;
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.lr = lr;
        rec.train_loss = loss_sum / static_cast<double>(order.size());
        rec.train_accuracy = static_cast<double>(correct) / static_cast<double>(order.size());
        rec.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        result.history.epochs.push_back(rec);
        if (opts.log) {
            *opts.log << "epoch " << epoch << " lr " << rec.lr << " loss " << rec.train_loss
                      << " acc " << rec.train_accuracy << "\n";
        }
    }

    std::vector<SampleInputs<float>> held;
    held.reserve(held_idx.size());
    for (int i : held_idx) held.push_back(inputs[i]);
    result.heldout = evaluate_model(model, held);
    result.params = model.params();
    return result;
}

std::vector<PredictionRecord> evaluate_model(const Mddformer<float>& model,
                                             const std::vector<SampleInputs<float>>& inputs) {
    std::vector<PredictionRecord> out;
    out.reserve(inputs.size());
    for (const SampleInputs<float>& s : inputs) {
        ModelCache<float> cache;
        model.forward(s.Xa, s.Xv, nullptr, cache);
        PredictionRecord rec;
        rec.sample_id = s.sample_id;
        rec.truth = s.label;
        rec.p0 = static_cast<double>(cache.probs(0, 0));
        rec.p1 = static_cast<double>(cache.probs(0, 1));
        rec.predicted = argmax2(rec.p0, rec.p1);
        out.push_back(std::move(rec));
    }
    return out;
}

void write_history(const std::filesystem::path& path, const TrainHistory& history) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail("cannot open '" + path.string() + "' for writing");
    out << "epoch,lr,train_loss,train_accuracy\n";
    for (const EpochRecord& r : history.epochs) {
        out << r.epoch << ',' << csv::format_double(r.lr) << ','
            << csv::format_double(r.train_loss) << ',' << csv::format_double(r.train_accuracy)
            << '\n';
    }
    if (!out.good()) fail("history write failed");
}

void write_predictions(const std::filesystem::path& path,
                       const std::vector<PredictionRecord>& preds) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail("cannot open '" + path.string() + "' for writing");
    out << "sample_id,truth,predicted,p_class0,p_class1\n";
    for (const PredictionRecord& r : preds) {
        out << r.sample_id << ',' << r.truth << ',' << r.predicted << ','
            << csv::format_double(r.p0) << ',' << csv::format_double(r.p1) << '\n';
    }
    if (!out.good()) fail("prediction write failed");
}

std::vector<PredictionRecord> read_predictions(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail("cannot open predictions file '" + path.string() + "'");
    std::string line;
    if (!std::getline(in, line) ||
        std::string(csv::strip_cr(line)) != "sample_id,truth,predicted,p_class0,p_class1") {
        fail("bad predictions header in '" + path.string() + "'");
    }
    std::vector<PredictionRecord> out;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string_view sv = csv::strip_cr(line);
        if (sv.empty()) continue;
        const auto fields = csv::split_fields(sv);
        if (fields.size() != 5) {
            fail("expected 5 fields at line " + std::to_string(line_no) + " of '" + path.string() +
                 "'");
        }
        const auto truth = csv::parse_long(fields[1]);
        const auto predicted = csv::parse_long(fields[2]);
        const auto p0 = csv::parse_finite_double(fields[3]);
        const auto p1 = csv::parse_finite_double(fields[4]);
        if (!truth || !predicted || !p0 || !p1)
            fail("bad value at line " + std::to_string(line_no) + " of '" + path.string() + "'");
        PredictionRecord r;
        r.sample_id = std::string(fields[0]);
        r.truth = static_cast<int>(*truth);
        r.predicted = static_cast<int>(*predicted);
        r.p0 = *p0;
        r.p1 = *p1;
        if ((r.truth != 0 && r.truth != 1) || (r.predicted != 0 && r.predicted != 1))
            fail("labels must be 0/1 at line " + std::to_string(line_no));
        out.push_back(std::move(r));
    }
    return out;
}

GradBatch make_gradcheck_batch(const ModelConfig& cfg, uint64_t seed, int batch_size) {
    require(batch_size >= 1, "gradcheck: batch size must be at least 1");
    GradBatch batch;
    RngStream rng(mix_seed(seed, seed_role::kInit, 0xba7c));
    for (int b = 0; b < batch_size; ++b) {
        Matrix<double> Xa(cfg.n_audio, cfg.d_audio_in);
        Matrix<double> Xv(cfg.n_visual, cfg.d_visual_in);
        for (long long i = 0; i < static_cast<long long>(Xa.size()); ++i)
            Xa.data()[i] = rng.normal();
        for (long long i = 0; i < static_cast<long long>(Xv.size()); ++i)
            Xv.data()[i] = rng.normal();
        batch.Xa.push_back(std::move(Xa));
        batch.Xv.push_back(std::move(Xv));
        batch.labels.push_back(b % 2);
    }
    return batch;
}

double batch_loss(const Mddformer<double>& model, const GradBatch& batch) {
    require(!batch.Xa.empty(), "gradcheck: empty batch");
    double total = 0.0;
    for (size_t i = 0; i < batch.Xa.size(); ++i) {
        ModelCache<double> cache;
        model.forward(batch.Xa[i], batch.Xv[i], nullptr, cache);
        total -= std::log(clip_prob(cache.probs(0, batch.labels[i])));
    }
    const double loss = total / static_cast<double>(batch.Xa.size());
    if (!std::isfinite(loss)) fail("non-finite loss in gradient check");
    return loss;
}

void batch_gradients(const Mddformer<double>& model, const GradBatch& batch,
                     ModelParams<double>& grads) {
    const int bsz = static_cast<int>(batch.Xa.size());
    for (size_t i = 0; i < batch.Xa.size(); ++i) {
        ModelCache<double> cache;
        model.forward(batch.Xa[i], batch.Xv[i], nullptr, cache);
        Matrix<double> dlogits;
        bce_dlogits(cache.probs, batch.labels[i], bsz, dlogits);
        model.backward(cache, dlogits, grads);
    }
}

GradCheckResult compare_with_fd(Mddformer<double>& model, const GradBatch& batch,
                                const ModelParams<double>& grads, double fd_eps,
                                long long max_coords, uint64_t seed) {
    require(fd_eps > 0.0, "gradcheck: fd_eps must be positive");

    struct Slot {
        std::string name;
        Matrix<double>* param;
        const Matrix<double>* grad;
    };
    std::vector<Slot> slots;
    {
        std::vector<std::pair<std::string, Matrix<double>*>> ps;
        visit_params(model.params(), [&ps](const std::string& n, Matrix<double>& m) {
            ps.emplace_back(n, &m);
        });
        std::vector<const Matrix<double>*> gs;
        visit_params(grads, [&gs](const std::string&, const Matrix<double>& m) {
            gs.push_back(&m);
        });
        require(ps.size() == gs.size(), "gradcheck: parameter enumeration mismatch");
        for (size_t i = 0; i < ps.size(); ++i)
            slots.push_back(Slot{ps[i].first, ps[i].second, gs[i]});
    }

    long long total = 0;
    for (const Slot& s : slots) total += static_cast<long long>(s.param->size());

    // Pick coordinates: everything, or a deterministic random subset.
    std::vector<long long> coords;
    if (max_coords <= 0 || max_coords >= total) {
        coords.resize(static_cast<size_t>(total));
        std::iota(coords.begin(), coords.end(), 0LL);
    } else {
        RngStream rng(mix_seed(seed, seed_role::kInit, 0xc03d));
        std::vector<long long> all(static_cast<size_t>(total));
        std::iota(all.begin(), all.end(), 0LL);
        rng.shuffle(all.begin(), all.end());
        coords.assign(all.begin(), all.begin() + static_cast<size_t>(max_coords));
        std::sort(coords.begin(), coords.end());
    }

    GradCheckResult result;
    result.coords_checked = static_cast<long long>(coords.size());
    size_t slot_i = 0;
    long long slot_base = 0;
    for (long long flat : coords) {
        while (flat >= slot_base + static_cast<long long>(slots[slot_i].param->size())) {
            slot_base += static_cast<long long>(slots[slot_i].param->size());
            ++slot_i;
        }
        const long long k = flat - slot_base;
        double* cell = slots[slot_i].param->data() + k;
        const double saved = *cell;
        *cell = saved + fd_eps;
        const double loss_plus = batch_loss(model, batch);
        *cell = saved - fd_eps;
        const double loss_minus = batch_loss(model, batch);
        *cell = saved;
        const double fd = (loss_plus - loss_minus) / (2.0 * fd_eps);
        const double analytic = slots[slot_i].grad->data()[k];
        const double rel =
            std::abs(fd - analytic) / std::max(std::abs(fd) + std::abs(analytic), 1e-6);
        if (rel > result.max_rel_error) {
            result.max_rel_error = rel;
            result.worst_tensor = slots[slot_i].name;
            result.worst_index = k;
        }
    }
    return result;
}

GradCheckResult gradient_check(const ModelConfig& cfg, uint64_t seed, int batch_size,
                               double fd_eps, long long max_coords) {
    cfg.validate();
    Mddformer<double> model(cfg);
    model.init(seed);
    GradBatch batch = make_gradcheck_batch(cfg, seed, batch_size);
    ModelParams<double> grads = ModelParams<double>::shaped(cfg);
    batch_gradients(model, batch, grads);
    return compare_with_fd(model, batch, grads, fd_eps, max_coords, seed);
}

}  // namespace mdd
