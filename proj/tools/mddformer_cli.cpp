#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "mddformer/baselines.hpp"
#include "mddformer/checkpoint.hpp"
#include "mddformer/hash.hpp"
#include "mddformer/ingest.hpp"
#include "mddformer/kernels.hpp"
#include "mddformer/metrics.hpp"
#include "mddformer/model.hpp"
#include "mddformer/synth.hpp"
#include "mddformer/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Options shared by the model-training commands.
struct CommonModelArgs {
    std::string config_path;
    std::string data_path;
    std::string out_dir;
    uint64_t seed = 0;
    int folds = 10;
    mdd::ModelConfig model;
    mdd::TrainConfig train;
    std::string zero_modality = "none";
};

json load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cli: cannot open config file '" + path + "'");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw std::runtime_error("cli: bad JSON in '" + path + "': " + e.what());
    }
    return j;
}

/// Layer the config sources: struct defaults, then the config file, then any
/// explicitly passed flags (already written into args by CLI11).
void resolve_configs(CLI::App* cmd, CommonModelArgs& args) {
    if (args.config_path.empty()) return;
    const json j = load_config_file(args.config_path);
    mdd::ModelConfig from_file_model = j.value("model", json::object()).get<mdd::ModelConfig>();
    mdd::TrainConfig from_file_train = j.value("train", json::object()).get<mdd::TrainConfig>();

    // Flags the user typed win over the file; everything else comes from it.
    const mdd::ModelConfig flag_model = args.model;
    const mdd::TrainConfig flag_train = args.train;
    args.model = from_file_model;
    args.train = from_file_train;
    auto passed = [cmd](const std::string& flag) { return cmd->count(flag) > 0; };
    if (passed("--seq-len")) {
        args.model.n_audio = flag_model.n_audio;
        args.model.n_visual = flag_model.n_visual;
    }
    if (passed("--d-audio")) args.model.d_audio_in = flag_model.d_audio_in;
    if (passed("--d-visual")) args.model.d_visual_in = flag_model.d_visual_in;
    if (passed("--d-model")) args.model.d_model = flag_model.d_model;
    if (passed("--heads")) args.model.n_heads = flag_model.n_heads;
    if (passed("--d-ff")) args.model.d_ff = flag_model.d_ff;
    if (passed("--d-hidden")) args.model.d_hidden_cls = flag_model.d_hidden_cls;
    if (passed("--tcn-blocks")) args.model.tcn_blocks = flag_model.tcn_blocks;
    if (passed("--tcn-kernel")) args.model.tcn_kernel = flag_model.tcn_kernel;
    if (passed("--dropout")) args.model.dropout = flag_model.dropout;
    if (passed("--logit-fusion")) args.model.logit_fusion = flag_model.logit_fusion;
    if (passed("--epochs")) args.train.epochs = flag_train.epochs;
    if (passed("--batch-size")) args.train.batch_size = flag_train.batch_size;
    if (passed("--lr-max")) args.train.lr_max = flag_train.lr_max;
    if (passed("--lr-min")) args.train.lr_min = flag_train.lr_min;
}

/// Register the model/train override flags on a subcommand.
void add_model_flags(CLI::App* cmd, CommonModelArgs& args) {
    cmd->add_option("--config", args.config_path, "JSON config file with model/train sections")
        ->check(CLI::ExistingFile);
    cmd->add_option_function<int>(
        "--seq-len",
        [&args](const int& v) {
            args.model.n_audio = v;
            args.model.n_visual = v;
        },
        "Frames per sequence after resampling (both modalities)");
    cmd->add_option("--d-audio", args.model.d_audio_in, "Audio feature width");
    cmd->add_option("--d-visual", args.model.d_visual_in, "Visual feature width");
    cmd->add_option("--d-model", args.model.d_model, "Shared hidden width");
    cmd->add_option("--heads", args.model.n_heads, "Attention heads");
    cmd->add_option("--d-ff", args.model.d_ff, "Feed-forward width");
    cmd->add_option("--d-hidden", args.model.d_hidden_cls, "Classifier hidden width");
    cmd->add_option("--tcn-blocks", args.model.tcn_blocks, "Visual TCN residual blocks");
    cmd->add_option("--tcn-kernel", args.model.tcn_kernel, "TCN kernel width");
    cmd->add_option("--dropout", args.model.dropout, "Dropout rate");
    cmd->add_option("--logit-fusion", args.model.logit_fusion,
                    "Fusion of the two attention score matrices: average|concat_reduce")
        ->transform(CLI::CheckedTransformer(
            std::map<std::string, mdd::LogitFusion>{
                {"average", mdd::LogitFusion::kAverage},
                {"concat_reduce", mdd::LogitFusion::kConcatReduce}},
            CLI::ignore_case));
    cmd->add_option("--epochs", args.train.epochs, "Training epochs");
    cmd->add_option("--batch-size", args.train.batch_size, "Mini-batch size");
    cmd->add_option("--lr-max", args.train.lr_max, "Peak learning rate");
    cmd->add_option("--lr-min", args.train.lr_min, "Final learning rate");
    cmd->add_option("--zero-modality", args.zero_modality,
                    "Ablation: feed zeros for one modality (none|audio|visual)")
        ->check(CLI::IsMember({"none", "audio", "visual"}));
}

json run_info_json(const std::string& command, uint64_t seed, const json& config) {
    json j;
    j["command"] = command;
    j["seed"] = seed;
    j["config"] = config;
    j["config_hash"] = mdd::hash_hex(mdd::fnv1a64(config.dump()));
    return j;
}

/// Hash every written artifact (relative paths) into run_manifest.json.
void write_run_manifest(const fs::path& out_dir, const json& run_info,
                        const std::vector<fs::path>& files) {
    json outputs = json::object();
    for (const fs::path& f : files) {
        const fs::path rel = f.lexically_relative(out_dir);
        outputs[rel.generic_string()] = mdd::hash_hex(mdd::hash_file(f));
    }
    json j = run_info;
    j["outputs"] = outputs;
    std::ofstream out(out_dir / "run_manifest.json", std::ios::binary);
    if (!out) throw std::runtime_error("cli: cannot write run manifest");
    out << j.dump(2) << "\n";
}

void ensure_out_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw std::runtime_error("cli: cannot create output directory '" + dir + "'");
}

mdd::Dataset load_dataset(const CommonModelArgs& args) {
    return mdd::build_dataset(args.data_path, mdd::audio_config_for_dim(args.model.d_audio_in),
                              mdd::visual_config_for_dim(args.model.d_visual_in),
                              args.model.n_audio, args.model.n_visual);
}

struct FoldRunOutputs {
    std::vector<fs::path> files;
    std::vector<mdd::PredictionRecord> heldout;
};

FoldRunOutputs run_one_fold(const mdd::Dataset& ds, const mdd::FoldAssignment& folds, int fold,
                            const CommonModelArgs& args) {
    mdd::TrainOptions opts;
    opts.zero_audio = args.zero_modality == "audio";
    opts.zero_visual = args.zero_modality == "visual";
    opts.log = &std::cerr;
    mdd::TrainResult result =
        mdd::train_model(ds, folds, fold, args.model, args.train, args.seed, opts);

    const fs::path fold_dir = fs::path(args.out_dir) / ("fold_" + std::to_string(fold));
    ensure_out_dir(fold_dir.string());
    FoldRunOutputs out;
    json meta;
    meta["seed"] = args.seed;
    meta["fold"] = fold;
    meta["epochs"] = args.train.epochs;
    const fs::path ckpt = fold_dir / "checkpoint.ckpt";
    mdd::save_checkpoint(ckpt, args.model, result.params, meta);
    const fs::path hist = fold_dir / "history.csv";
    mdd::write_history(hist, result.history);
    const fs::path preds = fold_dir / "predictions.csv";
    mdd::write_predictions(preds, result.heldout);
    out.files = {ckpt, hist, preds};
    out.heldout = std::move(result.heldout);
    return out;
}

int cmd_synth(const mdd::SynthSpec& spec, uint64_t seed, const std::string& out_dir) {
    ensure_out_dir(out_dir);
    mdd::write_synthetic_dataset(spec, seed, out_dir);

    json config;
    config["n_samples"] = spec.n_samples;
    config["n_frames"] = spec.n_frames;
    config["d_audio"] = spec.d_audio;
    config["d_visual"] = spec.d_visual;
    config["separation_audio"] = spec.separation_audio;
    config["separation_visual"] = spec.separation_visual;
    config["noise_sigma"] = spec.noise_sigma;

    std::vector<fs::path> files = {fs::path(out_dir) / "manifest.csv"};
    for (const auto& entry : fs::directory_iterator(fs::path(out_dir) / "features"))
        files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    write_run_manifest(out_dir, run_info_json("synth", seed, config), files);

    std::cout << "synth seed=" << seed << " samples=" << spec.n_samples << " out=" << out_dir
              << "\n";
    return 0;
}

int cmd_train(CommonModelArgs& args, const std::string& fold_arg) {
    ensure_out_dir(args.out_dir);
    args.model.validate();
    args.train.validate();
    const mdd::Dataset ds = load_dataset(args);
    const mdd::FoldAssignment folds = mdd::stratified_kfold(ds, args.folds, args.seed);

    std::vector<int> fold_ids;
    if (fold_arg == "all") {
        for (int f = 0; f < args.folds; ++f) fold_ids.push_back(f);
    } else {
        int fold = 0;
        try {
            size_t pos = 0;
            fold = std::stoi(fold_arg, &pos);
            if (pos != fold_arg.size()) throw std::invalid_argument(fold_arg);
        } catch (const std::exception&) {
            throw std::runtime_error("cli: --fold must be an integer or 'all', got '" + fold_arg +
                                     "'");
        }
        fold_ids.push_back(fold);
    }

    json config;
    config["model"] = args.model;
    config["train"] = args.train;
    config["folds"] = args.folds;
    config["zero_modality"] = args.zero_modality;
    const json run_info =
        run_info_json(fold_ids.size() > 1 ? "cv" : "train", args.seed, config);

    std::vector<fs::path> files;
    std::vector<std::vector<mdd::PredictionRecord>> fold_preds;
    for (int fold : fold_ids) {
        FoldRunOutputs out = run_one_fold(ds, folds, fold, args);
        files.insert(files.end(), out.files.begin(), out.files.end());
        fold_preds.push_back(std::move(out.heldout));
    }

    const mdd::CvSummary summary = mdd::summarize_cv(fold_preds);
    const fs::path report = fs::path(args.out_dir) / "report.json";
    mdd::write_report_json(report, run_info, summary);
    files.push_back(report);
    const fs::path confusion = fs::path(args.out_dir) / "confusion_pooled.csv";
    mdd::write_confusion_csv(confusion, summary.pooled_counts);
    files.push_back(confusion);
    std::sort(files.begin(), files.end());
    write_run_manifest(args.out_dir, run_info, files);

    if (fold_ids.size() > 1) {
        std::cout << "cv seed=" << args.seed << " folds=" << args.folds
                  << " pooled_accuracy=" << summary.pooled_binary.accuracy
                  << " out=" << args.out_dir << "\n";
    } else {
        std::cout << "train seed=" << args.seed << " fold=" << fold_ids.front()
                  << " heldout_accuracy=" << summary.pooled_binary.accuracy
                  << " out=" << args.out_dir << "\n";
    }
    return 0;
}

int cmd_eval_baseline(CommonModelArgs& args, const std::string& model_name, int knn_k,
                      const mdd::LogregConfig& logreg_cfg) {
    ensure_out_dir(args.out_dir);
    const mdd::Dataset ds = mdd::build_dataset(
        args.data_path, mdd::audio_config_for_dim(args.model.d_audio_in),
        mdd::visual_config_for_dim(args.model.d_visual_in), 0, 0);  // 0 = keep raw lengths
    const mdd::FoldAssignment folds = mdd::stratified_kfold(ds, args.folds, args.seed);
    const auto fold_preds = mdd::baseline_cv(ds, folds, model_name, knn_k, logreg_cfg, args.seed);

    json config;
    config["model"] = model_name;
    config["folds"] = args.folds;
    if (model_name == "knn") config["k"] = knn_k;
    if (model_name == "logreg") {
        config["lr"] = logreg_cfg.lr;
        config["epochs"] = logreg_cfg.epochs;
        config["lambda"] = logreg_cfg.lambda;
    }
    const json run_info = run_info_json("eval", args.seed, config);

    std::vector<fs::path> files;
    for (size_t f = 0; f < fold_preds.size(); ++f) {
        const fs::path dir = fs::path(args.out_dir) / ("fold_" + std::to_string(f));
        ensure_out_dir(dir.string());
        const fs::path p = dir / "predictions.csv";
        mdd::write_predictions(p, fold_preds[f]);
        files.push_back(p);
    }
    const mdd::CvSummary summary = mdd::summarize_cv(fold_preds);
    const fs::path report = fs::path(args.out_dir) / "report.json";
    mdd::write_report_json(report, run_info, summary);
    files.push_back(report);
    const fs::path confusion = fs::path(args.out_dir) / "confusion_pooled.csv";
    mdd::write_confusion_csv(confusion, summary.pooled_counts);
    files.push_back(confusion);
    std::sort(files.begin(), files.end());
    write_run_manifest(args.out_dir, run_info, files);

    std::cout << "eval model=" << model_name << " seed=" << args.seed
              << " accuracy=" << summary.pooled_binary.accuracy << " out=" << args.out_dir << "\n";
    return 0;
}

int cmd_eval_mddformer(CommonModelArgs& args, const std::string& checkpoint_path, int fold) {
    ensure_out_dir(args.out_dir);
    mdd::Checkpoint ckpt = mdd::load_checkpoint(checkpoint_path);
    args.model = ckpt.config;  // the checkpoint's architecture wins
    const mdd::Dataset ds = load_dataset(args);

    mdd::Mddformer<float> model(ckpt.config);
    model.params() = std::move(ckpt.params);

    std::vector<mdd::SampleInputs<float>> inputs = mdd::prepare_inputs<float>(
        ds, ckpt.config, args.zero_modality == "audio", args.zero_modality == "visual");
    if (fold >= 0) {
        const mdd::FoldAssignment folds = mdd::stratified_kfold(ds, args.folds, args.seed);
        std::vector<mdd::SampleInputs<float>> held;
        for (auto& in : inputs)
            if (folds.fold_of(in.sample_id) == fold) held.push_back(std::move(in));
        inputs = std::move(held);
        if (inputs.empty()) throw std::runtime_error("cli: fold " + std::to_string(fold) +
                                                     " holds no samples");
    }
    const std::vector<mdd::PredictionRecord> preds = mdd::evaluate_model(model, inputs);

    json config;
    config["model"] = "mddformer";
    config["checkpoint"] = fs::path(checkpoint_path).filename().string();
    config["checkpoint_config"] = ckpt.config;
    config["fold"] = fold;
    config["zero_modality"] = args.zero_modality;
    const json run_info = run_info_json("eval", args.seed, config);

    const fs::path pred_path = fs::path(args.out_dir) / "predictions.csv";
    mdd::write_predictions(pred_path, preds);
    const mdd::CvSummary summary = mdd::summarize_cv({preds});
    const fs::path report = fs::path(args.out_dir) / "report.json";
    mdd::write_report_json(report, run_info, summary);
    const fs::path confusion = fs::path(args.out_dir) / "confusion_pooled.csv";
    mdd::write_confusion_csv(confusion, summary.pooled_counts);
    std::vector<fs::path> files = {pred_path, report, confusion};
    std::sort(files.begin(), files.end());
    write_run_manifest(args.out_dir, run_info, files);

    std::cout << "eval model=mddformer seed=" << args.seed
              << " accuracy=" << summary.pooled_binary.accuracy << " out=" << args.out_dir << "\n";
    return 0;
}

int cmd_gradcheck(const mdd::ModelConfig& cfg, uint64_t seed, int batch, double eps,
                  long long max_coords, const std::string& out_dir) {
    const mdd::GradCheckResult result = mdd::gradient_check(cfg, seed, batch, eps, max_coords);
    const bool pass = result.max_rel_error < 1e-4;

    if (!out_dir.empty()) {
        ensure_out_dir(out_dir);
        json config;
        config["model"] = cfg;
        config["batch"] = batch;
        config["fd_eps"] = eps;
        config["max_coords"] = max_coords;
        json j = run_info_json("gradcheck", seed, config);
        j["max_rel_error"] = result.max_rel_error;
        j["coords_checked"] = result.coords_checked;
        j["worst_tensor"] = result.worst_tensor;
        j["pass"] = pass;
        const fs::path path = fs::path(out_dir) / "gradcheck.json";
        std::ofstream out(path, std::ios::binary);
        if (!out) throw std::runtime_error("cli: cannot write gradcheck.json");
        out << j.dump(2) << "\n";
        out.close();
        write_run_manifest(out_dir, run_info_json("gradcheck", seed, config), {path});
    }

    std::cout << "gradcheck seed=" << seed << " max_rel_error=" << result.max_rel_error
              << " coords=" << result.coords_checked << (pass ? " pass" : " FAIL") << "\n";
    return pass ? 0 : 1;
}

int cmd_report(const std::vector<std::string>& run_dirs, const std::vector<std::string>& names,
               uint64_t seed, const std::string& out_dir) {
    if (run_dirs.empty()) throw std::runtime_error("cli: report needs at least one --runs dir");
    if (!names.empty() && names.size() != run_dirs.size())
        throw std::runtime_error("cli: --names must match --runs in count");
    ensure_out_dir(out_dir);

    json merged = json::object();
    std::vector<std::pair<std::string, mdd::MetricReport>> bars;
    std::vector<fs::path> files;
    for (size_t i = 0; i < run_dirs.size(); ++i) {
        const fs::path dir = run_dirs[i];
        if (!fs::exists(dir)) throw std::runtime_error("cli: run dir '" + dir.string() +
                                                       "' does not exist");
        std::vector<fs::path> pred_files;
        for (const auto& entry : fs::recursive_directory_iterator(dir))
            if (entry.is_regular_file() && entry.path().filename() == "predictions.csv")
                pred_files.push_back(entry.path());
        std::sort(pred_files.begin(), pred_files.end());
        if (pred_files.empty())
            throw std::runtime_error("cli: no predictions.csv under '" + dir.string() + "'");
        std::vector<std::vector<mdd::PredictionRecord>> fold_preds;
        for (const fs::path& p : pred_files) fold_preds.push_back(mdd::read_predictions(p));
        const std::string name = names.empty() ? dir.filename().string() : names[i];
        const mdd::CvSummary summary = mdd::summarize_cv(fold_preds);
        merged[name] = mdd::report_to_json(summary);
        bars.emplace_back(name, summary.pooled_weighted);
        const fs::path confusion = fs::path(out_dir) / ("confusion_" + name + ".csv");
        mdd::write_confusion_csv(confusion, summary.pooled_counts);
        files.push_back(confusion);
    }

    json config;
    config["runs"] = json::array();
    for (size_t i = 0; i < run_dirs.size(); ++i)
        config["runs"].push_back(names.empty() ? fs::path(run_dirs[i]).filename().string()
                                               : names[i]);
    json j = run_info_json("report", seed, config);
    j["models"] = merged;
    const fs::path report = fs::path(out_dir) / "report.json";
    {
        std::ofstream out(report, std::ios::binary);
        if (!out) throw std::runtime_error("cli: cannot write report.json");
        out << j.dump(2) << "\n";
    }
    files.push_back(report);
    const fs::path bars_csv = fs::path(out_dir) / "metric_bars.csv";
    mdd::write_metric_bars_csv(bars_csv, bars);
    files.push_back(bars_csv);
    const fs::path bars_svg = fs::path(out_dir) / "metric_bars.svg";
    mdd::write_metric_bars_svg(bars_svg, bars);
    files.push_back(bars_svg);
    std::sort(files.begin(), files.end());
    write_run_manifest(out_dir, run_info_json("report", seed, config), files);

    std::cout << "report seed=" << seed << " models=" << run_dirs.size() << " out=" << out_dir
              << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"MDDformer: multimodal depression classification toolkit"};
    app.require_subcommand(1);
    bool serial = false;
    app.add_flag("--serial", serial, "Disable OpenMP kernel parallelism (results identical)");

    std::function<int()> action;

    // synth
    auto* synth = app.add_subcommand("synth", "Generate a synthetic audiovisual dataset");
    mdd::SynthSpec synth_spec;
    uint64_t synth_seed = 0;
    std::string synth_out;
    synth->add_option("--seed", synth_seed, "Root RNG seed")->required();
    synth->add_option("--out", synth_out, "Output directory")->required();
    synth->add_option("--samples", synth_spec.n_samples, "Number of samples");
    synth->add_option("--frames", synth_spec.n_frames, "Frames per modality");
    synth->add_option("--d-audio", synth_spec.d_audio, "Audio feature width");
    synth->add_option("--d-visual", synth_spec.d_visual, "Visual feature width");
    synth->add_option("--sep-audio", synth_spec.separation_audio, "Audio class separation");
    synth->add_option("--sep-visual", synth_spec.separation_visual, "Visual class separation");
    synth->add_option("--noise", synth_spec.noise_sigma, "Noise standard deviation");
    synth->callback([&]() { action = [&]() { return cmd_synth(synth_spec, synth_seed, synth_out); }; });

    // train
    auto* train = app.add_subcommand("train", "Train one cross-validation fold");
    CommonModelArgs train_args;
    std::string train_fold = "0";
    train->add_option("--seed", train_args.seed, "Root RNG seed")->required();
    train->add_option("--data", train_args.data_path, "Dataset manifest CSV")
        ->required()
        ->check(CLI::ExistingFile);
    train->add_option("--out", train_args.out_dir, "Output directory")->required();
    train->add_option("--folds", train_args.folds, "Number of CV folds");
    train->add_option("--fold", train_fold, "Fold to hold out (integer or 'all')");
    add_model_flags(train, train_args);
    train->callback([&]() {
        action = [&]() {
            resolve_configs(train, train_args);
            return cmd_train(train_args, train_fold);
        };
    });

    // cv
    auto* cv = app.add_subcommand("cv", "Train and evaluate every fold");
    CommonModelArgs cv_args;
    cv->add_option("--seed", cv_args.seed, "Root RNG seed")->required();
    cv->add_option("--data", cv_args.data_path, "Dataset manifest CSV")
        ->required()
        ->check(CLI::ExistingFile);
    cv->add_option("--out", cv_args.out_dir, "Output directory")->required();
    cv->add_option("--folds", cv_args.folds, "Number of CV folds");
    add_model_flags(cv, cv_args);
    cv->callback([&]() {
        action = [&]() {
            resolve_configs(cv, cv_args);
            return cmd_train(cv_args, "all");
        };
    });

    // eval
    auto* eval = app.add_subcommand("eval", "Evaluate a baseline or a trained checkpoint");
    CommonModelArgs eval_args;
    std::string eval_model;
    std::string eval_checkpoint;
    int eval_fold = -1;
    int knn_k = 5;
    mdd::LogregConfig logreg_cfg;
    eval->add_option("--model", eval_model, "knn|logreg|mddformer")
        ->required()
        ->check(CLI::IsMember({"knn", "logreg", "mddformer"}));
    eval->add_option("--seed", eval_args.seed, "Root RNG seed")->required();
    eval->add_option("--data", eval_args.data_path, "Dataset manifest CSV")
        ->required()
        ->check(CLI::ExistingFile);
    eval->add_option("--out", eval_args.out_dir, "Output directory")->required();
    eval->add_option("--folds", eval_args.folds, "Number of CV folds");
    eval->add_option("--fold", eval_fold, "Restrict mddformer eval to this fold's held-out set");
    eval->add_option("--checkpoint", eval_checkpoint, "Checkpoint file (mddformer only)")
        ->check(CLI::ExistingFile);
    eval->add_option("--knn-k", knn_k, "KNN neighbor count");
    eval->add_option("--lr", logreg_cfg.lr, "Logistic regression learning rate");
    eval->add_option("--epochs", logreg_cfg.epochs, "Logistic regression GD iterations");
    eval->add_option("--lambda", logreg_cfg.lambda, "Logistic regression L2 strength");
    eval->add_option("--d-audio", eval_args.model.d_audio_in, "Audio feature width");
    eval->add_option("--d-visual", eval_args.model.d_visual_in, "Visual feature width");
    eval->add_option("--zero-modality", eval_args.zero_modality,
                     "Ablation: feed zeros for one modality (none|audio|visual)")
        ->check(CLI::IsMember({"none", "audio", "visual"}));
    eval->callback([&]() {
        action = [&]() {
            if (eval_model == "mddformer") {
                if (eval_checkpoint.empty())
                    throw std::runtime_error("cli: eval --model mddformer needs --checkpoint");
                return cmd_eval_mddformer(eval_args, eval_checkpoint, eval_fold);
            }
            return cmd_eval_baseline(eval_args, eval_model, knn_k, logreg_cfg);
        };
    });

    // gradcheck
    auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient verification");
    mdd::ModelConfig gc_cfg;
    gc_cfg.n_audio = gc_cfg.n_visual = 5;
    gc_cfg.d_model = 8;
    gc_cfg.n_heads = 2;
    gc_cfg.d_audio_in = 6;
    gc_cfg.d_visual_in = 7;
    gc_cfg.d_ff = 16;
    gc_cfg.d_hidden_cls = 8;
    uint64_t gc_seed = 0;
    int gc_batch = 4;
    double gc_eps = 1e-5;
    long long gc_max_coords = 0;
    std::string gc_out;
    gradcheck->add_option("--seed", gc_seed, "Root RNG seed")->required();
    gradcheck->add_option("--out", gc_out, "Optional output directory for gradcheck.json");
    gradcheck->add_option_function<int>(
        "--seq-len",
        [&gc_cfg](const int& v) { gc_cfg.n_audio = gc_cfg.n_visual = v; },
        "Sequence length");
    gradcheck->add_option("--d-model", gc_cfg.d_model, "Hidden width");
    gradcheck->add_option("--heads", gc_cfg.n_heads, "Attention heads");
    gradcheck->add_option("--d-audio", gc_cfg.d_audio_in, "Audio feature width");
    gradcheck->add_option("--d-visual", gc_cfg.d_visual_in, "Visual feature width");
    gradcheck->add_option("--d-ff", gc_cfg.d_ff, "Feed-forward width");
    gradcheck->add_option("--d-hidden", gc_cfg.d_hidden_cls, "Classifier hidden width");
    gradcheck->add_option("--batch", gc_batch, "Batch size for the check");
    gradcheck->add_option("--eps", gc_eps, "Finite-difference step");
    gradcheck->add_option("--max-coords", gc_max_coords,
                          "Max coordinates to sample (0 = every coordinate)");
    gradcheck->add_option("--logit-fusion", gc_cfg.logit_fusion,
                          "average|concat_reduce")
        ->transform(CLI::CheckedTransformer(
            std::map<std::string, mdd::LogitFusion>{
                {"average", mdd::LogitFusion::kAverage},
                {"concat_reduce", mdd::LogitFusion::kConcatReduce}},
            CLI::ignore_case));
    gradcheck->callback([&]() {
        action = [&]() {
            gc_cfg.dropout = 0.0;  // gradcheck always runs with dropout off
            return cmd_gradcheck(gc_cfg, gc_seed, gc_batch, gc_eps, gc_max_coords, gc_out);
        };
    });

    // report
    auto* report = app.add_subcommand("report", "Merge run outputs into one report");
    std::vector<std::string> report_runs, report_names;
    uint64_t report_seed = 0;
    std::string report_out;
    report->add_option("--seed", report_seed, "Root RNG seed (recorded for provenance)")
        ->required();
    report->add_option("--runs", report_runs, "Run directories to merge")->required();
    report->add_option("--names", report_names, "Model names (parallel to --runs)");
    report->add_option("--out", report_out, "Output directory")->required();
    report->callback([&]() {
        action = [&]() { return cmd_report(report_runs, report_names, report_seed, report_out); };
    });

    CLI11_PARSE(app, argc, argv);

    mdd::kernels::exec_config().parallel = !serial;
    try {
        return action();
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
