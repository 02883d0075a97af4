#include <doctest/doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) {
        path = fs::temp_directory_path() / ("mddformer_cli_" + tag);
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

struct CliResult {
    int exit_code = -1;
    std::string out;
    std::string err;
};

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

CliResult run_cli(const std::string& args, const fs::path& scratch) {
    const fs::path out_file = scratch / "stdout.txt";
    const fs::path err_file = scratch / "stderr.txt";
    const std::string cmd = std::string(MDD_CLI_PATH) + " " + args + " > " + out_file.string() +
                            " 2> " + err_file.string();
    const int raw = std::system(cmd.c_str());
    CliResult r;
    r.exit_code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    r.out = slurp(out_file);
    r.err = slurp(err_file);
    return r;
}

/// Relative path -> file bytes for every regular file under root.
std::map<std::string, std::string> dir_contents(const fs::path& root) {
    std::map<std::string, std::string> files;
    for (const auto& entry : fs::recursive_directory_iterator(root))
        if (entry.is_regular_file())
            files[entry.path().lexically_relative(root).generic_string()] = slurp(entry.path());
    return files;
}

/// Small synthetic dataset + the model flags that fit it.
const char* kTinyModelFlags =
    " --seq-len 8 --d-audio 6 --d-visual 7 --d-model 8 --heads 2 --d-ff 16 --d-hidden 8";

std::string make_dataset(const TempDir& tmp, const std::string& name, int samples,
                         double separation) {
    const fs::path dir = tmp.path / name;
    std::ostringstream cmd;
    cmd << "synth --seed 11 --out " << dir.string() << " --samples " << samples
        << " --frames 8 --d-audio 6 --d-visual 7 --sep-audio " << separation << " --sep-visual "
        << separation;
    const CliResult r = run_cli(cmd.str(), tmp.path);
    REQUIRE(r.exit_code == 0);
    return (dir / "manifest.csv").string();
}

}  // namespace

TEST_CASE("synth runs twice are byte-identical") {
    TempDir tmp("synth_twice");
    const std::string common = "synth --seed 7 --samples 8 --frames 6 --d-audio 4 --d-visual 5";
    const auto r1 = run_cli(common + " --out " + (tmp.path / "d1").string(), tmp.path);
    const auto r2 = run_cli(common + " --out " + (tmp.path / "d2").string(), tmp.path);
    REQUIRE(r1.exit_code == 0);
    REQUIRE(r2.exit_code == 0);
    CHECK(r1.out.find("synth seed=7") != std::string::npos);

    const auto d1 = dir_contents(tmp.path / "d1");
    const auto d2 = dir_contents(tmp.path / "d2");
    REQUIRE(!d1.empty());
    CHECK(d1 == d2);

    // Every emitted artifact is tracked in the run manifest.
    const auto manifest = nlohmann::json::parse(d1.at("run_manifest.json"));
    CHECK(manifest["seed"] == 7);
    CHECK(manifest["command"] == "synth");
    CHECK(manifest["outputs"].size() == d1.size() - 1);  // all but run_manifest.json itself
}

TEST_CASE("missing --seed and unknown flags are argument errors") {
    TempDir tmp("badargs");
    CHECK(run_cli("synth --out " + (tmp.path / "x").string(), tmp.path).exit_code != 0);
    CHECK(run_cli("synth --seed 1 --out x --bogus-flag 3", tmp.path).exit_code != 0);
    CHECK(run_cli("", tmp.path).exit_code != 0);  // a subcommand is required
}

TEST_CASE("cv propagates the kfold precondition error with nonzero exit") {
    TempDir tmp("cv_tiny");
    // 6 samples -> 3 per class: far too few for 10 folds.
    const std::string manifest = make_dataset(tmp, "data", 6, 1.0);
    const auto r = run_cli("cv --seed 2 --folds 10 --data " + manifest + " --out " +
                               (tmp.path / "out").string() + kTinyModelFlags + " --epochs 1",
                           tmp.path);
    CHECK(r.exit_code != 0);
    CHECK(r.err.find("error: ingest:") != std::string::npos);
    CHECK(r.err.find("fewer than k=10") != std::string::npos);
}

TEST_CASE("gradcheck prints its result and exits by threshold") {
    TempDir tmp("gradcheck");
    const auto r = run_cli("gradcheck --seed 1", tmp.path);
    CHECK(r.exit_code == 0);
    CHECK(r.out.find("gradcheck seed=1") != std::string::npos);
    CHECK(r.out.find(" pass") != std::string::npos);

    const auto size_at = r.out.find("max_rel_error=");
    REQUIRE(size_at != std::string::npos);
    const double max_rel = std::strtod(r.out.c_str() + size_at + 14, nullptr);
    CHECK(max_rel < 1e-4);

    // With an output dir it also writes gradcheck.json + run manifest.
    const auto r2 = run_cli("gradcheck --seed 1 --out " + (tmp.path / "gc").string(), tmp.path);
    CHECK(r2.exit_code == 0);
    const auto j = nlohmann::json::parse(slurp(tmp.path / "gc" / "gradcheck.json"));
    CHECK(j["pass"] == true);
    CHECK(j["max_rel_error"].get<double>() == doctest::Approx(max_rel).epsilon(1e-12));
    CHECK(fs::exists(tmp.path / "gc" / "run_manifest.json"));
}

TEST_CASE("train writes fold artifacts and honors config file layering") {
    TempDir tmp("train_one");
    const std::string manifest = make_dataset(tmp, "data", 12, 1.0);

    const fs::path cfg_path = tmp.path / "config.json";
    {
        nlohmann::json cfg;
        cfg["model"] = {{"n_audio", 8},    {"n_visual", 8}, {"d_audio_in", 6},
                        {"d_visual_in", 7}, {"d_model", 8},  {"n_heads", 2},
                        {"d_ff", 16},       {"d_hidden_cls", 8}};
        cfg["train"] = {{"epochs", 1}, {"batch_size", 4}};
        std::ofstream out(cfg_path);
        out << cfg.dump();
    }

    // Config file alone: one epoch -> one history row.
    const auto r1 = run_cli("train --seed 3 --data " + manifest + " --out " +
                                (tmp.path / "run1").string() + " --folds 4 --fold 0 --config " +
                                cfg_path.string(),
                            tmp.path);
    REQUIRE(r1.exit_code == 0);
    CHECK(r1.out.find("train seed=3 fold=0") != std::string::npos);
    for (const char* f : {"fold_0/checkpoint.ckpt", "fold_0/history.csv",
                          "fold_0/predictions.csv", "report.json", "confusion_pooled.csv",
                          "run_manifest.json"})
        CHECK(fs::exists(tmp.path / "run1" / f));
    std::istringstream hist1(slurp(tmp.path / "run1" / "fold_0" / "history.csv"));
    std::string line;
    int rows1 = 0;
    while (std::getline(hist1, line))
        if (!line.empty()) ++rows1;
    CHECK(rows1 == 1 + 1);  // header + 1 epoch

    // An explicit flag must override the config file.
    const auto r2 = run_cli("train --seed 3 --data " + manifest + " --out " +
                                (tmp.path / "run2").string() + " --folds 4 --fold 0 --config " +
                                cfg_path.string() + " --epochs 2",
                            tmp.path);
    REQUIRE(r2.exit_code == 0);
    std::istringstream hist2(slurp(tmp.path / "run2" / "fold_0" / "history.csv"));
    int rows2 = 0;
    while (std::getline(hist2, line))
        if (!line.empty()) ++rows2;
    CHECK(rows2 == 1 + 2);
}

TEST_CASE("training runs are reproducible and parallelism-invariant") {
    TempDir tmp("train_repro");
    const std::string manifest = make_dataset(tmp, "data", 12, 1.0);
    const std::string common = "train --seed 5 --data " + manifest + " --folds 4 --fold 0" +
                               kTinyModelFlags + " --epochs 2 --batch-size 4 --lr-max 1e-4";

    const auto r1 = run_cli(common + " --out " + (tmp.path / "a").string(), tmp.path);
    const auto r2 = run_cli(common + " --out " + (tmp.path / "b").string(), tmp.path);
    const auto r3 = run_cli("--serial " + common + " --out " + (tmp.path / "c").string(),
                            tmp.path);
    REQUIRE(r1.exit_code == 0);
    REQUIRE(r2.exit_code == 0);
    REQUIRE(r3.exit_code == 0);
    CHECK(dir_contents(tmp.path / "a") == dir_contents(tmp.path / "b"));
    // OpenMP on or off must not change a single byte of any artifact.
    CHECK(dir_contents(tmp.path / "a") == dir_contents(tmp.path / "c"));
}

TEST_CASE("cv aggregates all folds into one report") {
    TempDir tmp("cv_full");
    const std::string manifest = make_dataset(tmp, "data", 12, 5.0);
    const auto r = run_cli("cv --seed 4 --data " + manifest + " --out " +
                               (tmp.path / "out").string() + " --folds 3" + kTinyModelFlags +
                               " --epochs 1 --batch-size 4",
                           tmp.path);
    REQUIRE(r.exit_code == 0);
    CHECK(r.out.find("cv seed=4 folds=3 pooled_accuracy=") != std::string::npos);

    const auto report = nlohmann::json::parse(slurp(tmp.path / "out" / "report.json"));
    CHECK(report["run"]["command"] == "cv");
    CHECK(report["results"]["per_fold"].size() == 3);
    CHECK(report["results"]["pooled"]["confusion"]["tp"].is_number());
    for (int f = 0; f < 3; ++f)
        CHECK(fs::exists(tmp.path / "out" / ("fold_" + std::to_string(f)) / "predictions.csv"));
}

TEST_CASE("eval runs baselines and mddformer checkpoints") {
    TempDir tmp("eval");
    const std::string manifest = make_dataset(tmp, "data", 16, 5.0);

    const auto rk = run_cli("eval --model knn --seed 9 --data " + manifest + " --out " +
                                (tmp.path / "knn").string() + " --folds 4 --d-audio 6 --d-visual 7",
                            tmp.path);
    REQUIRE(rk.exit_code == 0);
    CHECK(rk.out.find("eval model=knn") != std::string::npos);
    const auto knn_report = nlohmann::json::parse(slurp(tmp.path / "knn" / "report.json"));
    CHECK(knn_report["results"]["pooled"]["binary"]["accuracy"].get<double>() >= 0.9);

    const auto rl = run_cli("eval --model logreg --seed 9 --data " + manifest + " --out " +
                                (tmp.path / "logreg").string() +
                                " --folds 4 --d-audio 6 --d-visual 7",
                            tmp.path);
    REQUIRE(rl.exit_code == 0);
    const auto lr_report = nlohmann::json::parse(slurp(tmp.path / "logreg" / "report.json"));
    CHECK(lr_report["results"]["pooled"]["binary"]["accuracy"].get<double>() >= 0.9);

    // mddformer eval needs a checkpoint; without one it is an error.
    const auto bad = run_cli("eval --model mddformer --seed 9 --data " + manifest + " --out " +
                                 (tmp.path / "bad").string(),
                             tmp.path);
    CHECK(bad.exit_code != 0);
    CHECK(bad.err.find("needs --checkpoint") != std::string::npos);

    // Train one quick fold, then evaluate its checkpoint on the whole set.
    const auto rt = run_cli("train --seed 9 --data " + manifest + " --out " +
                                (tmp.path / "trained").string() + " --folds 4 --fold 0" +
                                kTinyModelFlags + " --epochs 1 --batch-size 4",
                            tmp.path);
    REQUIRE(rt.exit_code == 0);
    const auto re = run_cli("eval --model mddformer --seed 9 --data " + manifest +
                                " --checkpoint " +
                                (tmp.path / "trained" / "fold_0" / "checkpoint.ckpt").string() +
                                " --out " + (tmp.path / "evalmdd").string(),
                            tmp.path);
    REQUIRE(re.exit_code == 0);
    CHECK(re.out.find("eval model=mddformer") != std::string::npos);
    CHECK(fs::exists(tmp.path / "evalmdd" / "predictions.csv"));

    // Restricting to one fold shrinks the prediction list.
    const auto rf = run_cli("eval --model mddformer --seed 9 --data " + manifest +
                                " --checkpoint " +
                                (tmp.path / "trained" / "fold_0" / "checkpoint.ckpt").string() +
                                " --folds 4 --fold 0 --out " + (tmp.path / "evalfold").string(),
                            tmp.path);
    REQUIRE(rf.exit_code == 0);
    std::istringstream all_preds(slurp(tmp.path / "evalmdd" / "predictions.csv"));
    std::istringstream fold_preds(slurp(tmp.path / "evalfold" / "predictions.csv"));
    std::string line;
    int n_all = 0, n_fold = 0;
    while (std::getline(all_preds, line))
        if (!line.empty()) ++n_all;
    while (std::getline(fold_preds, line))
        if (!line.empty()) ++n_fold;
    CHECK(n_all == 1 + 16);
    CHECK(n_fold == 1 + 4);
}

TEST_CASE("report merges runs into comparison artifacts") {
    TempDir tmp("report");
    const std::string manifest = make_dataset(tmp, "data", 16, 5.0);
    REQUIRE(run_cli("eval --model knn --seed 9 --data " + manifest + " --out " +
                        (tmp.path / "knn").string() + " --folds 4 --d-audio 6 --d-visual 7",
                    tmp.path)
                .exit_code == 0);
    REQUIRE(run_cli("eval --model logreg --seed 9 --data " + manifest + " --out " +
                        (tmp.path / "logreg").string() + " --folds 4 --d-audio 6 --d-visual 7",
                    tmp.path)
                .exit_code == 0);

    const auto r = run_cli("report --seed 9 --runs " + (tmp.path / "knn").string() + " " +
                               (tmp.path / "logreg").string() + " --names knn logreg --out " +
                               (tmp.path / "rep").string(),
                           tmp.path);
    REQUIRE(r.exit_code == 0);
    CHECK(r.out.find("report seed=9 models=2") != std::string::npos);

    const auto merged = nlohmann::json::parse(slurp(tmp.path / "rep" / "report.json"));
    CHECK(merged["models"].contains("knn"));
    CHECK(merged["models"].contains("logreg"));
    CHECK(merged["models"]["knn"]["per_fold"].size() == 4);

    const std::string bars = slurp(tmp.path / "rep" / "metric_bars.csv");
    CHECK(bars.rfind("model,accuracy,precision,recall,f1\n", 0) == 0);
    CHECK(bars.find("\nknn,") != std::string::npos);
    CHECK(bars.find("\nlogreg,") != std::string::npos);
    CHECK(fs::exists(tmp.path / "rep" / "metric_bars.svg"));
    CHECK(fs::exists(tmp.path / "rep" / "confusion_knn.csv"));
    CHECK(fs::exists(tmp.path / "rep" / "run_manifest.json"));

    // A run directory without predictions is an error.
    fs::create_directories(tmp.path / "empty_run");
    CHECK(run_cli("report --seed 9 --runs " + (tmp.path / "empty_run").string() + " --out " +
                      (tmp.path / "rep2").string(),
                  tmp.path)
              .exit_code != 0);
}
