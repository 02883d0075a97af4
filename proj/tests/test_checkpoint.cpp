#include <doctest/doctest.h>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "mddformer/checkpoint.hpp"
#include "mddformer/rng.hpp"

using mdd::Matrix;
using namespace mdd;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) {
        path = fs::temp_directory_path() / ("mddformer_ckpt_" + tag);
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

ModelConfig small_config() {
    ModelConfig cfg;
    cfg.n_audio = 6;
    cfg.n_visual = 6;
    cfg.d_audio_in = 5;
    cfg.d_visual_in = 4;
    cfg.d_model = 8;
    cfg.n_heads = 2;
    cfg.d_ff = 16;
    cfg.d_hidden_cls = 8;
    cfg.tcn_blocks = 2;
    cfg.tcn_kernel = 3;
    return cfg;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    REQUIRE(f.good());
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

void spit(const fs::path& p, const std::string& bytes) {
    std::ofstream f(p, std::ios::binary);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

uint32_t read_u32_at(const std::string& bytes, size_t off) {
    return static_cast<uint32_t>(static_cast<unsigned char>(bytes[off])) |
           (static_cast<uint32_t>(static_cast<unsigned char>(bytes[off + 1])) << 8) |
           (static_cast<uint32_t>(static_cast<unsigned char>(bytes[off + 2])) << 16) |
           (static_cast<uint32_t>(static_cast<unsigned char>(bytes[off + 3])) << 24);
}

void write_u32_at(std::string& bytes, size_t off, uint32_t v) {
    bytes[off] = static_cast<char>(v & 0xff);
    bytes[off + 1] = static_cast<char>((v >> 8) & 0xff);
    bytes[off + 2] = static_cast<char>((v >> 16) & 0xff);
    bytes[off + 3] = static_cast<char>((v >> 24) & 0xff);
}

}  // namespace

TEST_CASE("checkpoint round-trips config, params, and meta exactly") {
    TempDir tmp("roundtrip");
    const ModelConfig cfg = small_config();
    Mddformer<float> model(cfg);
    model.init(123);
    nlohmann::json meta;
    meta["seed"] = 7;
    meta["fold"] = 3;

    const auto path = tmp.path / "model.ckpt";
    save_checkpoint(path, cfg, model.params(), meta);
    const Checkpoint back = load_checkpoint(path);

    CHECK(nlohmann::json(back.config) == nlohmann::json(cfg));
    CHECK(back.meta["seed"] == 7);
    CHECK(back.meta["fold"] == 3);

    std::vector<std::pair<std::string, const Matrix<float>*>> want, got;
    visit_params(model.params(), [&want](const std::string& n, const Matrix<float>& m) {
        want.emplace_back(n, &m);
    });
    visit_params(back.params, [&got](const std::string& n, const Matrix<float>& m) {
        got.emplace_back(n, &m);
    });
    REQUIRE(want.size() == got.size());
    for (size_t i = 0; i < want.size(); ++i) {
        CHECK(want[i].first == got[i].first);
        CHECK(*want[i].second == *got[i].second);  // bit-for-bit
    }
}

TEST_CASE("a reloaded model reproduces predictions bit-for-bit") {
    TempDir tmp("predict");
    const ModelConfig cfg = small_config();
    Mddformer<float> model(cfg);
    model.init(55);
    const auto path = tmp.path / "model.ckpt";
    save_checkpoint(path, cfg, model.params());

    const Checkpoint back = load_checkpoint(path);
    Mddformer<float> restored(back.config);
    restored.params() = back.params;

    RngStream data_rng(91);
    Matrix<float> Xa(cfg.n_audio, cfg.d_audio_in), Xv(cfg.n_visual, cfg.d_visual_in);
    for (long long i = 0; i < static_cast<long long>(Xa.size()); ++i)
        Xa.data()[i] = static_cast<float>(data_rng.normal());
    for (long long i = 0; i < static_cast<long long>(Xv.size()); ++i)
        Xv.data()[i] = static_cast<float>(data_rng.normal());

    ModelCache<float> c1, c2;
    model.forward(Xa, Xv, nullptr, c1);
    restored.forward(Xa, Xv, nullptr, c2);
    CHECK(c1.probs == c2.probs);
}

TEST_CASE("default meta is an empty object") {
    TempDir tmp("meta");
    const ModelConfig cfg = small_config();
    const auto params = ModelParams<float>::shaped(cfg);
    const auto path = tmp.path / "m.ckpt";
    save_checkpoint(path, cfg, params);
    const Checkpoint back = load_checkpoint(path);
    CHECK(back.meta.is_object());
    CHECK(back.meta.empty());
}

TEST_CASE("load rejects files that are not checkpoints") {
    TempDir tmp("garbage");
    const auto path = tmp.path / "bad.ckpt";

    spit(path, "not a checkpoint at all");
    CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("bad magic"),
                         std::runtime_error);

    CHECK_THROWS_WITH_AS(load_checkpoint(tmp.path / "missing.ckpt"),
                         doctest::Contains("cannot open"), std::runtime_error);
}

TEST_CASE("load rejects tampered checkpoints") {
    TempDir tmp("tamper");
    const ModelConfig cfg = small_config();
    Mddformer<float> model(cfg);
    model.init(9);
    const auto path = tmp.path / "m.ckpt";
    save_checkpoint(path, cfg, model.params());
    const std::string original = slurp(path);
    const uint32_t header_len = read_u32_at(original, 12);

    SUBCASE("corrupted magic") {
        std::string bytes = original;
        bytes[0] = 'X';
        spit(path, bytes);
        CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("bad magic"),
                             std::runtime_error);
    }

    SUBCASE("unsupported version") {
        std::string bytes = original;
        write_u32_at(bytes, 8, 99);
        spit(path, bytes);
        CHECK_THROWS_WITH_AS(load_checkpoint(path),
                             doctest::Contains("unsupported format version 99"),
                             std::runtime_error);
    }

    SUBCASE("corrupted header JSON") {
        std::string bytes = original;
        bytes[16] = 'X';  // header starts after magic+version+length
        spit(path, bytes);
        CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("bad header JSON"),
                             std::runtime_error);
    }

    SUBCASE("wrong tensor count") {
        std::string bytes = original;
        write_u32_at(bytes, 16 + header_len, 2);
        spit(path, bytes);
        CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("tensor count"),
                             std::runtime_error);
    }

    SUBCASE("wrong tensor name") {
        std::string bytes = original;
        // First tensor name ("audio.W") begins after the count and name length.
        const size_t name_at = 16 + header_len + 4 + 4;
        REQUIRE(bytes.substr(name_at, 7) == "audio.W");
        bytes[name_at] = 'z';
        spit(path, bytes);
        CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("expected tensor 'audio.W'"),
                             std::runtime_error);
    }

    SUBCASE("truncated tensor data") {
        spit(path, original.substr(0, original.size() - 5));
        CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("truncated"),
                             std::runtime_error);
    }

    SUBCASE("trailing bytes") {
        spit(path, original + "tail");
        CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("trailing bytes"),
                             std::runtime_error);
    }
}

TEST_CASE("saving twice produces identical bytes") {
    TempDir tmp("stable");
    const ModelConfig cfg = small_config();
    Mddformer<float> model(cfg);
    model.init(31);
    save_checkpoint(tmp.path / "a.ckpt", cfg, model.params());
    save_checkpoint(tmp.path / "b.ckpt", cfg, model.params());
    CHECK(slurp(tmp.path / "a.ckpt") == slurp(tmp.path / "b.ckpt"));
}
