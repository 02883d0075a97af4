#include "mddformer/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace mdd {

namespace {

constexpr char kMagic[8] = {'M', 'D', 'D', 'C', 'K', 'P', 'T', '\0'};
constexpr uint32_t kVersion = 1;

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error("checkpoint: " + msg); }

void put_u32(std::ostream& out, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t get_u32(std::istream& in, const char* what) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) fail(std::string("truncated file reading ") + what);
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

void put_f32(std::ostream& out, float v) {
    uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(out, bits);
}

float get_f32(std::istream& in, const char* what) {
    uint32_t bits = get_u32(in, what);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ModelConfig& config,
                     const ModelParams<float>& params, const nlohmann::json& meta) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail("cannot open '" + path.string() + "' for writing");

    out.write(kMagic, 8);
    put_u32(out, kVersion);

    nlohmann::json header;
    header["config"] = config;
    header["meta"] = meta;
    const std::string header_str = header.dump();
    put_u32(out, static_cast<uint32_t>(header_str.size()));
    out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));

    uint32_t n_tensors = 0;
    visit_params(params, [&n_tensors](const std::string&, const Matrix<float>&) { ++n_tensors; });
    put_u32(out, n_tensors);

    visit_params(params, [&out](const std::string& name, const Matrix<float>& m) {
        put_u32(out, static_cast<uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        put_u32(out, static_cast<uint32_t>(m.rows()));
        put_u32(out, static_cast<uint32_t>(m.cols()));
        for (long long i = 0; i < static_cast<long long>(m.size()); ++i) put_f32(out, m.data()[i]);
    });
    out.flush();
    if (!out.good()) fail("write failed for '" + path.string() + "'");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail("cannot open '" + path.string() + "'");

    char magic[8];
    if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0)
        fail("'" + path.string() + "' is not a checkpoint (bad magic)");
    const uint32_t version = get_u32(in, "version");
    if (version != kVersion)
        fail("unsupported format version " + std::to_string(version));

    const uint32_t header_len = get_u32(in, "header length");
    std::string header_str(header_len, '\0');
    if (!in.read(header_str.data(), header_len)) fail("truncated header");
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(header_str);
    } catch (const nlohmann::json::exception& e) {
        fail(std::string("bad header JSON: ") + e.what());
    }

    Checkpoint ckpt;
    try {
        ckpt.config = header.at("config").get<ModelConfig>();
    } catch (const nlohmann::json::exception& e) {
        fail(std::string("bad config in header: ") + e.what());
    }
    ckpt.meta = header.value("meta", nlohmann::json::object());
    ckpt.config.validate();
    ckpt.params = ModelParams<float>::shaped(ckpt.config);

    // Tensors must appear exactly in enumeration order with matching shapes.
    std::vector<std::pair<std::string, Matrix<float>*>> slots;
    visit_params(ckpt.params, [&slots](const std::string& name, Matrix<float>& m) {
        slots.emplace_back(name, &m);
    });

    const uint32_t n_tensors = get_u32(in, "tensor count");
    if (n_tensors != slots.size()) {
        fail("tensor count " + std::to_string(n_tensors) + " does not match config (expected " +
             std::to_string(slots.size()) + ")");
    }
    for (auto& [want_name, m] : slots) {
        const uint32_t name_len = get_u32(in, "tensor name length");
        std::string name(name_len, '\0');
        if (!in.read(name.data(), name_len)) fail("truncated tensor name");
        if (name != want_name) fail("expected tensor '" + want_name + "', found '" + name + "'");
        const uint32_t rows = get_u32(in, "tensor rows");
        const uint32_t cols = get_u32(in, "tensor cols");
        if (rows != static_cast<uint32_t>(m->rows()) || cols != static_cast<uint32_t>(m->cols())) {
            fail("tensor '" + name + "' has shape " + std::to_string(rows) + "x" +
                 std::to_string(cols) + ", config implies " + std::to_string(m->rows()) + "x" +
                 std::to_string(m->cols()));
        }
        for (long long i = 0; i < static_cast<long long>(m->size()); ++i) m->data()[i] = get_f32(in, name.c_str());
    }
    if (in.peek() != std::char_traits<char>::eof()) fail("trailing bytes after last tensor");
    return ckpt;
}

}  // namespace mdd
