#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace mdd {

/// FNV-1a 64-bit over a byte string.
inline uint64_t fnv1a64(std::string_view bytes) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Hex string form, zero-padded to 16 chars.
std::string hash_hex(uint64_t h);

/// FNV-1a of a whole file's bytes. Throws on read failure.
uint64_t hash_file(const std::filesystem::path& path);

}  // namespace mdd
