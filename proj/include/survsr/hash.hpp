#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>

namespace survsr {

/// Incremental SHA-256, hex digest.
class Sha256 {
public:
    Sha256();
    ~Sha256();
    Sha256(const Sha256&) = delete;
    Sha256& operator=(const Sha256&) = delete;

    Sha256& update(std::span<const std::byte> bytes);
    Sha256& update(std::string_view text);
    template <class T>
    Sha256& update_pod(const T& value) {
        return update(std::as_bytes(std::span<const T, 1>(&value, 1)));
    }
    std::string hex_digest();

private:
    void* ctx_;
};

std::string sha256_hex(std::string_view text);
std::string sha256_file(const std::filesystem::path& path);

}  // namespace survsr
