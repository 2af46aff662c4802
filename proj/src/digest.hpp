#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <string_view>

namespace exaranker {

/// Incremental SHA-256.
class Sha256 {
public:
    Sha256();
    ~Sha256();
    Sha256(const Sha256&) = delete;
    Sha256& operator=(const Sha256&) = delete;

    Sha256& update(std::string_view bytes);
    /// Lowercase hex of the 32-byte digest. The hasher is unusable afterwards.
    std::string hex_digest();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

std::string sha256_hex(std::string_view bytes);

/// Digest of a file's bytes, streamed.
std::string sha256_file(const std::filesystem::path& path);

}  // namespace exaranker
