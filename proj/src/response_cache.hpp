#pragma once

#include <cstdint>
#include <filesystem>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <unordered_map>

namespace exaranker {

struct CacheEntry {
    std::string key;
    std::string text;
    std::string finish_reason;
    std::string model_id;
    std::int64_t timestamp = 0;  ///< seconds since the Unix epoch
};

/// Persistent generation cache: an append-only JSONL file, one entry per line,
/// keyed by prompt digest. Each entry is appended with a single write(2) on an
/// O_APPEND descriptor, so a killed process leaves at most one torn final line,
/// which is skipped on the next load. Many readers, one writer at a time.
class ResponseCache {
public:
    /// In-memory only.
    ResponseCache() = default;
    /// Loads `file` if it exists; parent directories are created on first write.
    explicit ResponseCache(std::filesystem::path file);
    ~ResponseCache();
    ResponseCache(const ResponseCache&) = delete;
    ResponseCache& operator=(const ResponseCache&) = delete;

    std::optional<CacheEntry> find(std::string_view key) const;

    /// Stores an entry unless its key is already present (first write wins).
    void put(CacheEntry entry);

    std::size_t size() const;
    /// Lines skipped as unreadable while loading.
    std::size_t skipped_lines() const noexcept { return skipped_; }
    const std::filesystem::path& path() const noexcept { return path_; }

    /// Rewrites a cache file without unreadable lines or duplicate keys,
    /// atomically via rename. Returns the number of entries kept.
    static std::size_t compact(const std::filesystem::path& file);

private:
    std::filesystem::path path_;
    int fd_ = -1;
    std::size_t skipped_ = 0;
    mutable std::shared_mutex mu_;
    std::unordered_map<std::string, CacheEntry> entries_;
};

}  // namespace exaranker
