#include "response_cache.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <fstream>
#include <vector>

#include <json.hpp>

#include "error.hpp"

namespace exaranker {

namespace {

std::optional<CacheEntry> parse_entry(const std::string& line) {
    auto doc = nlohmann::json::parse(line, nullptr, /*allow_exceptions=*/false);
    if (!doc.is_object()) return std::nullopt;
    try {
        return CacheEntry{doc.at("key").get<std::string>(), doc.at("text").get<std::string>(),
                          doc.value("finish_reason", std::string("stop")), doc.value("model_id", std::string()),
                          doc.value("timestamp", std::int64_t{0})};
    } catch (const nlohmann::json::exception&) {
        return std::nullopt;
    }
}

std::string serialize(const CacheEntry& e) {
    nlohmann::ordered_json doc;
    doc["key"] = e.key;
    doc["text"] = e.text;
    doc["finish_reason"] = e.finish_reason;
    doc["model_id"] = e.model_id;
    doc["timestamp"] = e.timestamp;
    return doc.dump() + "\n";
}

void write_all(int fd, const std::string& bytes, const std::filesystem::path& path) {
    const char* p = bytes.data();
    std::size_t left = bytes.size();
    while (left > 0) {
        ssize_t n = ::write(fd, p, left);
        if (n < 0) {
            if (errno == EINTR) continue;
            throw IoError("write to " + path.string() + " failed: " + std::strerror(errno));
        }
        p += n;
        left -= static_cast<std::size_t>(n);
    }
}

}  // namespace

ResponseCache::ResponseCache(std::filesystem::path file) : path_(std::move(file)) {
    std::ifstream in(path_, std::ios::binary);
    if (!in) return;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto entry = parse_entry(line);
        if (!entry) {
            ++skipped_;
            continue;
        }
        entries_.try_emplace(entry->key, std::move(*entry));
    }
}

ResponseCache::~ResponseCache() {
    if (fd_ >= 0) ::close(fd_);
}

std::optional<CacheEntry> ResponseCache::find(std::string_view key) const {
    std::shared_lock lock(mu_);
    auto it = entries_.find(std::string(key));
    if (it == entries_.end()) return std::nullopt;
    return it->second;
}

void ResponseCache::put(CacheEntry entry) {
    std::unique_lock lock(mu_);
    if (entries_.contains(entry.key)) return;
    if (!path_.empty()) {
        if (fd_ < 0) {
            if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
            fd_ = ::open(path_.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
            if (fd_ < 0) throw IoError("cannot open cache " + path_.string() + ": " + std::strerror(errno));
            // A torn line from a killed writer must not swallow the next entry.
            auto size = std::filesystem::file_size(path_);
            if (size > 0) {
                std::ifstream in(path_, std::ios::binary);
                in.seekg(static_cast<std::streamoff>(size - 1));
                char last = 0;
                in.get(last);
                if (last != '\n') write_all(fd_, "\n", path_);
            }
        }
        write_all(fd_, serialize(entry), path_);
    }
    auto key = entry.key;
    entries_.emplace(std::move(key), std::move(entry));
}

std::size_t ResponseCache::size() const {
    std::shared_lock lock(mu_);
    return entries_.size();
}

std::size_t ResponseCache::compact(const std::filesystem::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw IoError("cannot open cache " + file.string());
    std::vector<std::string> kept;
    std::unordered_map<std::string, bool> seen;
    std::string line;
    while (std::getline(in, line)) {
        auto entry = parse_entry(line);
        if (!entry || !seen.emplace(entry->key, true).second) continue;
        kept.push_back(serialize(*entry));
    }
    in.close();
    auto tmp = file;
    tmp += ".compact.tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + tmp.string());
        for (const auto& l : kept) out << l;
        if (!out.flush()) throw IoError("cannot write " + tmp.string());
    }
    std::filesystem::rename(tmp, file);
    return kept.size();
}

}  // namespace exaranker
