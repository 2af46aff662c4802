#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include "error.hpp"

namespace exaranker {

struct RetryPolicy {
    /// Retries after the first attempt; total attempts = max_retries + 1.
    int max_retries = 5;
    std::chrono::milliseconds base_backoff{500};
    std::chrono::milliseconds max_backoff{30'000};

    /// Delay before retry number `retry` (0-based): base * 2^retry capped at
    /// max_backoff, scaled by a uniform jitter factor in [0.5, 1].
    std::chrono::milliseconds backoff(int retry) const;
};

struct HttpResponse {
    int status = 0;
    std::string body;
};

/// Blocking JSON-over-HTTP client for one base URL (`http://host:port[/prefix]`
/// or `https://...`). Each call opens its own connection, so one instance may be
/// shared between threads.
class HttpClient {
public:
    HttpClient(std::string base_url, std::chrono::milliseconds timeout,
               std::vector<std::pair<std::string, std::string>> headers = {});

    /// Transport failures and timeouts throw a retryable NetworkError.
    HttpResponse post_json(std::string_view path, const std::string& body) const;
    HttpResponse get(std::string_view path) const;

    const std::string& base_url() const noexcept { return base_url_; }

private:
    std::string base_url_;
    std::string origin_;
    std::string prefix_;
    std::chrono::milliseconds timeout_;
    std::vector<std::pair<std::string, std::string>> headers_;
};

/// 2xx passes; 429 and 5xx throw a retryable NetworkError; anything else a
/// non-retryable one. The body is quoted in the message.
void check_status(const HttpResponse& response, std::string_view what);

/// Runs `attempt` until it returns, retrying on retryable NetworkError with
/// backoff. `retries`, when given, is incremented once per retry performed.
template <typename F>
auto with_retries(const RetryPolicy& policy, F&& attempt, std::atomic<std::uint64_t>* retries = nullptr) {
    for (int retry = 0;; ++retry) {
        try {
            return attempt();
        } catch (const NetworkError& e) {
            if (!e.retryable() || retry >= policy.max_retries) throw;
        }
        if (retries) retries->fetch_add(1, std::memory_order_relaxed);
        std::this_thread::sleep_for(policy.backoff(retry));
    }
}

}  // namespace exaranker
