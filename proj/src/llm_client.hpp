#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "generation.hpp"
#include "http_client.hpp"
#include "response_cache.hpp"

namespace exaranker {

enum class FinishReason { stop, length, error };

std::string_view to_string(FinishReason reason) noexcept;

struct CompletionRequest {
    GenerationConfig config;
    std::optional<std::string> system;
    std::string user;
    /// Mixed into the cache key so a deliberate re-ask does not hit the cache.
    std::string cache_salt;
};

struct CompletionResult {
    std::string text;
    FinishReason finish_reason = FinishReason::error;
    std::chrono::milliseconds latency{0};
    bool from_cache = false;
    std::string digest;
    /// Set when finish_reason == error.
    std::string error;

    bool ok() const noexcept { return finish_reason != FinishReason::error; }
};

/// An OpenAI-compatible chat-completions server.
struct LlmEndpoint {
    std::string base_url;
    /// Environment variable holding the bearer token; unset or empty variable = no auth header.
    std::string api_key_env = "OPENAI_API_KEY";
    std::chrono::milliseconds timeout{120'000};
    RetryPolicy retry;
};

struct LlmClientStats {
    std::uint64_t network_calls = 0;
    std::uint64_t retries = 0;
    std::uint64_t cache_hits = 0;
    std::uint64_t failures = 0;
};

class LlmClient {
public:
    /// `cache` may be null to disable caching.
    LlmClient(LlmEndpoint endpoint, std::shared_ptr<ResponseCache> cache);

    /// Cache lookup, then POST /v1/chat/completions with retries. Throws
    /// NetworkError once retries are exhausted, ProtocolError (carrying the raw
    /// body) on a response that is not a chat completion.
    CompletionResult generate(const CompletionRequest& request);

    /// Runs requests with at most `max_in_flight` outstanding at any time.
    /// Results are in input order; failures are reported per item.
    std::vector<CompletionResult> batch_generate(std::span<const CompletionRequest> requests, std::size_t max_in_flight);

    LlmClientStats stats() const noexcept;

    /// Prompt bytes covered by the cache key: system text and user text separated by a blank line.
    static std::string prompt_text(const CompletionRequest& request);
    static std::string cache_key(const CompletionRequest& request);

    /// Request body for the chat-completions endpoint.
    static std::string request_body(const CompletionRequest& request);

private:
    LlmEndpoint endpoint_;
    std::shared_ptr<ResponseCache> cache_;
    HttpClient http_;
    std::atomic<std::uint64_t> network_calls_{0};
    std::atomic<std::uint64_t> retries_{0};
    std::atomic<std::uint64_t> cache_hits_{0};
    std::atomic<std::uint64_t> failures_{0};
};

}  // namespace exaranker
