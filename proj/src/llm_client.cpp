#include "llm_client.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>

#include <json.hpp>

#include "error.hpp"
#include "prompt_builder.hpp"

namespace exaranker {

void GenerationConfig::validate() const {
    if (model_id.empty()) throw ConfigError("generation config: model_id is required");
    if (!(temperature >= 0.0) || !std::isfinite(temperature)) throw ConfigError("generation config: temperature must be >= 0");
    if (max_output_tokens < 1) throw ConfigError("generation config: max_output_tokens must be >= 1");
}

std::string GenerationConfig::canonical_json() const {
    nlohmann::json doc;  // std::map backed: keys come out sorted
    doc["model_id"] = model_id;
    doc["temperature"] = temperature;
    doc["max_output_tokens"] = max_output_tokens;
    doc["stop"] = stop_sequences;
    return doc.dump();
}

std::string_view to_string(FinishReason reason) noexcept {
    switch (reason) {
        case FinishReason::stop: return "stop";
        case FinishReason::length: return "length";
        case FinishReason::error: return "error";
    }
    return "error";
}

namespace {

std::vector<std::pair<std::string, std::string>> auth_headers(const LlmEndpoint& endpoint) {
    if (endpoint.api_key_env.empty()) return {};
    const char* key = std::getenv(endpoint.api_key_env.c_str());
    if (key == nullptr || *key == '\0') return {};
    return {{"Authorization", std::string("Bearer ") + key}};
}

FinishReason finish_reason_from(const nlohmann::json& value) {
    if (value.is_string() && value.get<std::string>() == "length") return FinishReason::length;
    return FinishReason::stop;
}

}  // namespace

LlmClient::LlmClient(LlmEndpoint endpoint, std::shared_ptr<ResponseCache> cache)
    : endpoint_(std::move(endpoint)),
      cache_(std::move(cache)),
      http_(endpoint_.base_url, endpoint_.timeout, auth_headers(endpoint_)) {
    if (endpoint_.retry.max_retries < 0) throw ConfigError("max_retries must be >= 0");
}

std::string LlmClient::prompt_text(const CompletionRequest& request) {
    if (!request.system || request.system->empty()) return request.user;
    return *request.system + "\n\n" + request.user;
}

std::string LlmClient::cache_key(const CompletionRequest& request) {
    return prompt_digest(prompt_text(request), request.config, request.cache_salt);
}

std::string LlmClient::request_body(const CompletionRequest& request) {
    nlohmann::ordered_json body;
    body["model"] = request.config.model_id;
    auto messages = nlohmann::ordered_json::array();
    if (request.system && !request.system->empty())
        messages.push_back({{"role", "system"}, {"content", *request.system}});
    messages.push_back({{"role", "user"}, {"content", request.user}});
    body["messages"] = std::move(messages);
    body["temperature"] = request.config.temperature;
    body["max_tokens"] = request.config.max_output_tokens;
    body["stop"] = request.config.stop_sequences;
    return body.dump();
}

CompletionResult LlmClient::generate(const CompletionRequest& request) {
    request.config.validate();
    if (request.user.empty()) throw ConfigError("completion request has an empty user prompt");

    const auto start = std::chrono::steady_clock::now();
    CompletionResult result;
    result.digest = cache_key(request);
    if (cache_) {
        if (auto hit = cache_->find(result.digest)) {
            cache_hits_.fetch_add(1, std::memory_order_relaxed);
            result.text = std::move(hit->text);
            result.finish_reason = hit->finish_reason == "length" ? FinishReason::length : FinishReason::stop;
            result.from_cache = true;
            return result;
        }
    }

    const std::string body = request_body(request);
    const auto response = with_retries(
        endpoint_.retry,
        [&] {
            network_calls_.fetch_add(1, std::memory_order_relaxed);
            auto r = http_.post_json("/v1/chat/completions", body);
            check_status(r, "chat completion");
            return r;
        },
        &retries_);

    auto doc = nlohmann::json::parse(response.body, nullptr, /*allow_exceptions=*/false);
    try {
        if (doc.is_discarded()) throw ProtocolError("chat completion response is not valid JSON", response.body);
        const auto& choice = doc.at("choices").at(0);
        const auto& content = choice.at("message").at("content");
        if (!content.is_string()) throw ProtocolError("choices[0].message.content is not a string", response.body);
        result.text = content.get<std::string>();
        result.finish_reason = finish_reason_from(choice.value("finish_reason", nlohmann::json()));
    } catch (const nlohmann::json::exception& e) {
        throw ProtocolError(std::string("malformed chat completion response: ") + e.what(), response.body);
    }
    result.latency = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start);

    if (cache_) {
        const auto now = std::chrono::system_clock::now().time_since_epoch();
        cache_->put(CacheEntry{result.digest, result.text, std::string(to_string(result.finish_reason)),
                               request.config.model_id, std::chrono::duration_cast<std::chrono::seconds>(now).count()});
    }
    return result;
}

std::vector<CompletionResult> LlmClient::batch_generate(std::span<const CompletionRequest> requests,
                                                        std::size_t max_in_flight) {
    if (max_in_flight < 1) throw ConfigError("max_in_flight must be >= 1");
    for (const auto& r : requests) r.config.validate();

    std::vector<CompletionResult> results(requests.size());
    std::atomic<std::size_t> next{0};
    std::exception_ptr fatal;
    std::mutex fatal_mu;
    auto worker = [&] {
        for (std::size_t i = next.fetch_add(1); i < requests.size(); i = next.fetch_add(1)) {
            try {
                results[i] = generate(requests[i]);
            } catch (const Error& e) {
                if (e.code() != ErrorCode::network && e.code() != ErrorCode::protocol) {
                    std::lock_guard lock(fatal_mu);
                    if (!fatal) fatal = std::current_exception();
                    next.store(requests.size());
                    return;
                }
                failures_.fetch_add(1, std::memory_order_relaxed);
                results[i].finish_reason = FinishReason::error;
                results[i].error = e.what();
                results[i].digest = cache_key(requests[i]);
            }
        }
    };
    {
        const std::size_t workers = std::min(max_in_flight, requests.size());
        std::vector<std::jthread> pool;
        pool.reserve(workers);
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
    }
    if (fatal) std::rethrow_exception(fatal);
    return results;
}

LlmClientStats LlmClient::stats() const noexcept {
    return LlmClientStats{network_calls_.load(), retries_.load(), cache_hits_.load(), failures_.load()};
}

}  // namespace exaranker
