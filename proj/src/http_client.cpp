#include "http_client.hpp"

#include <httplib.h>

#include <algorithm>
#include <cmath>
#include <random>

namespace exaranker {

namespace {

constexpr std::size_t kMaxQuotedBody = 512;

std::string quote_body(const std::string& body) {
    if (body.size() <= kMaxQuotedBody) return body;
    return body.substr(0, kMaxQuotedBody) + "...";
}

}  // namespace

std::chrono::milliseconds RetryPolicy::backoff(int retry) const {
    thread_local std::mt19937_64 rng{std::random_device{}()};
    const double base = static_cast<double>(base_backoff.count());
    const double cap = static_cast<double>(max_backoff.count());
    const double delay = std::min(cap, base * std::ldexp(1.0, std::min(retry, 30)));
    std::uniform_real_distribution<double> jitter(0.5, 1.0);
    return std::chrono::milliseconds(static_cast<std::int64_t>(delay * jitter(rng)));
}

HttpClient::HttpClient(std::string base_url, std::chrono::milliseconds timeout,
                       std::vector<std::pair<std::string, std::string>> headers)
    : base_url_(std::move(base_url)), timeout_(timeout), headers_(std::move(headers)) {
    auto scheme_end = base_url_.find("://");
    if (scheme_end == std::string::npos) throw ConfigError("base URL must start with http:// or https://: '" + base_url_ + "'");
    auto scheme = base_url_.substr(0, scheme_end);
    if (scheme != "http" && scheme != "https") throw ConfigError("unsupported URL scheme '" + scheme + "'");
    auto path_start = base_url_.find('/', scheme_end + 3);
    origin_ = base_url_.substr(0, path_start);
    if (origin_.size() <= scheme_end + 3) throw ConfigError("base URL has no host: '" + base_url_ + "'");
    if (path_start != std::string::npos) prefix_ = base_url_.substr(path_start);
    while (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
}

namespace {

std::unique_ptr<httplib::Client> make_client(const std::string& origin, std::chrono::milliseconds timeout) {
    auto cli = std::make_unique<httplib::Client>(origin);
    if (!cli->is_valid()) throw ConfigError("invalid endpoint '" + origin + "'");
    cli->set_connection_timeout(timeout);
    cli->set_read_timeout(timeout);
    cli->set_write_timeout(timeout);
    cli->set_keep_alive(false);
    return cli;
}

HttpResponse to_response(const httplib::Result& res, std::string_view method, const std::string& url) {
    if (!res) throw NetworkError(std::string(method) + " " + url + ": " + httplib::to_string(res.error()), true);
    return HttpResponse{res->status, res->body};
}

}  // namespace

HttpResponse HttpClient::post_json(std::string_view path, const std::string& body) const {
    auto cli = make_client(origin_, timeout_);
    httplib::Headers headers;
    for (const auto& [k, v] : headers_) headers.emplace(k, v);
    const std::string full = prefix_ + std::string(path);
    return to_response(cli->Post(full, headers, body, "application/json"), "POST", origin_ + full);
}

HttpResponse HttpClient::get(std::string_view path) const {
    auto cli = make_client(origin_, timeout_);
    httplib::Headers headers;
    for (const auto& [k, v] : headers_) headers.emplace(k, v);
    const std::string full = prefix_ + std::string(path);
    return to_response(cli->Get(full, headers), "GET", origin_ + full);
}

void check_status(const HttpResponse& response, std::string_view what) {
    if (response.status >= 200 && response.status < 300) return;
    const bool retryable = response.status == 429 || response.status >= 500;
    throw NetworkError(std::string(what) + ": HTTP " + std::to_string(response.status) + ": " + quote_body(response.body),
                       retryable);
}

}  // namespace exaranker
