#include <doctest.h>

#include <thread>

#include <json.hpp>

#include "http_client.hpp"
#include "mock_servers.hpp"
#include "response_cache.hpp"
#include "test_util.hpp"

using namespace exaranker;
using namespace std::chrono_literals;

namespace {

CacheEntry entry(std::string key, std::string text) {
    return CacheEntry{std::move(key), std::move(text), "stop", "m", 1700000000};
}

}  // namespace

TEST_CASE("cache persists entries and first write wins") {
    testutil::TempDir dir;
    const auto file = dir / "sub/cache.jsonl";
    {
        ResponseCache cache(file);
        cache.put(entry("k1", "one"));
        cache.put(entry("k1", "ignored"));
        cache.put(entry("k2", "two"));
        CHECK(cache.size() == 2);
        CHECK(cache.find("k1")->text == "one");
    }
    CHECK(testutil::read_lines(file).size() == 2);
    ResponseCache again(file);
    CHECK(again.size() == 2);
    CHECK(again.find("k2")->text == "two");
    CHECK(again.find("k2")->model_id == "m");
    CHECK_FALSE(again.find("k3"));
}

TEST_CASE("a torn final line is skipped and later appends still parse") {
    testutil::TempDir dir;
    const auto file = dir / "cache.jsonl";
    {
        ResponseCache cache(file);
        cache.put(entry("k1", "one"));
    }
    {
        std::ofstream out(file, std::ios::app);
        out << R"({"key":"k2","text":"tor)";
    }
    {
        ResponseCache cache(file);
        CHECK(cache.size() == 1);
        CHECK(cache.skipped_lines() == 1);
        cache.put(entry("k3", "three"));
    }
    ResponseCache reloaded(file);
    CHECK(reloaded.find("k3"));
    CHECK(reloaded.find("k1"));
}

TEST_CASE("compact drops junk and duplicate keys") {
    testutil::TempDir dir;
    const auto file = dir / "cache.jsonl";
    testutil::write_file(file, R"({"key":"a","text":"1"}
not json
{"key":"a","text":"2"}
{"key":"b","text":"3"}
{"key":"c","text":"tor)");
    CHECK(ResponseCache::compact(file) == 2);
    auto lines = testutil::read_lines(file);
    REQUIRE(lines.size() == 2);
    ResponseCache cache(file);
    CHECK(cache.find("a")->text == "1");
    CHECK(cache.skipped_lines() == 0);
}

TEST_CASE("concurrent puts produce whole lines") {
    testutil::TempDir dir;
    const auto file = dir / "cache.jsonl";
    {
        ResponseCache cache(file);
        std::vector<std::thread> threads;
        for (int t = 0; t < 8; ++t)
            threads.emplace_back([&, t] {
                for (int i = 0; i < 50; ++i) cache.put(entry("k" + std::to_string(t * 100 + i), std::string(500, 'x')));
            });
        for (auto& th : threads) th.join();
    }
    ResponseCache reloaded(file);
    CHECK(reloaded.size() == 400);
    CHECK(reloaded.skipped_lines() == 0);
}

TEST_CASE("in-memory cache") {
    ResponseCache cache;
    cache.put(entry("k", "v"));
    CHECK(cache.find("k")->text == "v");
}

TEST_CASE("backoff stays within the jittered exponential envelope") {
    RetryPolicy p;
    p.base_backoff = 100ms;
    p.max_backoff = 1000ms;
    for (int r = 0; r < 8; ++r) {
        const auto ceiling = std::min<std::int64_t>(1000, 100LL << r);
        for (int i = 0; i < 50; ++i) {
            auto d = p.backoff(r).count();
            CHECK(d >= ceiling / 2);
            CHECK(d <= ceiling);
        }
    }
}

TEST_CASE("check_status classifies responses") {
    CHECK_NOTHROW(check_status({200, ""}, "x"));
    auto retryable = [](int status) {
        try {
            check_status({status, "body"}, "x");
        } catch (const NetworkError& e) {
            return e.retryable();
        }
        FAIL("no throw");
        return false;
    };
    CHECK(retryable(429));
    CHECK(retryable(503));
    CHECK_FALSE(retryable(400));
    CHECK_FALSE(retryable(404));
}

TEST_CASE("with_retries counts retries and gives up") {
    RetryPolicy p;
    p.max_retries = 3;
    p.base_backoff = 1ms;
    p.max_backoff = 2ms;
    std::atomic<std::uint64_t> retries{0};
    int calls = 0;
    auto v = with_retries(
        p,
        [&] {
            if (++calls < 3) throw NetworkError("flaky", true);
            return 7;
        },
        &retries);
    CHECK(v == 7);
    CHECK(retries == 2);

    calls = 0;
    CHECK_THROWS_AS(with_retries(p, [&]() -> int { ++calls; throw NetworkError("down", true); }), NetworkError);
    CHECK(calls == 4);
    calls = 0;
    CHECK_THROWS_AS(with_retries(p, [&]() -> int { ++calls; throw NetworkError("bad request", false); }), NetworkError);
    CHECK(calls == 1);
}

TEST_CASE("http client talks to a live server and maps transport failures") {
    testutil::MockScorerServer server([](const std::string&, const std::string&) { return 0.25; });
    HttpClient http(server.base_url(), 5000ms);
    auto health = http.get("/healthz");
    CHECK(health.status == 200);
    auto r = http.post_json("/score", R"({"query":"q","passages":["a","b"]})");
    CHECK(r.status == 200);
    CHECK(nlohmann::json::parse(r.body)["p_relevant"].size() == 2);

    HttpClient dead("http://127.0.0.1:1", 500ms);
    try {
        dead.get("/healthz");
        FAIL("expected a network error");
    } catch (const NetworkError& e) {
        CHECK(e.retryable());
    }
}
