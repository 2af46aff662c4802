#include <doctest.h>

#include <sstream>

#include "augmenter.hpp"
#include "error.hpp"
#include "mock_servers.hpp"
#include "pipeline.hpp"
#include "test_util.hpp"

using namespace exaranker;
using namespace std::chrono_literals;
using testutil::MockLlmServer;

namespace {

const LabelVocabulary kVocab;

std::vector<LabeledPair> make_pairs(int n) {
    std::vector<LabeledPair> pairs;
    for (int i = 0; i < n; ++i) {
        const bool rel = i % 2 == 0;
        pairs.push_back(LabeledPair{"q" + std::to_string(i), "d" + std::to_string(i), "query " + std::to_string(i),
                                    std::string(rel ? "REL" : "NON") + " passage " + std::to_string(i),
                                    rel ? Relevance::relevant : Relevance::non_relevant});
    }
    return pairs;
}

/// Label the final query block asks about, judged from its passage marker.
bool asks_relevant(const std::string& user) {
    auto pos = user.rfind("Passage: ");
    return pos != std::string::npos && user.compare(pos + 9, 3, "REL") == 0;
}

LlmClient make_client(const MockLlmServer& server, std::shared_ptr<ResponseCache> cache = nullptr) {
    LlmEndpoint ep;
    ep.base_url = server.base_url();
    ep.api_key_env = "";
    ep.timeout = 5000ms;
    ep.retry.max_retries = 1;
    ep.retry.base_backoff = 1ms;
    ep.retry.max_backoff = 2ms;
    return LlmClient(ep, std::move(cache));
}

GenerationConfig gen() {
    GenerationConfig g;
    g.model_id = "mock-model";
    return g;
}

std::string export_string(std::span<const ExplainedExample> examples, bool with_expl) {
    std::ostringstream out;
    export_finetune(examples, with_expl, make_input_format(std::string(kDefaultInputFormat)), kVocab, out);
    return out.str();
}

}  // namespace

TEST_CASE("parse_llm_output reads label and explanation") {
    auto a = parse_llm_output("true. Explanation: the passage states the height.", kVocab);
    REQUIRE(a);
    CHECK(a->label == Relevance::relevant);
    CHECK(a->explanation == "the passage states the height.");

    auto b = parse_llm_output("False \xE2\x80\x94 the passage discusses K2.", kVocab);
    REQUIRE(b);
    CHECK(b->label == Relevance::non_relevant);
    CHECK(b->explanation == "the passage discusses K2.");

    CHECK_FALSE(parse_llm_output("The passage is about K2.", kVocab));
    CHECK_FALSE(parse_llm_output("", kVocab));
    CHECK_FALSE(parse_llm_output("trueish. no", kVocab));

    auto c = parse_llm_output("  TRUE\n", kVocab);
    REQUIRE(c);
    CHECK(c->explanation.empty());
    auto d = parse_llm_output("false: explanation:   spaced  ", kVocab);
    REQUIRE(d);
    CHECK(d->explanation == "spaced");

    LabelVocabulary yn{"yes", "yes, but no"};
    auto e = parse_llm_output("Yes, but no - off topic", yn);
    REQUIRE(e);
    CHECK(e->label == Relevance::non_relevant);
}

TEST_CASE("augment with a cooperative model marks every row ok") {
    MockLlmServer server([](const nlohmann::json&, const std::string& user, int) {
        return testutil::chat_reply(asks_relevant(user) ? "true. Explanation: it answers." : "false. Explanation: it does not.");
    });
    auto client = make_client(server);
    auto pairs = make_pairs(10);
    auto [examples, stats] = augment(pairs, PromptTemplate::default_template(), default_shots(), client, gen(), {});
    REQUIRE(examples.size() == 10);
    CHECK(stats.ok == 10);
    CHECK(stats.retries == 0);
    CHECK(stats.total() == 10);
    for (std::size_t i = 0; i < examples.size(); ++i) {
        CHECK(examples[i].pair == pairs[i]);
        CHECK(examples[i].status == AugmentStatus::ok);
        CHECK(examples[i].llm_model == "mock-model");
        CHECK(examples[i].prompt_digest.size() == 64);
        CHECK(examples[i].explanation == (i % 2 == 0 ? "it answers." : "it does not."));
    }
}

TEST_CASE("a model that always contradicts falls back after R retries") {
    MockLlmServer server([](const nlohmann::json&, const std::string& user, int) {
        return testutil::chat_reply(asks_relevant(user) ? "false. Explanation: no." : "true. Explanation: yes.");
    });
    auto client = make_client(server);
    auto pairs = make_pairs(6);
    AugmentPolicy policy;
    policy.max_retries = 2;
    auto [examples, stats] = augment(pairs, PromptTemplate::default_template(), {}, client, gen(), policy);
    CHECK(stats.fallback_label_only == 6);
    CHECK(stats.retries == 12);
    CHECK(stats.relevant.label_contradictions == 9);
    CHECK(stats.non_relevant.label_contradictions == 9);
    CHECK(server.total_calls() == 18);
    for (const auto& ex : examples) {
        CHECK(ex.status == AugmentStatus::fallback_label_only);
        CHECK(ex.explanation.empty());
    }

    policy.fallback_label_only = false;
    auto failed = augment(pairs, PromptTemplate::default_template(), {}, client, gen(), policy);
    CHECK(failed.second.failed == 6);
    CHECK(failed.second.client.cache_hits == 0);
}

TEST_CASE("retries carry the nudge and succeed when the model complies") {
    MockLlmServer server([](const nlohmann::json&, const std::string& user, int) {
        if (user.find("The correct answer for this pair is \"true\"") != std::string::npos)
            return testutil::chat_reply("true. Explanation: fixed.");
        if (user.find("The correct answer for this pair is \"false\"") != std::string::npos)
            return testutil::chat_reply("false. Explanation: fixed.");
        return testutil::chat_reply("I am not sure.");
    });
    auto client = make_client(server);
    auto pairs = make_pairs(4);
    auto [examples, stats] = augment(pairs, PromptTemplate::default_template(), {}, client, gen(), {});
    CHECK(stats.ok == 4);
    CHECK(stats.retries == 4);
    CHECK(stats.relevant.parse_failures == 2);
    for (const auto& ex : examples) CHECK(ex.explanation == "fixed.");
}

TEST_CASE("empty input gives empty output and zeroed stats") {
    MockLlmServer server([](const nlohmann::json&, const std::string&, int) { return testutil::chat_reply("true. x"); });
    auto client = make_client(server);
    auto [examples, stats] = augment({}, PromptTemplate::default_template(), {}, client, gen(), {});
    CHECK(examples.empty());
    CHECK(stats.total() == 0);
    CHECK(stats.retries == 0);
    CHECK(server.total_calls() == 0);
}

TEST_CASE("a warm cache reproduces the export byte for byte without network calls") {
    testutil::TempDir dir;
    MockLlmServer server([](const nlohmann::json&, const std::string& user, int) {
        return testutil::chat_reply(asks_relevant(user) ? "true. Explanation: a." : "false. Explanation: b.");
    });
    auto pairs = make_pairs(8);
    std::string first, second;
    {
        auto client = make_client(server, std::make_shared<ResponseCache>(dir / "c.jsonl"));
        first = export_string(augment(pairs, PromptTemplate::default_template(), {}, client, gen(), {}).first, true);
    }
    const int calls = server.total_calls();
    {
        auto client = make_client(server, std::make_shared<ResponseCache>(dir / "c.jsonl"));
        auto [examples, stats] = augment(pairs, PromptTemplate::default_template(), {}, client, gen(), {});
        CHECK(stats.client.cache_hits == 8);
        second = export_string(examples, true);
    }
    CHECK(server.total_calls() == calls);
    CHECK(first == second);
}

TEST_CASE("export targets with and without explanations") {
    LabeledPair pair{"q", "d", "how tall", "330 m", Relevance::relevant};
    std::vector<ExplainedExample> ok{{pair, "the passage states the height.", "m", "x", AugmentStatus::ok}};
    auto with = nlohmann::json::parse(export_string(ok, true));
    CHECK(with["source"] == "Is the question: 'how tall' answered by the document: '330 m'?");
    CHECK(with["target"] == "true. Explanation: the passage states the height.");
    auto without = nlohmann::json::parse(export_string(ok, false));
    CHECK(without["target"] == "true");

    auto parsed = parse_llm_output(with["target"].get<std::string>(), kVocab);
    REQUIRE(parsed);
    CHECK(parsed->label == Relevance::relevant);
    CHECK(parsed->explanation == "the passage states the height.");
}

TEST_CASE("export skips failed rows and keeps fallback rows label-only") {
    auto pairs = make_pairs(3);
    std::vector<ExplainedExample> ex{{pairs[0], "e", "m", "x", AugmentStatus::ok},
                                     {pairs[1], "", "m", "x", AugmentStatus::fallback_label_only},
                                     {pairs[2], "", "m", "x", AugmentStatus::failed}};
    std::ostringstream out;
    auto stats = export_finetune(ex, true, make_input_format(std::string(kDefaultInputFormat)), kVocab, out);
    CHECK(stats.written == 2);
    CHECK(stats.with_explanation == 1);
    CHECK(stats.label_only == 1);
    CHECK(stats.excluded_failed == 1);
    std::istringstream lines(out.str());
    std::string l1, l2;
    std::getline(lines, l1);
    std::getline(lines, l2);
    CHECK(nlohmann::json::parse(l2)["target"] == "false");

    std::vector<ExplainedExample> broken{{pairs[0], "", "m", "x", AugmentStatus::ok}};
    std::ostringstream sink;
    CHECK_THROWS_AS(export_finetune(broken, true, make_input_format("{query}"), kVocab, sink), InvariantError);
    CHECK_THROWS_AS(make_input_format("{label}"), ConfigError);
}

TEST_CASE("label fidelity holds for every exported target") {
    auto pairs = make_pairs(20);
    std::vector<ExplainedExample> ex;
    for (std::size_t i = 0; i < pairs.size(); ++i)
        ex.push_back({pairs[i], i % 3 ? "true: even if the text says false" : "",
                      "m", "x", i % 3 ? AugmentStatus::ok : AugmentStatus::fallback_label_only});
    for (bool with : {true, false}) {
        std::istringstream in(export_string(ex, with));
        std::size_t i = 0;
        for (std::string line; std::getline(in, line); ++i) {
            auto parsed = parse_llm_output(nlohmann::json::parse(line)["target"].get<std::string>(), kVocab);
            REQUIRE(parsed);
            CHECK(parsed->label == pairs[i].label);
        }
        CHECK(i == pairs.size());
    }
}

TEST_CASE("augmented jsonl round trip and validation") {
    auto pairs = make_pairs(3);
    std::vector<ExplainedExample> ex{{pairs[0], "because", "m", "abc", AugmentStatus::ok},
                                     {pairs[1], "", "m", "def", AugmentStatus::fallback_label_only},
                                     {pairs[2], "", "m", "ghi", AugmentStatus::failed}};
    std::ostringstream out;
    write_augmented_jsonl(ex, out);
    std::istringstream in(out.str());
    auto back = read_augmented_jsonl(in);
    REQUIRE(back.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(back[i].pair == ex[i].pair);
        CHECK(back[i].explanation == ex[i].explanation);
        CHECK(back[i].prompt_digest == ex[i].prompt_digest);
        CHECK(back[i].status == ex[i].status);
    }
    std::ostringstream again;
    write_augmented_jsonl(back, again);
    CHECK(again.str() == out.str());

    std::istringstream bad(
        R"({"qid":"q","docid":"d","query":"a","passage":"b","label":1,"explanation":"","llm_model":"m","prompt_digest":"x","status":"ok"})");
    CHECK_THROWS_AS(read_augmented_jsonl(bad), ParseError);
}

TEST_CASE("stats json sums to the input size") {
    AugmentStats s;
    s.ok = 3;
    s.fallback_label_only = 2;
    s.failed = 1;
    auto j = s.to_json();
    CHECK(j["total"] == 6);
    CHECK(j["ok"].get<int>() + j["fallback_label_only"].get<int>() + j["failed"].get<int>() == j["total"].get<int>());
}
