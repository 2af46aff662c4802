#include <doctest.h>

#include <json.hpp>

#include "error.hpp"
#include "pipeline.hpp"
#include "prompt_builder.hpp"
#include "test_util.hpp"

using namespace exaranker;

namespace {

LabeledPair pair_of(std::string q, std::string p, Relevance label = Relevance::relevant) {
    return LabeledPair{"q", "d", std::move(q), std::move(p), label};
}

}  // namespace

TEST_CASE("zero-shot substitution") {
    PromptTemplate tpl(std::nullopt, "{query}{passage}{label}{explanation}", "Q: {query}\nP: {passage}\nIs it relevant?");
    CHECK(render_prompt(tpl, {}, pair_of("a", "b")) == "Q: a\nP: b\nIs it relevant?");
}

TEST_CASE("shots render in order before the query block") {
    PromptTemplate tpl(std::string("SYS"), "S {query}|{passage}|{label}|{explanation}", "Q {query}|{passage}");
    std::vector<FewShotExample> shots{{"q1", "p1", "true", "e1"}, {"q2", "p2", "false", "e2"}};
    CHECK(render_prompt(tpl, shots, pair_of("x", "y")) == "SYS\n\nS q1|p1|true|e1\n\nS q2|p2|false|e2\n\nQ x|y");
    CHECK(render_user_prompt(tpl, shots, pair_of("x", "y")) == "S q1|p1|true|e1\n\nS q2|p2|false|e2\n\nQ x|y");
}

TEST_CASE("no trailing whitespace and literal braces") {
    PromptTemplate tpl(std::nullopt, "{label}:{explanation}", "{{x}} {query} {passage}  \n");
    CHECK(render_prompt(tpl, {}, pair_of("a", "b")) == "{x} a b");
}

TEST_CASE("template validation happens at load") {
    CHECK_THROWS_AS(PromptTemplate(std::nullopt, "{labell}", "{query}"), ConfigError);
    CHECK_THROWS_WITH_AS(PromptTemplate(std::nullopt, "{label}", "{query} {label}"), doctest::Contains("{label}"),
                         ConfigError);
    CHECK_THROWS_AS(PromptTemplate(std::nullopt, "{label", "{query}"), ConfigError);
    CHECK_THROWS_AS(PromptTemplate(std::nullopt, "x}", "{query}"), ConfigError);
    CHECK_THROWS_AS(PromptTemplate(std::nullopt, "x", "{query}", LabelVocabulary{"yes", "yes"}), ConfigError);
    CHECK_THROWS_AS(PromptTemplate(std::nullopt, "x", "{query}", LabelVocabulary{"", "no"}), ConfigError);

    auto doc = nlohmann::json::parse(R"({"shot_format":"{labell}","query_format":"{query}"})");
    CHECK_THROWS_AS(PromptTemplate::from_json(doc), ConfigError);
    auto extra = nlohmann::json::parse(R"({"shot_format":"x","query_format":"{query}","oops":1})");
    CHECK_THROWS_AS(PromptTemplate::from_json(extra), ConfigError);
}

TEST_CASE("the shipped template and shots match the built-in defaults") {
    auto tpl = PromptTemplate::load(testutil::source_dir() / "data/templates/explain_v1.json");
    CHECK(tpl.to_json() == PromptTemplate::default_template().to_json());
    auto shots = load_shots(testutil::source_dir() / "data/shots/explain_v1.json", tpl.vocabulary());
    auto builtin = default_shots();
    REQUIRE(shots.size() == builtin.size());
    REQUIRE(shots.size() == 4);
    int relevant = 0;
    for (std::size_t i = 0; i < shots.size(); ++i) {
        CHECK(shots[i].query == builtin[i].query);
        CHECK(shots[i].passage == builtin[i].passage);
        CHECK(shots[i].label == builtin[i].label);
        CHECK(shots[i].explanation == builtin[i].explanation);
        relevant += shots[i].label == "true";
    }
    CHECK(relevant == 2);
}

TEST_CASE("shots validation") {
    LabelVocabulary v;
    CHECK_THROWS_AS(shots_from_json(nlohmann::json::parse(R"([{"query":"q","passage":"p","label":"maybe","explanation":"e"}])"), v),
                    ConfigError);
    CHECK_THROWS_AS(shots_from_json(nlohmann::json::parse(R"([{"query":"q","passage":"p","label":"true","explanation":" "}])"), v),
                    ConfigError);
    CHECK_THROWS_AS(shots_from_json(nlohmann::json::parse(R"({"query":"q"})"), v), ConfigError);
}

TEST_CASE("the pair label never reaches the prompt") {
    auto tpl = PromptTemplate::default_template();
    auto shots = default_shots();
    auto rel = render_prompt(tpl, shots, pair_of("llamas", "they eat grass", Relevance::relevant));
    auto non = render_prompt(tpl, shots, pair_of("llamas", "they eat grass", Relevance::non_relevant));
    CHECK(rel == non);
    CHECK(rel == render_prompt(tpl, shots, pair_of("llamas", "they eat grass")));
}

TEST_CASE("prompt digests match the frozen golden values") {
    auto golden = nlohmann::json::parse(testutil::read_file(testutil::fixture("digest_golden.json")));
    REQUIRE(golden.size() >= 6);
    for (const auto& g : golden) {
        GenerationConfig cfg;
        cfg.model_id = g["model_id"].get<std::string>();
        if (g.contains("temperature")) cfg.temperature = g["temperature"].get<double>();
        if (g.contains("max_output_tokens")) cfg.max_output_tokens = g["max_output_tokens"].get<int>();
        if (g.contains("stop")) cfg.stop_sequences = g["stop"].get<std::vector<std::string>>();
        CHECK(cfg.canonical_json() == g["canonical"].get<std::string>());
        CHECK(prompt_digest(g["prompt"].get<std::string>(), cfg, g.value("salt", "")) == g["sha256"].get<std::string>());
    }
}

TEST_CASE("digest sensitivity") {
    GenerationConfig cfg;
    cfg.model_id = "m";
    auto base = prompt_digest("prompt", cfg);
    CHECK(base.size() == 64);
    CHECK(base == prompt_digest("prompt", cfg));
    CHECK(base != prompt_digest("prompt!", cfg));
    CHECK(base != prompt_digest("prompt", cfg, "retry=1"));
    auto other = cfg;
    other.model_id = "n";
    CHECK(base != prompt_digest("prompt", other));
    other = cfg;
    other.temperature = 0.5;
    CHECK(base != prompt_digest("prompt", other));
}

TEST_CASE("generation config validation") {
    GenerationConfig cfg;
    cfg.model_id = "m";
    CHECK_NOTHROW(cfg.validate());
    cfg.max_output_tokens = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg.max_output_tokens = 1;
    cfg.temperature = -0.1;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
