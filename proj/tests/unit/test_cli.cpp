#include <doctest.h>

#include <json.hpp>

#include "mock_servers.hpp"
#include "test_util.hpp"

using testutil::cli;
using testutil::run;
using testutil::TempDir;

namespace {

std::string toy(const char* f) { return testutil::fixture(std::string("toy/") + f).string(); }

std::vector<std::string> sample_args(const TempDir& dir) {
    return cli({"sample", "--queries", toy("queries.tsv"), "--collection", toy("collection.tsv"), "--qrels",
                toy("qrels.txt"), "--candidate-run", toy("candidates.trec"), "--output-dir", (dir / "out").string()});
}

}  // namespace

TEST_CASE("--help exits 0 and lists every flag") {
    const std::vector<std::pair<std::string, std::vector<std::string>>> subs{
        {"sample", {"--queries", "--collection", "--qrels", "--candidate-run", "--n-pos", "--n-neg", "--negative-source",
                    "--positive-threshold", "--candidate-depth", "--out"}},
        {"augment", {"--pairs", "--template", "--shots", "--model", "--temperature", "--max-output-tokens",
                     "--max-retries", "--fallback", "--max-in-flight", "--dry-run", "--out"}},
        {"export", {"--augmented", "--template", "--input-format", "--with-explanations", "--labels-only", "--out"}},
        {"rerank", {"--queries", "--collection", "--candidate-run", "--scorer-url", "--depth", "--batch-size",
                    "--max-in-flight", "--on-failure", "--no-title", "--tag", "--out"}},
        {"eval", {"--run", "--qrels", "--k", "--dataset", "--out"}},
        {"report", {"--input", "--k", "--out"}},
        {"cache-compact", {"--file"}},
    };
    auto top = run(cli({"--help"}));
    CHECK(top.exit_code == 0);
    for (const char* g : {"--config", "--seed", "--cache-dir", "--base-url", "--api-key-env"})
        CHECK(top.out.find(g) != std::string::npos);
    for (const auto& [sub, flags] : subs) {
        auto r = run(cli({sub, "--help"}));
        CAPTURE(sub);
        CHECK(r.exit_code == 0);
        for (const auto& f : flags) {
            CAPTURE(f);
            CHECK(r.out.find(f) != std::string::npos);
        }
        CHECK(r.out.find("--config") != std::string::npos);
    }
}

TEST_CASE("usage errors exit 2") {
    TempDir dir;
    auto r = run(cli({"sample", "--queries", toy("queries.tsv"), "--collection", toy("collection.tsv"), "--output-dir",
                      (dir / "out").string()}));
    CHECK(r.exit_code == 2);
    CHECK(r.err.find("--qrels") != std::string::npos);

    CHECK(run(cli({"sample", "--bogus"})).exit_code == 2);
    CHECK(run(cli({"nosuchcommand"})).exit_code == 2);
    CHECK(run(cli({"export", "--with-explanations", "--labels-only"})).exit_code == 2);
    CHECK(run(cli({"--config", (dir / "missing.json").string(), "eval"})).exit_code == 2);

    testutil::write_file(dir / "cfg.json", R"({"sample":{"n_poss":3}})");
    auto bad_key = run(cli({"--config", (dir / "cfg.json").string(), "sample"}));
    CHECK(bad_key.exit_code == 2);
    CHECK(bad_key.err.find("n_poss") != std::string::npos);
}

TEST_CASE("runtime errors exit 1") {
    TempDir dir;
    auto args = sample_args(dir);
    args.insert(args.end(), {"--n-pos", "50", "--n-neg", "0"});
    auto r = run(args);
    CHECK(r.exit_code == 1);
    CHECK(r.err.find("positives") != std::string::npos);
}

TEST_CASE("sample: empty plan gives an empty file; seeded plan matches the oracle") {
    TempDir dir;
    auto args = sample_args(dir);
    args.insert(args.end(), {"--n-pos", "0", "--n-neg", "0"});
    auto r = run(args);
    CHECK(r.exit_code == 0);
    CHECK(testutil::read_file(dir / "out/pairs.jsonl").empty());

    args = sample_args(dir);
    args.insert(args.end(), {"--n-pos", "5", "--n-neg", "5", "--seed", "42"});
    CHECK(run(args).exit_code == 0);
    CHECK(testutil::read_file(dir / "out/pairs.jsonl") == testutil::read_file(toy("expected_pairs_seed42_candidate_run.jsonl")));
}

TEST_CASE("config file with flag overrides") {
    TempDir dir;
    nlohmann::json cfg{{"seed", 7},
                       {"output_dir", (dir / "out").string()},
                       {"paths", {{"queries", toy("queries.tsv")}, {"collection", toy("collection.tsv")},
                                  {"qrels", toy("qrels.txt")}, {"candidate_run", toy("candidates.trec")}}},
                       {"sample", {{"n_pos", 1}, {"n_neg", 1}, {"candidate_depth", 2}}}};
    testutil::write_file(dir / "cfg.json", cfg.dump());
    auto r = run(cli({"--config", (dir / "cfg.json").string(), "sample", "--n-pos", "4", "--n-neg", "3"}));
    CHECK(r.exit_code == 0);
    CHECK(testutil::read_file(dir / "out/pairs.jsonl") == testutil::read_file(toy("expected_pairs_seed7_depth2.jsonl")));
    auto manifest = nlohmann::json::parse(testutil::read_file(dir / "out/manifest.json"));
    CHECK(manifest["sample"]["config"]["sample"]["n_pos"] == 4);
    CHECK(manifest["sample"]["config"]["seed"] == 7);
}

TEST_CASE("augment --dry-run prints three prompts and makes no calls") {
    TempDir dir;
    auto args = sample_args(dir);
    args.insert(args.end(), {"--n-pos", "5", "--n-neg", "5"});
    REQUIRE(run(args).exit_code == 0);
    testutil::MockLlmServer llm([](const nlohmann::json&, const std::string&, int) { return testutil::chat_reply("x"); });
    auto r = run(cli({"augment", "--dry-run", "--pairs", (dir / "out/pairs.jsonl").string(), "--base-url",
                      llm.base_url(), "--model", "m", "--output-dir", (dir / "out").string()}));
    CHECK(r.exit_code == 0);
    CHECK(r.out.find("=== prompt 1 ===") != std::string::npos);
    CHECK(r.out.find("=== prompt 3 ===") != std::string::npos);
    CHECK(r.out.find("=== prompt 4 ===") == std::string::npos);
    CHECK(llm.total_calls() == 0);
}

TEST_CASE("augment, export twice, cache-compact") {
    TempDir dir;
    auto args = sample_args(dir);
    args.insert(args.end(), {"--n-pos", "5", "--n-neg", "5"});
    REQUIRE(run(args).exit_code == 0);
    testutil::MockLlmServer llm([](const nlohmann::json&, const std::string&, int) {
        return testutil::chat_reply("I cannot tell.");
    });
    const auto out = (dir / "out").string();
    auto aug = run(cli({"augment", "--pairs", out + "/pairs.jsonl", "--base-url", llm.base_url(), "--api-key-env", "",
                        "--model", "m", "--max-retries", "1", "--output-dir", out, "--cache-dir", (dir / "cache").string()}));
    CHECK(aug.exit_code == 0);
    auto stats = nlohmann::json::parse(testutil::read_file(dir / "out/augmented.stats.json"));
    CHECK(stats["total"] == 10);
    CHECK(stats["fallback_label_only"] == 10);
    CHECK(stats["retries"] == 10);

    for (const char* mode : {"--with-explanations", "--labels-only"}) {
        auto e1 = run(cli({"export", mode, "--augmented", out + "/augmented.jsonl", "--output-dir", out}));
        CHECK(e1.exit_code == 0);
    }
    const auto labels = testutil::read_file(dir / "out/finetune_labels_only.jsonl");
    CHECK(testutil::read_lines(dir / "out/finetune_labels_only.jsonl").size() == 10);
    CHECK(run(cli({"export", "--labels-only", "--augmented", out + "/augmented.jsonl", "--output-dir", out})).exit_code == 0);
    CHECK(testutil::read_file(dir / "out/finetune_labels_only.jsonl") == labels);

    const auto cache = dir / "cache/generations.jsonl";
    {
        std::ofstream app(cache, std::ios::app);
        app << "{\"key\":\"torn";
    }
    auto c = run(cli({"cache-compact", "--file", cache.string()}));
    CHECK(c.exit_code == 0);
    CHECK(testutil::read_lines(cache).size() == 20);
}

TEST_CASE("eval and report print tables") {
    TempDir dir;
    auto ev = run(cli({"eval", "--run", testutil::fixture("ndcg_parity/run.trec").string(), "--qrels",
                       testutil::fixture("ndcg_parity/qrels.txt").string(), "--dataset", "parity", "--output-dir",
                       (dir / "out").string()}));
    CHECK(ev.exit_code == 0);
    CHECK(ev.out.find("ndcg_cut_10") != std::string::npos);
    CHECK(std::filesystem::exists(dir / "out/parity.ndcg_cut_10.json"));

    auto rep = run(cli({"report", "--input", (testutil::source_dir() / "data/fixtures/table3.json").string(),
                        "--output-dir", (dir / "out").string()}));
    CHECK(rep.exit_code == 0);
    CHECK(rep.out.find("Avg ZS") != std::string::npos);
    auto report = nlohmann::json::parse(testutil::read_file(dir / "out/report.json"));
    CHECK(report["improvement"]["mean_delta_points"] == 1.4);
}
