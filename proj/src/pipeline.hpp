#pragma once

// Pipeline stages driven by one resolved configuration document. Every stage
// writes its outputs under `output_dir` and records the resolved config plus
// SHA-256 digests of its inputs and outputs in `output_dir/manifest.json`.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

#include "augmenter.hpp"
#include "evaluator.hpp"
#include "llm_client.hpp"
#include "reranker.hpp"
#include "sampler.hpp"

namespace exaranker {

struct PipelineConfig {
    struct Paths {
        std::optional<std::filesystem::path> queries;
        std::optional<std::filesystem::path> collection;
        std::optional<std::filesystem::path> qrels;
        std::optional<std::filesystem::path> candidate_run;
        std::optional<std::filesystem::path> prompt_template;
        std::optional<std::filesystem::path> shots;
        std::optional<std::filesystem::path> pairs;
        std::optional<std::filesystem::path> augmented;
        std::optional<std::filesystem::path> run;
        std::optional<std::filesystem::path> report_input;
        /// Overrides the stage's default output file.
        std::optional<std::filesystem::path> output;
    };

    std::filesystem::path output_dir = "out";
    std::filesystem::path cache_dir = ".exaranker-cache";
    std::uint64_t seed = 42;
    Paths paths;

    SamplePlan sample;

    GenerationConfig generation;
    LlmEndpoint llm;
    std::size_t llm_max_in_flight = 8;
    AugmentPolicy augment;
    std::size_t dry_run_prompts = 3;

    bool with_explanations = true;
    std::string input_format{kDefaultInputFormat};

    ScorerEndpoint scorer;
    std::size_t rerank_depth = 100;
    bool include_title = true;
    std::string run_tag = "exaranker";

    EvalConfig eval;
    std::string dataset_id;

    /// Parses a config document; unknown keys and wrongly typed values throw ConfigError.
    static PipelineConfig from_json(const nlohmann::json& doc);
    nlohmann::ordered_json to_json() const;
};

class Pipeline {
public:
    explicit Pipeline(PipelineConfig config);

    const PipelineConfig& config() const noexcept { return config_; }

    /// Each stage returns a JSON summary (output paths, counts, and for `eval`
    /// and `report` the rendered text table under "table").
    nlohmann::ordered_json sample();
    nlohmann::ordered_json augment(bool dry_run);
    nlohmann::ordered_json export_finetune();
    nlohmann::ordered_json rerank();
    nlohmann::ordered_json eval();
    nlohmann::ordered_json report();

    std::filesystem::path cache_file() const { return config_.cache_dir / "generations.jsonl"; }

private:
    std::filesystem::path output_path(const std::string& default_name) const;
    void write_manifest(const std::string& stage, const nlohmann::ordered_json& inputs,
                        const nlohmann::ordered_json& outputs) const;

    PipelineConfig config_;
};

/// Shipped few-shot demonstrations (mirrors data/shots/explain_v1.json).
std::vector<FewShotExample> default_shots();

}  // namespace exaranker
