// exaranker: command-line front end over libexaranker.

#include <cstdio>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "exaranker/exaranker.h"

namespace {

using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct Globals {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> cache_dir;
    std::optional<std::string> output_dir;
    std::optional<std::string> base_url;
    std::optional<std::string> api_key_env;
};

// Flag values layered over the config file; unset flags leave the file's value.
struct Overrides {
    json doc = json::object();

    template <typename T>
    void set(const std::string& section, const std::string& key, const std::optional<T>& value) {
        if (value) doc[section][key] = *value;
    }
    template <typename T>
    void set_top(const std::string& key, const std::optional<T>& value) {
        if (value) doc[key] = *value;
    }
};

void merge(json& base, const json& patch) {
    for (const auto& [key, value] : patch.items()) {
        if (value.is_object() && base.contains(key) && base[key].is_object())
            merge(base[key], value);
        else
            base[key] = value;
    }
}

int exit_code_for(exr_status status) {
    return status == EXR_ERR_CONFIG || status == EXR_ERR_INVALID_ARGUMENT ? kExitUsage : kExitRuntime;
}

int report_error(exr_status status) {
    std::cerr << "exaranker: " << exr_status_name(status) << " error: " << exr_last_error() << "\n";
    return exit_code_for(status);
}

class Command {
public:
    Command(const Globals& globals, exr_stage stage) : globals_(globals), stage_(stage) {}

    Overrides overrides;

    int run() const {
        json doc = json::object();
        if (!globals_.config.empty()) {
            std::ifstream in(globals_.config);
            if (!in) {
                std::cerr << "exaranker: --config: cannot open " << globals_.config << "\n";
                return kExitUsage;
            }
            try {
                doc = json::parse(in);
            } catch (const json::parse_error& e) {
                std::cerr << "exaranker: --config: invalid JSON: " << e.what() << "\n";
                return kExitUsage;
            }
            if (!doc.is_object()) {
                std::cerr << "exaranker: --config: expected a JSON object\n";
                return kExitUsage;
            }
        }
        Overrides g;
        g.set_top("seed", globals_.seed);
        g.set_top("cache_dir", globals_.cache_dir);
        g.set_top("output_dir", globals_.output_dir);
        g.set("llm", "base_url", globals_.base_url);
        g.set("llm", "api_key_env", globals_.api_key_env);
        merge(doc, g.doc);
        merge(doc, overrides.doc);

        exr_pipeline* pipeline = nullptr;
        if (exr_status st = exr_pipeline_create(doc.dump().c_str(), &pipeline); st != EXR_OK) return report_error(st);
        char* summary = nullptr;
        exr_status st = exr_pipeline_run(pipeline, stage_, &summary);
        exr_pipeline_destroy(pipeline);
        if (st != EXR_OK) return report_error(st);

        print(nlohmann::ordered_json::parse(summary));
        exr_string_free(summary);
        return kExitOk;
    }

private:
    void print(const nlohmann::ordered_json& summary) const {
        if (stage_ == EXR_STAGE_AUGMENT_DRY_RUN) {
            const auto& prompts = summary.at("prompts");
            for (std::size_t i = 0; i < prompts.size(); ++i) {
                std::cout << "=== prompt " << i + 1 << " ===\n" << prompts[i].get<std::string>() << "\n";
            }
            return;
        }
        if (summary.contains("table")) {
            std::cout << summary.at("table").get<std::string>();
            nlohmann::ordered_json rest = summary;
            rest.erase("table");
            std::cerr << rest.dump() << "\n";
            return;
        }
        std::cout << summary.dump(2) << "\n";
    }

    const Globals& globals_;
    exr_stage stage_;
};

template <typename T>
void opt(CLI::App* app, const std::string& name, std::optional<T>& target, const std::string& help) {
    app->add_option(name, target, help);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Explanation-augmented reranker data pipeline: sample, augment, export, rerank, eval, report."};
    app.require_subcommand(1);
    app.fallthrough();
    app.set_version_flag("--version", std::string(exr_version()));

    Globals globals;
    app.add_option("--config", globals.config, "JSON config file; flags override its values");
    app.add_option("--seed", globals.seed, "Sampling seed");
    app.add_option("--cache-dir", globals.cache_dir, "Directory of the generation cache");
    app.add_option("--output-dir", globals.output_dir, "Directory for outputs and manifest.json");
    app.add_option("--base-url", globals.base_url, "Chat-completions endpoint base URL");
    app.add_option("--api-key-env", globals.api_key_env, "Environment variable holding the API key");

    // sample
    Command sample(globals, EXR_STAGE_SAMPLE);
    std::optional<std::string> s_queries, s_collection, s_qrels, s_run, s_out, s_source;
    std::optional<std::size_t> s_npos, s_nneg, s_depth;
    std::optional<int> s_threshold;
    auto* sub_sample = app.add_subcommand("sample", "Draw labeled query-passage pairs");
    opt(sub_sample, "--queries", s_queries, "Queries (TSV or BEIR queries.jsonl)");
    opt(sub_sample, "--collection", s_collection, "Collection (TSV or BEIR corpus.jsonl)");
    opt(sub_sample, "--qrels", s_qrels, "Relevance judgments");
    opt(sub_sample, "--candidate-run", s_run, "TREC run supplying negatives");
    opt(sub_sample, "--n-pos", s_npos, "Number of positive pairs");
    opt(sub_sample, "--n-neg", s_nneg, "Number of negative pairs");
    sub_sample->add_option("--negative-source", s_source, "Where negatives come from")
        ->check(CLI::IsMember({"candidate_run", "random_collection"}));
    opt(sub_sample, "--positive-threshold", s_threshold, "Minimum grade counted as relevant");
    opt(sub_sample, "--candidate-depth", s_depth, "Candidates per query considered for negatives (0 = all)");
    opt(sub_sample, "--out", s_out, "Output JSONL (default OUTPUT_DIR/pairs.jsonl)");

    // augment
    Command augment(globals, EXR_STAGE_AUGMENT);
    std::optional<std::string> a_pairs, a_template, a_shots, a_model, a_fallback, a_out;
    std::optional<double> a_temperature;
    std::optional<int> a_max_tokens, a_retries;
    std::optional<std::size_t> a_in_flight;
    bool a_dry_run = false;
    auto* sub_augment = app.add_subcommand("augment", "Generate explanations for sampled pairs");
    opt(sub_augment, "--pairs", a_pairs, "Sampled pairs JSONL");
    opt(sub_augment, "--template", a_template, "Prompt template JSON (default: built-in)");
    opt(sub_augment, "--shots", a_shots, "Few-shot examples JSON (default: built-in)");
    opt(sub_augment, "--model", a_model, "Model id sent to the endpoint");
    opt(sub_augment, "--temperature", a_temperature, "Sampling temperature (default 0)");
    opt(sub_augment, "--max-output-tokens", a_max_tokens, "Output token cap (default 256)");
    opt(sub_augment, "--max-retries", a_retries, "Re-asks per pair after a bad answer");
    sub_augment->add_option("--fallback", a_fallback, "What to keep when every attempt fails")
        ->check(CLI::IsMember({"label_only", "fail"}));
    opt(sub_augment, "--max-in-flight", a_in_flight, "Concurrent requests");
    sub_augment->add_flag("--dry-run", a_dry_run, "Print the first rendered prompts and exit without network calls");
    opt(sub_augment, "--out", a_out, "Output JSONL (default OUTPUT_DIR/augmented.jsonl)");

    // export
    Command exporter(globals, EXR_STAGE_EXPORT);
    std::optional<std::string> e_augmented, e_template, e_format, e_out;
    bool e_with = false, e_labels = false;
    auto* sub_export = app.add_subcommand("export", "Write seq2seq fine-tuning records");
    opt(sub_export, "--augmented", e_augmented, "Augmented JSONL");
    opt(sub_export, "--template", e_template, "Prompt template JSON, for its label vocabulary");
    opt(sub_export, "--input-format", e_format, "Source template with {query} and {passage}");
    auto* with_flag = sub_export->add_flag("--with-explanations", e_with, "Targets carry the explanation (default)");
    auto* labels_flag = sub_export->add_flag("--labels-only", e_labels, "Targets are the label token only");
    with_flag->excludes(labels_flag);
    opt(sub_export, "--out", e_out, "Output JSONL");

    // rerank
    Command reranker(globals, EXR_STAGE_RERANK);
    std::optional<std::string> r_queries, r_collection, r_run, r_url, r_on_failure, r_tag, r_out;
    std::optional<std::size_t> r_depth, r_batch, r_in_flight;
    bool r_no_title = false;
    auto* sub_rerank = app.add_subcommand("rerank", "Rerank a candidate run with a scoring service");
    opt(sub_rerank, "--queries", r_queries, "Queries (TSV or BEIR queries.jsonl)");
    opt(sub_rerank, "--collection", r_collection, "Collection (TSV or BEIR corpus.jsonl)");
    opt(sub_rerank, "--candidate-run", r_run, "First-stage TREC run");
    opt(sub_rerank, "--scorer-url", r_url, "Scoring service base URL");
    opt(sub_rerank, "--depth", r_depth, "Candidates reranked per query (0 = all, default 100)");
    opt(sub_rerank, "--batch-size", r_batch, "Passages per /score request");
    opt(sub_rerank, "--max-in-flight", r_in_flight, "Concurrent /score requests");
    sub_rerank->add_option("--on-failure", r_on_failure, "Policy for chunks that fail after retries")
        ->check(CLI::IsMember({"abort", "sentinel"}));
    sub_rerank->add_flag("--no-title", r_no_title, "Do not prepend passage titles");
    opt(sub_rerank, "--tag", r_tag, "Run tag");
    opt(sub_rerank, "--out", r_out, "Output run file (default OUTPUT_DIR/run.trec)");

    // eval
    Command evaluator(globals, EXR_STAGE_EVAL);
    std::optional<std::string> v_run, v_qrels, v_dataset, v_out;
    std::optional<int> v_k;
    auto* sub_eval = app.add_subcommand("eval", "nDCG@k of a run against qrels");
    opt(sub_eval, "--run", v_run, "TREC run");
    opt(sub_eval, "--qrels", v_qrels, "Relevance judgments");
    opt(sub_eval, "--k", v_k, "Cutoff (default 10)");
    opt(sub_eval, "--dataset", v_dataset, "Dataset id recorded in the report");
    opt(sub_eval, "--out", v_out, "Output MetricReport JSON");

    // report
    Command reporter(globals, EXR_STAGE_REPORT);
    std::optional<std::string> p_input, p_out;
    std::optional<int> p_k;
    auto* sub_report = app.add_subcommand("report", "Comparison table, CSV and improvement summary");
    opt(sub_report, "--input", p_input, "Report input JSON (rows, improvement, checkpoints)");
    opt(sub_report, "--k", p_k, "Cutoff the metric reports must use (default 10)");
    opt(sub_report, "--out", p_out, "Output JSON; .txt and .csv are written beside it");

    // cache-compact
    std::optional<std::string> c_file;
    auto* sub_compact = app.add_subcommand("cache-compact", "Drop torn lines and duplicates from the generation cache");
    opt(sub_compact, "--file", c_file, "Cache file (default CACHE_DIR/generations.jsonl)");

    for (auto* sub : app.get_subcommands({}))
        sub->footer("Global options (before or after the subcommand): --config, --seed, --cache-dir, --output-dir, "
                    "--base-url, --api-key-env. See exaranker --help.");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    if (sub_sample->parsed()) {
        auto& o = sample.overrides;
        o.set("paths", "queries", s_queries);
        o.set("paths", "collection", s_collection);
        o.set("paths", "qrels", s_qrels);
        o.set("paths", "candidate_run", s_run);
        o.set("paths", "output", s_out);
        o.set("sample", "n_pos", s_npos);
        o.set("sample", "n_neg", s_nneg);
        o.set("sample", "negative_source", s_source);
        o.set("sample", "positive_threshold", s_threshold);
        o.set("sample", "candidate_depth", s_depth);
        return sample.run();
    }
    if (sub_augment->parsed()) {
        Command dry(globals, EXR_STAGE_AUGMENT_DRY_RUN);
        Command& cmd = a_dry_run ? dry : augment;
        auto& o = cmd.overrides;
        o.set("paths", "pairs", a_pairs);
        o.set("paths", "template", a_template);
        o.set("paths", "shots", a_shots);
        o.set("paths", "output", a_out);
        o.set("generation", "model_id", a_model);
        o.set("generation", "temperature", a_temperature);
        o.set("generation", "max_output_tokens", a_max_tokens);
        o.set("augment", "max_retries", a_retries);
        o.set("augment", "fallback", a_fallback);
        o.set("llm", "max_in_flight", a_in_flight);
        return cmd.run();
    }
    if (sub_export->parsed()) {
        auto& o = exporter.overrides;
        o.set("paths", "augmented", e_augmented);
        o.set("paths", "template", e_template);
        o.set("paths", "output", e_out);
        o.set("export", "input_format", e_format);
        if (e_with || e_labels) o.doc["export"]["with_explanations"] = e_with;
        return exporter.run();
    }
    if (sub_rerank->parsed()) {
        auto& o = reranker.overrides;
        o.set("paths", "queries", r_queries);
        o.set("paths", "collection", r_collection);
        o.set("paths", "candidate_run", r_run);
        o.set("paths", "output", r_out);
        o.set("scorer", "base_url", r_url);
        o.set("scorer", "depth", r_depth);
        o.set("scorer", "batch_size", r_batch);
        o.set("scorer", "max_in_flight", r_in_flight);
        o.set("scorer", "on_failure", r_on_failure);
        o.set("scorer", "tag", r_tag);
        if (r_no_title) o.doc["scorer"]["include_title"] = false;
        return reranker.run();
    }
    if (sub_eval->parsed()) {
        auto& o = evaluator.overrides;
        o.set("paths", "run", v_run);
        o.set("paths", "qrels", v_qrels);
        o.set("paths", "output", v_out);
        o.set("eval", "k", v_k);
        o.set("eval", "dataset_id", v_dataset);
        return evaluator.run();
    }
    if (sub_report->parsed()) {
        auto& o = reporter.overrides;
        o.set("paths", "report_input", p_input);
        o.set("paths", "output", p_out);
        o.set("eval", "k", p_k);
        return reporter.run();
    }
    if (sub_compact->parsed()) {
        std::string file = c_file.value_or(globals.cache_dir.value_or(".exaranker-cache") + "/generations.jsonl");
        if (!c_file && !globals.cache_dir && !globals.config.empty()) {
            std::ifstream in(globals.config);
            json doc = json::parse(in, nullptr, false);
            if (doc.is_object() && doc.contains("cache_dir") && doc["cache_dir"].is_string())
                file = doc["cache_dir"].get<std::string>() + "/generations.jsonl";
        }
        std::size_t kept = 0;
        if (exr_status st = exr_cache_compact(file.c_str(), &kept); st != EXR_OK) return report_error(st);
        std::cout << "kept " << kept << " entries in " << file << "\n";
        return kExitOk;
    }
    return kExitUsage;
}
