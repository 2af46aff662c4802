#include "pipeline.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "digest.hpp"
#include "error.hpp"
#include "text.hpp"

namespace exaranker {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

// Reads one config section, rejecting keys it does not know.
class Section {
public:
    Section(const json& doc, std::string name) : doc_(doc), name_(std::move(name)) {
        if (!doc_.is_object()) throw ConfigError(label() + " must be an object");
    }

    template <typename T>
    void read(std::string_view key, T& out) {
        seen_.emplace(key);
        auto it = doc_.find(key);
        if (it == doc_.end() || it->is_null()) return;
        try {
            out = it->get<T>();
        } catch (const json::exception&) {
            throw ConfigError(label(key) + " has the wrong type");
        }
    }

    void read_path(std::string_view key, std::optional<fs::path>& out) {
        std::string s;
        read(key, s);
        if (!s.empty()) out = fs::path(s);
    }

    void read_ms(std::string_view key, std::chrono::milliseconds& out) {
        std::int64_t ms = out.count();
        read(key, ms);
        if (ms < 0) throw ConfigError(label(key) + " must be >= 0");
        out = std::chrono::milliseconds(ms);
    }

    const json* sub(std::string_view key) {
        seen_.emplace(key);
        auto it = doc_.find(key);
        return it == doc_.end() || it->is_null() ? nullptr : &*it;
    }

    void finish() const {
        for (const auto& [key, value] : doc_.items())
            if (!seen_.contains(key)) throw ConfigError("unknown config key '" + label(key) + "'");
    }

    std::string label(std::string_view key = {}) const {
        std::string out = name_;
        if (!key.empty()) out += (out.empty() ? "" : ".") + std::string(key);
        return out.empty() ? "config" : out;
    }

private:
    const json& doc_;
    std::string name_;
    std::unordered_set<std::string> seen_;
};

ordered_json optional_path(const std::optional<fs::path>& p) {
    return p ? ordered_json(p->generic_string()) : ordered_json(nullptr);
}

void write_file_atomic(const fs::path& path, std::string_view bytes) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + tmp.string());
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw IoError("failed writing " + tmp.string());
    }
    fs::rename(tmp, path);
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

json read_json(const fs::path& path) {
    try {
        return json::parse(read_file(path));
    } catch (const json::parse_error& e) {
        throw ConfigError(path.string() + ": invalid JSON: " + e.what());
    }
}

// Required input: configured and present. The message names the flag and the config key.
const fs::path& require(const std::optional<fs::path>& p, std::string_view flag, std::string_view key) {
    if (!p) throw ConfigError("missing input: pass --" + std::string(flag) + " or set paths." + std::string(key));
    if (!fs::is_regular_file(*p))
        throw ConfigError("--" + std::string(flag) + ": file not found: " + p->string());
    return *p;
}

void check_optional(const std::optional<fs::path>& p, std::string_view flag) {
    if (p && !fs::is_regular_file(*p)) throw ConfigError("--" + std::string(flag) + ": file not found: " + p->string());
}

ordered_json file_record(const fs::path& p) {
    return ordered_json{{"path", p.generic_string()}, {"sha256", sha256_file(p)}};
}

std::string ndcg_label(int k) { return "ndcg_cut_" + std::to_string(k); }

}  // namespace

// ---------------------------------------------------------------------------

PipelineConfig PipelineConfig::from_json(const json& doc) {
    PipelineConfig c;
    Section top(doc, "");
    std::string output_dir = c.output_dir.string(), cache_dir = c.cache_dir.string();
    top.read("seed", c.seed);
    top.read("output_dir", output_dir);
    top.read("cache_dir", cache_dir);
    c.output_dir = output_dir;
    c.cache_dir = cache_dir;

    if (const json* p = top.sub("paths")) {
        Section s(*p, "paths");
        s.read_path("queries", c.paths.queries);
        s.read_path("collection", c.paths.collection);
        s.read_path("qrels", c.paths.qrels);
        s.read_path("candidate_run", c.paths.candidate_run);
        s.read_path("template", c.paths.prompt_template);
        s.read_path("shots", c.paths.shots);
        s.read_path("pairs", c.paths.pairs);
        s.read_path("augmented", c.paths.augmented);
        s.read_path("run", c.paths.run);
        s.read_path("report_input", c.paths.report_input);
        s.read_path("output", c.paths.output);
        s.finish();
    }
    if (const json* p = top.sub("sample")) {
        Section s(*p, "sample");
        std::string source(to_string(c.sample.negative_source));
        s.read("n_pos", c.sample.n_pos);
        s.read("n_neg", c.sample.n_neg);
        s.read("negative_source", source);
        s.read("positive_threshold", c.sample.positive_threshold);
        s.read("candidate_depth", c.sample.candidate_depth);
        s.finish();
        c.sample.negative_source = negative_source_from_string(source);
    }
    if (const json* p = top.sub("generation")) {
        Section s(*p, "generation");
        s.read("model_id", c.generation.model_id);
        s.read("temperature", c.generation.temperature);
        s.read("max_output_tokens", c.generation.max_output_tokens);
        s.read("stop", c.generation.stop_sequences);
        s.finish();
    }
    if (const json* p = top.sub("llm")) {
        Section s(*p, "llm");
        s.read("base_url", c.llm.base_url);
        s.read("api_key_env", c.llm.api_key_env);
        s.read_ms("timeout_ms", c.llm.timeout);
        s.read("max_retries", c.llm.retry.max_retries);
        s.read_ms("backoff_ms", c.llm.retry.base_backoff);
        s.read_ms("max_backoff_ms", c.llm.retry.max_backoff);
        s.read("max_in_flight", c.llm_max_in_flight);
        s.finish();
    }
    if (const json* p = top.sub("augment")) {
        Section s(*p, "augment");
        std::string fallback = c.augment.fallback_label_only ? "label_only" : "fail";
        s.read("max_retries", c.augment.max_retries);
        s.read("fallback", fallback);
        s.read("nudge_format", c.augment.nudge_format);
        s.read("dry_run_prompts", c.dry_run_prompts);
        s.finish();
        if (fallback != "label_only" && fallback != "fail")
            throw ConfigError("augment.fallback must be 'label_only' or 'fail'");
        c.augment.fallback_label_only = fallback == "label_only";
    }
    if (const json* p = top.sub("export")) {
        Section s(*p, "export");
        s.read("with_explanations", c.with_explanations);
        s.read("input_format", c.input_format);
        s.finish();
    }
    if (const json* p = top.sub("scorer")) {
        Section s(*p, "scorer");
        std::string on_failure = c.scorer.on_failure == ScoreFailurePolicy::abort_query ? "abort" : "sentinel";
        s.read("base_url", c.scorer.base_url);
        s.read_ms("timeout_ms", c.scorer.timeout);
        s.read("max_in_flight", c.scorer.max_in_flight);
        s.read("batch_size", c.scorer.batch_size);
        s.read("max_retries", c.scorer.retry.max_retries);
        s.read_ms("backoff_ms", c.scorer.retry.base_backoff);
        s.read_ms("max_backoff_ms", c.scorer.retry.max_backoff);
        s.read("on_failure", on_failure);
        s.read("depth", c.rerank_depth);
        s.read("include_title", c.include_title);
        s.read("tag", c.run_tag);
        s.finish();
        c.scorer.on_failure = score_failure_policy_from_string(on_failure);
    }
    if (const json* p = top.sub("eval")) {
        Section s(*p, "eval");
        s.read("k", c.eval.k);
        s.read("dataset_id", c.dataset_id);
        s.read("validation_dataset_id", c.eval.validation_dataset_id);
        s.read("zero_shot_dataset_ids", c.eval.zero_shot_dataset_ids);
        s.finish();
    }
    top.finish();
    return c;
}

ordered_json PipelineConfig::to_json() const {
    ordered_json doc;
    doc["seed"] = seed;
    doc["output_dir"] = output_dir.generic_string();
    doc["cache_dir"] = cache_dir.generic_string();
    doc["paths"] = ordered_json{{"queries", optional_path(paths.queries)},
                                {"collection", optional_path(paths.collection)},
                                {"qrels", optional_path(paths.qrels)},
                                {"candidate_run", optional_path(paths.candidate_run)},
                                {"template", optional_path(paths.prompt_template)},
                                {"shots", optional_path(paths.shots)},
                                {"pairs", optional_path(paths.pairs)},
                                {"augmented", optional_path(paths.augmented)},
                                {"run", optional_path(paths.run)},
                                {"report_input", optional_path(paths.report_input)},
                                {"output", optional_path(paths.output)}};
    doc["sample"] = ordered_json{{"n_pos", sample.n_pos},
                                 {"n_neg", sample.n_neg},
                                 {"negative_source", to_string(sample.negative_source)},
                                 {"positive_threshold", sample.positive_threshold},
                                 {"candidate_depth", sample.candidate_depth}};
    doc["generation"] = ordered_json{{"model_id", generation.model_id},
                                     {"temperature", generation.temperature},
                                     {"max_output_tokens", generation.max_output_tokens},
                                     {"stop", generation.stop_sequences}};
    doc["llm"] = ordered_json{{"base_url", llm.base_url},
                              {"api_key_env", llm.api_key_env},
                              {"timeout_ms", llm.timeout.count()},
                              {"max_retries", llm.retry.max_retries},
                              {"backoff_ms", llm.retry.base_backoff.count()},
                              {"max_backoff_ms", llm.retry.max_backoff.count()},
                              {"max_in_flight", llm_max_in_flight}};
    doc["augment"] = ordered_json{{"max_retries", augment.max_retries},
                                  {"fallback", augment.fallback_label_only ? "label_only" : "fail"},
                                  {"nudge_format", augment.nudge_format},
                                  {"dry_run_prompts", dry_run_prompts}};
    doc["export"] = ordered_json{{"with_explanations", with_explanations}, {"input_format", input_format}};
    doc["scorer"] = ordered_json{{"base_url", scorer.base_url},
                                 {"timeout_ms", scorer.timeout.count()},
                                 {"max_in_flight", scorer.max_in_flight},
                                 {"batch_size", scorer.batch_size},
                                 {"max_retries", scorer.retry.max_retries},
                                 {"backoff_ms", scorer.retry.base_backoff.count()},
                                 {"max_backoff_ms", scorer.retry.max_backoff.count()},
                                 {"on_failure", scorer.on_failure == ScoreFailurePolicy::abort_query ? "abort" : "sentinel"},
                                 {"depth", rerank_depth},
                                 {"include_title", include_title},
                                 {"tag", run_tag}};
    doc["eval"] = ordered_json{{"k", eval.k},
                               {"dataset_id", dataset_id},
                               {"validation_dataset_id", eval.validation_dataset_id},
                               {"zero_shot_dataset_ids", eval.zero_shot_dataset_ids}};
    return doc;
}

// ---------------------------------------------------------------------------

Pipeline::Pipeline(PipelineConfig config) : config_(std::move(config)) {
    if (config_.output_dir.empty()) throw ConfigError("output_dir must not be empty");
    if (config_.sample.positive_threshold < 1) throw ConfigError("sample.positive_threshold must be >= 1");
    if (config_.augment.max_retries < 0) throw ConfigError("augment.max_retries must be >= 0");
    if (config_.llm_max_in_flight == 0) throw ConfigError("llm.max_in_flight must be >= 1");
    if (config_.scorer.max_in_flight == 0) throw ConfigError("scorer.max_in_flight must be >= 1");
    if (config_.scorer.batch_size == 0) throw ConfigError("scorer.batch_size must be >= 1");
    if (config_.llm.retry.max_retries < 0 || config_.scorer.retry.max_retries < 0)
        throw ConfigError("max_retries must be >= 0");
    if (text::has_whitespace(config_.run_tag) || config_.run_tag.empty())
        throw ConfigError("scorer.tag must be a non-empty token without whitespace");
    config_.eval.validate();
    config_.augment.max_in_flight = config_.llm_max_in_flight;
}

fs::path Pipeline::output_path(const std::string& default_name) const {
    return config_.paths.output ? *config_.paths.output : config_.output_dir / default_name;
}

void Pipeline::write_manifest(const std::string& stage, const ordered_json& inputs, const ordered_json& outputs) const {
    const fs::path path = config_.output_dir / "manifest.json";
    ordered_json manifest = ordered_json::object();
    if (fs::is_regular_file(path)) {
        try {
            manifest = ordered_json::parse(read_file(path));
        } catch (const json::parse_error&) {
            text::warn("replacing unreadable " + path.string());
        }
        if (!manifest.is_object()) manifest = ordered_json::object();
    }
    manifest[stage] = ordered_json{{"config", config_.to_json()}, {"inputs", inputs}, {"outputs", outputs}};
    write_file_atomic(path, manifest.dump(2) + "\n");
}

namespace {

struct PromptAssets {
    PromptTemplate tpl;
    std::vector<FewShotExample> shots;
};

PromptAssets load_prompt_assets(const PipelineConfig& c, ordered_json& inputs) {
    check_optional(c.paths.prompt_template, "template");
    check_optional(c.paths.shots, "shots");
    PromptTemplate tpl = c.paths.prompt_template ? PromptTemplate::load(*c.paths.prompt_template)
                                                 : PromptTemplate::default_template();
    std::vector<FewShotExample> shots;
    if (c.paths.shots) {
        shots = load_shots(*c.paths.shots, tpl.vocabulary());
    } else {
        shots = default_shots();
        for (const auto& s : shots)
            if (!tpl.vocabulary().label_of(s.label))
                throw ConfigError("built-in shots use labels outside the template vocabulary; pass --shots");
    }
    if (c.paths.prompt_template) inputs["template"] = file_record(*c.paths.prompt_template);
    if (c.paths.shots) inputs["shots"] = file_record(*c.paths.shots);
    return {std::move(tpl), std::move(shots)};
}

}  // namespace

ordered_json Pipeline::sample() {
    const auto& c = config_;
    const bool need_run = c.sample.n_neg > 0 && c.sample.negative_source == NegativeSource::candidate_run;
    const fs::path& queries_path = require(c.paths.queries, "queries", "queries");
    const fs::path& collection_path = require(c.paths.collection, "collection", "collection");
    const fs::path& qrels_path = require(c.paths.qrels, "qrels", "qrels");
    if (need_run) require(c.paths.candidate_run, "candidate-run", "candidate_run");

    auto queries = load_queries(queries_path);
    Qrels qrels = load_qrels(qrels_path);
    std::vector<TrecRunEntry> run;
    if (need_run) run = load_run(*c.paths.candidate_run, RunCheck::lenient);

    SamplePlan plan = c.sample;
    plan.seed = c.seed;
    SampleInputs in{queries, [collection_path] { return open_collection(collection_path); }, &qrels, run};
    auto pairs = sample_pairs(in, plan);

    ordered_json inputs{{"queries", file_record(queries_path)},
                        {"collection", file_record(collection_path)},
                        {"qrels", file_record(qrels_path)}};
    if (need_run) inputs["candidate_run"] = file_record(*c.paths.candidate_run);

    const fs::path out = output_path("pairs.jsonl");
    fs::path meta_path = out;
    meta_path.replace_extension(".meta.json");
    std::ostringstream body;
    write_pairs_jsonl(pairs, body);
    write_file_atomic(out, body.str());

    std::size_t n_pos = 0;
    for (const auto& p : pairs) n_pos += p.label == Relevance::relevant;
    ordered_json meta{{"n_pos", n_pos},
                      {"n_neg", pairs.size() - n_pos},
                      {"seed", plan.seed},
                      {"negative_source", to_string(plan.negative_source)},
                      {"positive_threshold", plan.positive_threshold},
                      {"candidate_depth", plan.candidate_depth},
                      {"prng", "xoshiro256** seeded by splitmix64"},
                      {"inputs", inputs}};
    write_file_atomic(meta_path, meta.dump(2) + "\n");

    ordered_json outputs{{"pairs", file_record(out)}, {"meta", file_record(meta_path)}};
    write_manifest("sample", inputs, outputs);
    return ordered_json{{"stage", "sample"}, {"output", out.generic_string()}, {"pairs", pairs.size()},
                        {"positives", n_pos}, {"negatives", pairs.size() - n_pos}};
}

ordered_json Pipeline::augment(bool dry_run) {
    const auto& c = config_;
    const fs::path& pairs_path = require(c.paths.pairs, "pairs", "pairs");
    ordered_json inputs{{"pairs", file_record(pairs_path)}};
    auto assets = load_prompt_assets(c, inputs);
    std::vector<LabeledPair> pairs;
    {
        auto in = open_input(pairs_path);
        pairs = read_pairs_jsonl(in);
    }

    if (dry_run) {
        ordered_json prompts = ordered_json::array();
        for (std::size_t i = 0; i < pairs.size() && i < c.dry_run_prompts; ++i)
            prompts.push_back(render_prompt(assets.tpl, assets.shots, pairs[i]));
        return ordered_json{{"stage", "augment"}, {"dry_run", true}, {"prompts", prompts}};
    }

    if (c.llm.base_url.empty()) throw ConfigError("missing LLM endpoint: pass --base-url or set llm.base_url");
    if (c.generation.model_id.empty()) throw ConfigError("missing model: pass --model or set generation.model_id");
    c.generation.validate();

    auto cache = std::make_shared<ResponseCache>(cache_file());
    LlmClient client(c.llm, cache);
    auto [examples, stats] = exaranker::augment(pairs, assets.tpl, assets.shots, client, c.generation, c.augment);

    const fs::path out = output_path("augmented.jsonl");
    fs::path stats_path = out;
    stats_path.replace_extension(".stats.json");
    std::ostringstream body;
    write_augmented_jsonl(examples, body);
    write_file_atomic(out, body.str());
    write_file_atomic(stats_path, stats.to_json().dump(2) + "\n");

    ordered_json outputs{{"augmented", file_record(out)}};
    write_manifest("augment", inputs, outputs);
    return ordered_json{{"stage", "augment"}, {"output", out.generic_string()}, {"stats", stats.to_json()}};
}

ordered_json Pipeline::export_finetune() {
    const auto& c = config_;
    const fs::path& augmented_path = require(c.paths.augmented, "augmented", "augmented");
    ordered_json inputs{{"augmented", file_record(augmented_path)}};
    check_optional(c.paths.prompt_template, "template");
    PromptTemplate tpl = c.paths.prompt_template ? PromptTemplate::load(*c.paths.prompt_template)
                                                 : PromptTemplate::default_template();
    if (c.paths.prompt_template) inputs["template"] = file_record(*c.paths.prompt_template);
    FormatString input_format = make_input_format(c.input_format);

    std::vector<ExplainedExample> examples;
    {
        auto in = open_input(augmented_path);
        examples = read_augmented_jsonl(in);
    }
    const fs::path out =
        output_path(c.with_explanations ? "finetune_explanations.jsonl" : "finetune_labels_only.jsonl");
    std::ostringstream body;
    auto stats = exaranker::export_finetune(examples, c.with_explanations, input_format, tpl.vocabulary(), body);
    write_file_atomic(out, body.str());

    ordered_json outputs{{"finetune", file_record(out)}};
    write_manifest(c.with_explanations ? "export_explanations" : "export_labels_only", inputs, outputs);
    return ordered_json{{"stage", "export"},
                        {"output", out.generic_string()},
                        {"written", stats.written},
                        {"with_explanation", stats.with_explanation},
                        {"label_only", stats.label_only},
                        {"excluded_failed", stats.excluded_failed}};
}

ordered_json Pipeline::rerank() {
    const auto& c = config_;
    const fs::path& queries_path = require(c.paths.queries, "queries", "queries");
    const fs::path& collection_path = require(c.paths.collection, "collection", "collection");
    const fs::path& run_path = require(c.paths.candidate_run, "candidate-run", "candidate_run");
    if (c.scorer.base_url.empty()) throw ConfigError("missing scorer endpoint: pass --scorer-url or set scorer.base_url");

    auto sets = candidates_from_run(load_run(run_path, RunCheck::lenient), c.rerank_depth);
    std::unordered_map<std::string, Query> queries;
    for (auto& q : load_queries(queries_path)) queries.emplace(q.qid, std::move(q));
    std::unordered_map<std::string, Passage> passages;
    for (const auto& s : sets)
        for (const auto& cand : s.candidates) passages.emplace(cand.docid, Passage{});
    {
        // Keep only the candidates' passages; the collection may be large.
        std::unordered_set<std::string> filled;
        auto reader = open_collection(collection_path);
        while (auto p = reader->next()) {
            auto it = passages.find(p->docid);
            if (it == passages.end()) continue;
            if (!filled.insert(p->docid).second) throw InvariantError("duplicate docid '" + p->docid + "' in collection");
            it->second = std::move(*p);
        }
        std::vector<std::string> absent;
        for (auto it = passages.begin(); it != passages.end();) {
            if (filled.contains(it->first)) {
                ++it;
            } else {
                absent.push_back(it->first);
                it = passages.erase(it);
            }
        }
        if (!absent.empty()) {
            std::sort(absent.begin(), absent.end());
            throw InsufficientDataError(std::to_string(absent.size()) + " candidate docids missing from the collection, first: " +
                                        absent.front());
        }
    }

    ScorerClient scorer(c.scorer);
    if (!scorer.healthy()) throw NetworkError("scorer at " + c.scorer.base_url + " failed its /healthz check", false);
    RerankInputs in{sets, &queries, &passages, c.include_title, c.run_tag};
    auto run = rerank_all(scorer, in);

    const fs::path out = output_path("run.trec");
    std::ostringstream body;
    write_run(run, body);
    write_file_atomic(out, body.str());

    ordered_json inputs{{"queries", file_record(queries_path)},
                        {"collection", file_record(collection_path)},
                        {"candidate_run", file_record(run_path)}};
    write_manifest("rerank", inputs, ordered_json{{"run", file_record(out)}});
    return ordered_json{{"stage", "rerank"},
                        {"output", out.generic_string()},
                        {"queries", sets.size()},
                        {"entries", run.size()},
                        {"requests", scorer.requests()},
                        {"retries", scorer.retries()},
                        {"sentinel_scores", scorer.sentinel_scores()}};
}

ordered_json Pipeline::eval() {
    const auto& c = config_;
    const fs::path& run_path = require(c.paths.run, "run", "run");
    const fs::path& qrels_path = require(c.paths.qrels, "qrels", "qrels");
    auto run = load_run(run_path, RunCheck::lenient);
    Qrels qrels = load_qrels(qrels_path);
    auto report = ndcg_at_k(run, qrels, c.eval.k, c.dataset_id);

    const std::string stem = c.dataset_id.empty() ? std::string("eval") : c.dataset_id;
    const fs::path out = output_path(stem + "." + ndcg_label(c.eval.k) + ".json");
    write_file_atomic(out, report.to_json().dump(2) + "\n");

    const std::string metric = ndcg_label(c.eval.k);
    const std::string name = c.dataset_id.empty() ? std::string("-") : c.dataset_id;
    const std::size_t w = std::max<std::size_t>(name.size(), 7);
    std::string table;
    auto pad = [](std::string s, std::size_t width) {
        s.resize(std::max(width, s.size()), ' ');
        return s;
    };
    table += pad("dataset", w) + "  " + pad("queries", 7) + "  " + metric + "\n";
    table += pad(name, w) + "  " + pad(std::to_string(report.n_queries), 7) + "  " + text::format_fixed(report.mean, 4) + "\n";

    ordered_json inputs{{"run", file_record(run_path)}, {"qrels", file_record(qrels_path)}};
    write_manifest("eval", inputs, ordered_json{{"report", file_record(out)}});
    return ordered_json{{"stage", "eval"}, {"output", out.generic_string()}, {"mean", report.mean},
                        {"n_queries", report.n_queries}, {"table", table}};
}

ordered_json Pipeline::report() {
    const auto& c = config_;
    const fs::path& input_path = require(c.paths.report_input, "input", "report_input");
    ordered_json inputs{{"report_input", file_record(input_path)}};
    const json doc = read_json(input_path);
    if (!doc.is_object()) throw ConfigError(input_path.string() + ": report input must be a JSON object");
    for (const auto& [key, value] : doc.items())
        if (key != "rows" && key != "improvement" && key != "checkpoints")
            throw ConfigError(input_path.string() + ": unknown key '" + key + "'");

    const fs::path base = input_path.parent_path();
    auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : base / p; };

    std::vector<ComparisonRow> rows;
    const json rows_doc = doc.value("rows", json::array());
    if (!rows_doc.is_array()) throw ConfigError("rows must be an array");
    for (const auto& r : rows_doc) {
        json row = r;
        // "reports": {dataset: path of a MetricReport JSON} fills means from eval outputs.
        json reports = json::object();
        if (row.is_object() && row.contains("reports")) {
            reports = row["reports"];
            row.erase("reports");
        }
        ComparisonRow parsed = ComparisonRow::from_json(row);
        if (!reports.is_object()) throw ConfigError("row reports must map dataset ids to report files");
        for (const auto& [dataset, p] : reports.items()) {
            const fs::path rp = resolve(p.get<std::string>());
            auto m = MetricReport::from_json(read_json(rp));
            if (m.k != c.eval.k)
                throw ConfigError(rp.string() + ": report is at k=" + std::to_string(m.k) + ", expected " +
                                  std::to_string(c.eval.k));
            parsed.means[dataset] = m.mean;
            inputs["report:" + dataset + ":" + parsed.model_name] = file_record(rp);
        }
        rows.push_back(std::move(parsed));
    }
    rows = with_attempt_means(rows, c.eval);

    ordered_json result;
    ordered_json rows_json = ordered_json::array();
    for (const auto& r : rows) rows_json.push_back(r.to_json(c.eval));
    result["rows"] = rows_json;

    if (auto it = doc.find("improvement"); it != doc.end()) {
        if (!it->is_object() || !it->contains("a") || !it->contains("b") || !(*it)["a"].is_string() ||
            !(*it)["b"].is_string())
            throw ConfigError("improvement must be {\"a\": model, \"b\": model}");
        const std::string a = (*it)["a"].get<std::string>(), b = (*it)["b"].get<std::string>();
        std::vector<ComparisonRow> rows_a, rows_b;
        for (const auto& r : rows) {
            if (r.attempt) continue;
            if (r.model_name == a) rows_a.push_back(r);
            if (r.model_name == b) rows_b.push_back(r);
        }
        if (rows_a.empty() || rows_b.empty()) throw ConfigError("improvement: no rows for '" + a + "' or '" + b + "'");
        auto imp = improvement_report(rows_a, rows_b, c.eval);
        ordered_json j = imp.to_json();
        j["a"] = a;
        j["b"] = b;
        result["improvement"] = j;
    }
    if (auto it = doc.find("checkpoints"); it != doc.end()) {
        std::vector<CheckpointScore> history;
        for (const auto& cp : *it) {
            CheckpointScore s{cp.at("epoch").get<int>(), 0.0};
            if (cp.contains("report"))
                s.validation_ndcg = MetricReport::from_json(read_json(resolve(cp.at("report").get<std::string>()))).mean;
            else
                s.validation_ndcg = cp.at("validation_ndcg").get<double>();
            history.push_back(s);
        }
        ordered_json j = ordered_json::array();
        for (const auto& s : history) j.push_back({{"epoch", s.epoch}, {"validation_ndcg", s.validation_ndcg}});
        result["checkpoints"] = j;
        result["selected_epoch"] = select_checkpoint(history);
    }

    const std::string table = comparison_table(rows, c.eval);
    const fs::path out = output_path("report.json");
    fs::path table_path = out, csv_path = out;
    table_path.replace_extension(".txt");
    csv_path.replace_extension(".csv");
    write_file_atomic(out, result.dump(2) + "\n");
    write_file_atomic(table_path, table);
    write_file_atomic(csv_path, comparison_csv(rows, c.eval));

    write_manifest("report", inputs,
                   ordered_json{{"report", file_record(out)}, {"table", file_record(table_path)}, {"csv", file_record(csv_path)}});
    ordered_json summary{{"stage", "report"}, {"output", out.generic_string()}, {"rows", rows.size()}, {"table", table}};
    if (result.contains("improvement")) summary["mean_delta"] = result["improvement"]["mean_delta"];
    if (result.contains("selected_epoch")) summary["selected_epoch"] = result["selected_epoch"];
    return summary;
}

// Hand-written demonstrations in the label-then-explanation format. Keep in
// sync with data/shots/explain_v1.json.
std::vector<FewShotExample> default_shots() {
    return {
        {"how long does it take to boil an egg",
         "For a hard boiled egg, place the eggs in boiling water and cook them for 10 to 12 minutes, then cool them "
         "in ice water before peeling.",
         "true",
         "The passage gives the cooking time for a hard boiled egg, 10 to 12 minutes, which answers the question."},
        {"what is the capital of australia",
         "Sydney is the largest city in Australia and is known for its opera house, harbour bridge and beaches.",
         "false",
         "The passage describes Sydney but never names the capital, which is Canberra, so it does not answer the "
         "question."},
        {"symptoms of vitamin d deficiency",
         "Low vitamin D levels can cause fatigue, bone pain, muscle weakness and frequent infections, and in children "
         "severe deficiency leads to rickets.",
         "true",
         "The passage lists several symptoms of vitamin D deficiency, which is what the query asks for."},
        {"who invented the telephone",
         "The telephone network in the United States grew quickly in the early twentieth century as rural "
         "cooperatives built their own lines.",
         "false",
         "The passage is about the growth of telephone networks and does not say who invented the telephone."},
    };
}

}  // namespace exaranker
