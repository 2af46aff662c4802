#include "augmenter.hpp"

#include <array>
#include <cctype>
#include <istream>
#include <ostream>

#include "error.hpp"
#include "text.hpp"

namespace exaranker {

namespace {

constexpr std::array<std::string_view, 1> kNudgePlaceholders{"label"};
constexpr std::array<std::string_view, 2> kInputPlaceholders{"query", "passage"};
constexpr std::string_view kExplanationMarker = "explanation:";

/// Drops leading whitespace and separator punctuation, including UTF-8 en/em dashes.
std::string_view strip_separators(std::string_view s) {
    for (;;) {
        s = text::trim(s);
        if (s.empty()) return s;
        const char c = s.front();
        if (c == '.' || c == ',' || c == ':' || c == ';' || c == '-' || c == '!') {
            s.remove_prefix(1);
            continue;
        }
        if (s.starts_with("\xE2\x80\x94") || s.starts_with("\xE2\x80\x93")) {
            s.remove_prefix(3);
            continue;
        }
        return s;
    }
}

bool token_boundary(std::string_view rest) {
    if (rest.empty()) return true;
    const auto c = static_cast<unsigned char>(rest.front());
    return !(std::isalnum(c) || c == '_');
}

AugmentStats::PerLabel& per_label(AugmentStats& stats, Relevance label) {
    return label == Relevance::relevant ? stats.relevant : stats.non_relevant;
}

nlohmann::ordered_json per_label_json(const AugmentStats::PerLabel& p) {
    nlohmann::ordered_json j;
    j["parse_failures"] = p.parse_failures;
    j["label_contradictions"] = p.label_contradictions;
    j["empty_explanations"] = p.empty_explanations;
    j["request_errors"] = p.request_errors;
    return j;
}

}  // namespace

std::string_view to_string(AugmentStatus status) noexcept {
    switch (status) {
        case AugmentStatus::ok: return "ok";
        case AugmentStatus::fallback_label_only: return "fallback_label_only";
        case AugmentStatus::failed: return "failed";
    }
    return "failed";
}

AugmentStatus augment_status_from_string(std::string_view name) {
    if (name == "ok") return AugmentStatus::ok;
    if (name == "fallback_label_only") return AugmentStatus::fallback_label_only;
    if (name == "failed") return AugmentStatus::failed;
    throw ParseError(0, "unknown augmentation status '" + std::string(name) + "'");
}

std::optional<ParsedOutput> parse_llm_output(std::string_view raw, const LabelVocabulary& vocabulary) {
    const std::string_view s = text::trim(raw);
    std::optional<Relevance> label;
    std::size_t matched = 0;
    for (auto candidate : {Relevance::relevant, Relevance::non_relevant}) {
        const auto& token = vocabulary.token(candidate);
        // Longest match wins when one token prefixes the other.
        if (token.size() > matched && text::istarts_with(s, token) && token_boundary(s.substr(token.size()))) {
            label = candidate;
            matched = token.size();
        }
    }
    if (!label) return std::nullopt;
    std::string_view rest = strip_separators(s.substr(matched));
    if (text::istarts_with(rest, kExplanationMarker)) rest = text::trim(rest.substr(kExplanationMarker.size()));
    return ParsedOutput{*label, std::string(rest)};
}

nlohmann::ordered_json AugmentStats::to_json() const {
    nlohmann::ordered_json j;
    j["total"] = total();
    j["ok"] = ok;
    j["fallback_label_only"] = fallback_label_only;
    j["failed"] = failed;
    j["retries"] = retries;
    j["per_label"] = {{"relevant", per_label_json(relevant)}, {"non_relevant", per_label_json(non_relevant)}};
    j["client"] = {{"network_calls", client.network_calls},
                   {"http_retries", client.retries},
                   {"cache_hits", client.cache_hits},
                   {"request_failures", client.failures}};
    return j;
}

std::pair<std::vector<ExplainedExample>, AugmentStats> augment(std::span<const LabeledPair> pairs,
                                                              const PromptTemplate& tpl,
                                                              std::span<const FewShotExample> shots, LlmClient& client,
                                                              const GenerationConfig& generation,
                                                              const AugmentPolicy& policy) {
    generation.validate();
    if (policy.max_retries < 0) throw ConfigError("augment: max_retries must be >= 0");
    const FormatString nudge(policy.nudge_format, kNudgePlaceholders, "nudge_format");
    const auto& vocab = tpl.vocabulary();
    const auto before = client.stats();

    std::vector<ExplainedExample> out;
    std::vector<std::string> base_prompts;
    out.reserve(pairs.size());
    base_prompts.reserve(pairs.size());
    for (const auto& pair : pairs) {
        out.push_back(ExplainedExample{pair, {}, generation.model_id, {}, AugmentStatus::failed});
        base_prompts.push_back(render_user_prompt(tpl, shots, pair));
    }

    AugmentStats stats;
    std::vector<std::size_t> pending(pairs.size());
    for (std::size_t i = 0; i < pending.size(); ++i) pending[i] = i;

    for (int attempt = 0; attempt <= policy.max_retries && !pending.empty(); ++attempt) {
        std::vector<CompletionRequest> requests;
        requests.reserve(pending.size());
        for (auto i : pending) {
            CompletionRequest req{generation, tpl.system_text(), base_prompts[i], {}};
            if (attempt > 0) {
                const auto& expected = vocab.token(pairs[i].label);
                req.user += nudge.render([&](std::string_view) -> const std::string& { return expected; });
                req.cache_salt = "retry=" + std::to_string(attempt);
            }
            requests.push_back(std::move(req));
        }
        if (attempt > 0) stats.retries += pending.size();

        auto results = client.batch_generate(requests, policy.max_in_flight);
        std::vector<std::size_t> still_pending;
        for (std::size_t k = 0; k < pending.size(); ++k) {
            const auto i = pending[k];
            const auto& res = results[k];
            auto& ex = out[i];
            auto& counters = per_label(stats, ex.pair.label);
            ex.prompt_digest = res.digest;
            if (!res.ok()) {
                ++counters.request_errors;
                still_pending.push_back(i);
                continue;
            }
            auto parsed = parse_llm_output(res.text, vocab);
            if (!parsed) {
                ++counters.parse_failures;
                still_pending.push_back(i);
            } else if (parsed->label != ex.pair.label) {
                ++counters.label_contradictions;
                still_pending.push_back(i);
            } else if (parsed->explanation.empty()) {
                ++counters.empty_explanations;
                still_pending.push_back(i);
            } else {
                ex.explanation = std::move(parsed->explanation);
                ex.status = AugmentStatus::ok;
                ++stats.ok;
            }
        }
        pending = std::move(still_pending);
    }

    for (auto i : pending) {
        out[i].explanation.clear();
        out[i].status = policy.fallback_label_only ? AugmentStatus::fallback_label_only : AugmentStatus::failed;
        ++(policy.fallback_label_only ? stats.fallback_label_only : stats.failed);
    }
    const auto after = client.stats();
    stats.client = LlmClientStats{after.network_calls - before.network_calls, after.retries - before.retries,
                                  after.cache_hits - before.cache_hits, after.failures - before.failures};
    return {std::move(out), stats};
}

FormatString make_input_format(std::string format) {
    return FormatString(std::move(format), kInputPlaceholders, "input_format");
}

ExportStats export_finetune(std::span<const ExplainedExample> examples, bool with_explanations,
                            const FormatString& input_format, const LabelVocabulary& vocabulary, std::ostream& out) {
    ExportStats stats;
    for (const auto& ex : examples) {
        if (ex.status == AugmentStatus::failed) {
            ++stats.excluded_failed;
            continue;
        }
        if (ex.status == AugmentStatus::ok && ex.explanation.empty())
            throw InvariantError("example (" + ex.pair.qid + ", " + ex.pair.docid + ") is ok but has no explanation");
        nlohmann::ordered_json row;
        row["source"] = input_format.render([&](std::string_view name) -> const std::string& {
            return name == "query" ? ex.pair.query_text : ex.pair.passage_text;
        });
        std::string target = vocabulary.token(ex.pair.label);
        if (with_explanations && ex.status == AugmentStatus::ok) {
            target += ". Explanation: " + ex.explanation;
            ++stats.with_explanation;
        } else {
            ++stats.label_only;
        }
        row["target"] = std::move(target);
        out << row.dump() << '\n';
        ++stats.written;
    }
    if (!out) throw IoError("failed writing fine-tuning export");
    if (stats.excluded_failed > 0)
        text::warn("export skipped " + std::to_string(stats.excluded_failed) + " example(s) with status=failed");
    return stats;
}

void write_augmented_jsonl(std::span<const ExplainedExample> examples, std::ostream& out) {
    for (const auto& ex : examples) {
        nlohmann::ordered_json row;
        row["qid"] = ex.pair.qid;
        row["docid"] = ex.pair.docid;
        row["query"] = ex.pair.query_text;
        row["passage"] = ex.pair.passage_text;
        row["label"] = static_cast<int>(ex.pair.label);
        row["explanation"] = ex.explanation;
        row["llm_model"] = ex.llm_model;
        row["prompt_digest"] = ex.prompt_digest;
        row["status"] = to_string(ex.status);
        out << row.dump() << '\n';
    }
    if (!out) throw IoError("failed writing augmented examples");
}

std::vector<ExplainedExample> read_augmented_jsonl(std::istream& in) {
    std::vector<ExplainedExample> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (text::trim(line).empty()) continue;
        try {
            auto row = nlohmann::json::parse(line);
            const int label = row.at("label").get<int>();
            if (label != 0 && label != 1) throw ParseError(line_no, "label must be 0 or 1");
            ExplainedExample ex;
            ex.pair = LabeledPair{row.at("qid").get<std::string>(), row.at("docid").get<std::string>(),
                                  row.at("query").get<std::string>(), row.at("passage").get<std::string>(),
                                  static_cast<Relevance>(label)};
            ex.explanation = row.at("explanation").get<std::string>();
            ex.llm_model = row.at("llm_model").get<std::string>();
            ex.prompt_digest = row.at("prompt_digest").get<std::string>();
            ex.status = augment_status_from_string(row.at("status").get<std::string>());
            if (ex.status == AugmentStatus::ok && ex.explanation.empty())
                throw ParseError(line_no, "status ok requires a non-empty explanation");
            if (ex.status == AugmentStatus::fallback_label_only && !ex.explanation.empty())
                throw ParseError(line_no, "status fallback_label_only requires an empty explanation");
            out.push_back(std::move(ex));
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(line_no, std::string("bad augmented row: ") + e.what());
        }
    }
    return out;
}

}  // namespace exaranker
