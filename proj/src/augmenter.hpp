#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "llm_client.hpp"
#include "prompt_builder.hpp"
#include "sampler.hpp"

namespace exaranker {

enum class AugmentStatus { ok, fallback_label_only, failed };

std::string_view to_string(AugmentStatus status) noexcept;
AugmentStatus augment_status_from_string(std::string_view name);

struct ExplainedExample {
    LabeledPair pair;
    std::string explanation;
    std::string llm_model;
    std::string prompt_digest;
    AugmentStatus status = AugmentStatus::failed;
};

struct ParsedOutput {
    Relevance label = Relevance::non_relevant;
    std::string explanation;
};

/// Reads `<label><separator>[Explanation:] <text>` from free-form model output.
/// The label is the vocabulary token matched case-insensitively at the start of
/// the trimmed text and followed by a non-alphanumeric character or the end.
/// std::nullopt when no vocabulary token leads the text.
std::optional<ParsedOutput> parse_llm_output(std::string_view text, const LabelVocabulary& vocabulary);

struct AugmentPolicy {
    /// Re-asks per example after the first attempt.
    int max_retries = 2;
    /// After the last retry: true keeps the row as fallback_label_only, false marks it failed.
    bool fallback_label_only = true;
    std::size_t max_in_flight = 8;
    /// Appended to the prompt on a re-ask; `{label}` is the expected label token.
    std::string nudge_format =
        "\n\nThe correct answer for this pair is \"{label}\". Start your output with \"{label}\" and give an "
        "explanation consistent with it.";
};

struct AugmentStats {
    struct PerLabel {
        std::size_t parse_failures = 0;
        std::size_t label_contradictions = 0;
        std::size_t empty_explanations = 0;
        std::size_t request_errors = 0;
    };

    std::size_t ok = 0;
    std::size_t fallback_label_only = 0;
    std::size_t failed = 0;
    /// Re-asks issued (a request counts once per retry round it takes part in).
    std::uint64_t retries = 0;
    PerLabel relevant;
    PerLabel non_relevant;
    LlmClientStats client;

    std::size_t total() const noexcept { return ok + fallback_label_only + failed; }
    nlohmann::ordered_json to_json() const;
};

/// One ExplainedExample per input pair, in input order. An attempt fails when
/// the request errors, the output does not parse, its label contradicts the
/// known label, or the explanation is empty; failed items are re-asked with the
/// nudge and a retry salt in the cache key.
std::pair<std::vector<ExplainedExample>, AugmentStats> augment(std::span<const LabeledPair> pairs,
                                                              const PromptTemplate& tpl,
                                                              std::span<const FewShotExample> shots, LlmClient& client,
                                                              const GenerationConfig& generation,
                                                              const AugmentPolicy& policy);

constexpr std::string_view kDefaultInputFormat = "Is the question: '{query}' answered by the document: '{passage}'?";

/// Seq2seq source template; only {query} and {passage} are allowed.
FormatString make_input_format(std::string format);

struct ExportStats {
    std::size_t written = 0;
    std::size_t with_explanation = 0;
    std::size_t label_only = 0;
    std::size_t excluded_failed = 0;
};

/// Writes `{"source","target"}` JSONL. Targets are `"{label}. Explanation: {text}"`
/// for ok rows when explanations are enabled, `"{label}"` otherwise. Failed rows
/// are skipped with a warning. No truncation happens here.
ExportStats export_finetune(std::span<const ExplainedExample> examples, bool with_explanations,
                            const FormatString& input_format, const LabelVocabulary& vocabulary, std::ostream& out);

void write_augmented_jsonl(std::span<const ExplainedExample> examples, std::ostream& out);
std::vector<ExplainedExample> read_augmented_jsonl(std::istream& in);

}  // namespace exaranker
