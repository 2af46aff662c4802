#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "generation.hpp"
#include "sampler.hpp"

namespace exaranker {

struct LabelVocabulary {
    std::string relevant = "true";
    std::string non_relevant = "false";

    const std::string& token(Relevance label) const noexcept {
        return label == Relevance::relevant ? relevant : non_relevant;
    }
    std::optional<Relevance> label_of(std::string_view token) const noexcept;
};

/// A `{name}` placeholder format. `{{` and `}}` are literal braces.
class FormatString {
public:
    /// Parses `format`, rejecting placeholders outside `allowed`.
    FormatString(std::string format, std::span<const std::string_view> allowed, std::string_view field_name);

    /// `lookup(name)` supplies each placeholder's value.
    template <typename Lookup>
    std::string render(Lookup&& lookup) const {
        std::string out;
        for (const auto& seg : segments_) {
            if (seg.placeholder)
                out += lookup(std::string_view(seg.text));
            else
                out += seg.text;
        }
        return out;
    }

    const std::string& source() const noexcept { return source_; }
    bool uses(std::string_view name) const noexcept;

private:
    struct Segment {
        bool placeholder = false;
        std::string text;
    };
    std::string source_;
    std::vector<Segment> segments_;
};

class PromptTemplate {
public:
    /// Validates every field; throws ConfigError (unknown placeholder, bad vocabulary).
    PromptTemplate(std::optional<std::string> system_text, std::string shot_format, std::string query_format,
                   LabelVocabulary vocabulary = {});

    static PromptTemplate from_json(const nlohmann::json& doc);
    static PromptTemplate load(const std::filesystem::path& path);
    /// Built-in explanation prompt (mirrors data/templates/explain_v1.json).
    static PromptTemplate default_template();

    nlohmann::ordered_json to_json() const;

    const std::optional<std::string>& system_text() const noexcept { return system_text_; }
    const FormatString& shot_format() const noexcept { return shot_format_; }
    const FormatString& query_format() const noexcept { return query_format_; }
    const LabelVocabulary& vocabulary() const noexcept { return vocabulary_; }

private:
    std::optional<std::string> system_text_;
    FormatString shot_format_;
    FormatString query_format_;
    LabelVocabulary vocabulary_;
};

struct FewShotExample {
    std::string query;
    std::string passage;
    std::string label;
    std::string explanation;
};

/// JSON array of `{query, passage, label, explanation}`; labels must belong to `vocabulary`.
std::vector<FewShotExample> shots_from_json(const nlohmann::json& doc, const LabelVocabulary& vocabulary);
std::vector<FewShotExample> load_shots(const std::filesystem::path& path, const LabelVocabulary& vocabulary);

/// Shot blocks followed by the query block, separated by blank lines.
std::string render_user_prompt(const PromptTemplate& tpl, std::span<const FewShotExample> shots, const LabeledPair& pair);

/// Full prompt: the system text (if any), then render_user_prompt. No trailing whitespace.
std::string render_prompt(const PromptTemplate& tpl, std::span<const FewShotExample> shots, const LabeledPair& pair);

/// SHA-256 hex over model id, canonical generation config and prompt bytes,
/// each NUL-separated. A non-empty `salt` is appended the same way.
std::string prompt_digest(std::string_view prompt, const GenerationConfig& config, std::string_view salt = {});

}  // namespace exaranker
