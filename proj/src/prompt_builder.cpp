#include "prompt_builder.hpp"

#include <algorithm>
#include <array>
#include <fstream>

#include "digest.hpp"
#include "error.hpp"
#include "text.hpp"

namespace exaranker {

namespace {

constexpr std::array<std::string_view, 4> kShotPlaceholders{"query", "passage", "label", "explanation"};
// The label never reaches the final query block.
constexpr std::array<std::string_view, 2> kQueryPlaceholders{"query", "passage"};

constexpr std::string_view kBlockSeparator = "\n\n";

std::string join_allowed(std::span<const std::string_view> allowed) {
    std::string out;
    for (auto a : allowed) {
        if (!out.empty()) out += ", ";
        out += "{" + std::string(a) + "}";
    }
    return out;
}

nlohmann::json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(path.string() + ": invalid JSON: " + e.what());
    }
}

}  // namespace

std::optional<Relevance> LabelVocabulary::label_of(std::string_view token) const noexcept {
    if (token == relevant) return Relevance::relevant;
    if (token == non_relevant) return Relevance::non_relevant;
    return std::nullopt;
}

// ---------------------------------------------------------------------------

FormatString::FormatString(std::string format, std::span<const std::string_view> allowed, std::string_view field_name)
    : source_(std::move(format)) {
    std::string literal;
    auto flush = [&] {
        if (!literal.empty()) segments_.push_back(Segment{false, std::move(literal)});
        literal.clear();
    };
    const std::string& s = source_;
    for (std::size_t i = 0; i < s.size(); ++i) {
        char c = s[i];
        if (c == '{' && i + 1 < s.size() && s[i + 1] == '{') {
            literal.push_back('{');
            ++i;
        } else if (c == '}' && i + 1 < s.size() && s[i + 1] == '}') {
            literal.push_back('}');
            ++i;
        } else if (c == '{') {
            auto close = s.find('}', i + 1);
            if (close == std::string::npos)
                throw ConfigError(std::string(field_name) + ": unterminated '{' at offset " + std::to_string(i));
            std::string name = s.substr(i + 1, close - i - 1);
            if (std::find(allowed.begin(), allowed.end(), name) == allowed.end())
                throw ConfigError(std::string(field_name) + ": unknown placeholder {" + name + "}; allowed: " +
                                  join_allowed(allowed));
            flush();
            segments_.push_back(Segment{true, std::move(name)});
            i = close;
        } else if (c == '}') {
            throw ConfigError(std::string(field_name) + ": unmatched '}' at offset " + std::to_string(i));
        } else {
            literal.push_back(c);
        }
    }
    flush();
}

bool FormatString::uses(std::string_view name) const noexcept {
    return std::any_of(segments_.begin(), segments_.end(), [&](const Segment& s) { return s.placeholder && s.text == name; });
}

// ---------------------------------------------------------------------------

PromptTemplate::PromptTemplate(std::optional<std::string> system_text, std::string shot_format, std::string query_format,
                               LabelVocabulary vocabulary)
    : system_text_(std::move(system_text)),
      shot_format_(std::move(shot_format), kShotPlaceholders, "shot_format"),
      query_format_(std::move(query_format), kQueryPlaceholders, "query_format"),
      vocabulary_(std::move(vocabulary)) {
    if (vocabulary_.relevant.empty() || vocabulary_.non_relevant.empty())
        throw ConfigError("label_vocabulary entries must be non-empty");
    if (vocabulary_.relevant == vocabulary_.non_relevant) throw ConfigError("label_vocabulary entries must be distinct");
    if (text::trim(query_format_.source()).empty()) throw ConfigError("query_format must not be empty");
}

PromptTemplate PromptTemplate::from_json(const nlohmann::json& doc) {
    if (!doc.is_object()) throw ConfigError("prompt template must be a JSON object");
    static constexpr std::array<std::string_view, 4> kKeys{"system_text", "shot_format", "query_format", "label_vocabulary"};
    for (const auto& [key, value] : doc.items())
        if (std::find(kKeys.begin(), kKeys.end(), key) == kKeys.end())
            throw ConfigError("prompt template: unknown field '" + key + "'");
    try {
        std::optional<std::string> system;
        if (auto it = doc.find("system_text"); it != doc.end() && !it->is_null()) system = it->get<std::string>();
        LabelVocabulary vocab;
        if (auto it = doc.find("label_vocabulary"); it != doc.end()) {
            if (!it->is_array() || it->size() != 2) throw ConfigError("label_vocabulary must be a [relevant, non_relevant] pair");
            vocab.relevant = (*it)[0].get<std::string>();
            vocab.non_relevant = (*it)[1].get<std::string>();
        }
        return PromptTemplate(std::move(system), doc.at("shot_format").get<std::string>(),
                              doc.at("query_format").get<std::string>(), std::move(vocab));
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("prompt template: ") + e.what());
    }
}

PromptTemplate PromptTemplate::load(const std::filesystem::path& path) {
    try {
        return from_json(read_json_file(path));
    } catch (const ConfigError& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

// Reconstruction of the label-then-explanation prompt format; the exact wording
// of the original prompt is not public. Keep in sync with data/templates/explain_v1.json.
PromptTemplate PromptTemplate::default_template() {
    return PromptTemplate(
        std::string("You judge whether a passage is relevant to a search query. Answer \"true\" or \"false\", "
                    "then give a short explanation of your judgment."),
        "Query: {query}\nPassage: {passage}\nOutput: {label}. Explanation: {explanation}",
        "Query: {query}\nPassage: {passage}\nOutput:");
}

nlohmann::ordered_json PromptTemplate::to_json() const {
    nlohmann::ordered_json doc;
    doc["system_text"] = system_text_ ? nlohmann::ordered_json(*system_text_) : nlohmann::ordered_json(nullptr);
    doc["shot_format"] = shot_format_.source();
    doc["query_format"] = query_format_.source();
    doc["label_vocabulary"] = {vocabulary_.relevant, vocabulary_.non_relevant};
    return doc;
}

// ---------------------------------------------------------------------------

std::vector<FewShotExample> shots_from_json(const nlohmann::json& doc, const LabelVocabulary& vocabulary) {
    if (!doc.is_array()) throw ConfigError("shots file must be a JSON array");
    std::vector<FewShotExample> shots;
    for (std::size_t i = 0; i < doc.size(); ++i) {
        const auto& row = doc[i];
        try {
            FewShotExample s{row.at("query").get<std::string>(), row.at("passage").get<std::string>(),
                             row.at("label").get<std::string>(), row.at("explanation").get<std::string>()};
            if (text::trim(s.explanation).empty()) throw ConfigError("shot " + std::to_string(i) + ": empty explanation");
            if (!vocabulary.label_of(s.label))
                throw ConfigError("shot " + std::to_string(i) + ": label '" + s.label + "' is not in the label vocabulary");
            shots.push_back(std::move(s));
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("shot " + std::to_string(i) + ": " + e.what());
        }
    }
    return shots;
}

std::vector<FewShotExample> load_shots(const std::filesystem::path& path, const LabelVocabulary& vocabulary) {
    try {
        return shots_from_json(read_json_file(path), vocabulary);
    } catch (const ConfigError& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

// ---------------------------------------------------------------------------

std::string render_user_prompt(const PromptTemplate& tpl, std::span<const FewShotExample> shots, const LabeledPair& pair) {
    std::string out;
    for (const auto& shot : shots) {
        out += tpl.shot_format().render([&](std::string_view name) -> const std::string& {
            if (name == "query") return shot.query;
            if (name == "passage") return shot.passage;
            if (name == "label") return shot.label;
            return shot.explanation;
        });
        out += kBlockSeparator;
    }
    out += tpl.query_format().render([&](std::string_view name) -> const std::string& {
        return name == "query" ? pair.query_text : pair.passage_text;
    });
    return std::string(text::rtrim(out));
}

std::string render_prompt(const PromptTemplate& tpl, std::span<const FewShotExample> shots, const LabeledPair& pair) {
    std::string user = render_user_prompt(tpl, shots, pair);
    if (!tpl.system_text() || text::trim(*tpl.system_text()).empty()) return user;
    return std::string(text::rtrim(*tpl.system_text())) + std::string(kBlockSeparator) + user;
}

std::string prompt_digest(std::string_view prompt, const GenerationConfig& config, std::string_view salt) {
    Sha256 h;
    h.update(config.model_id).update(std::string_view("\0", 1));
    h.update(config.canonical_json()).update(std::string_view("\0", 1));
    h.update(prompt);
    if (!salt.empty()) h.update(std::string_view("\0", 1)).update(salt);
    return h.hex_digest();
}

}  // namespace exaranker
