#include "corpus_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <ostream>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "error.hpp"
#include "text.hpp"

namespace exaranker {

namespace {

bool next_line(std::istream& in, std::string& line, std::size_t& line_no) {
    if (!std::getline(in, line)) return false;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
}

bool blank(std::string_view line) { return text::trim(line).empty(); }

void check_identifier(std::string_view id, std::string_view what, std::size_t line_no) {
    if (id.empty()) throw ParseError(line_no, "empty " + std::string(what));
    if (text::has_whitespace(id)) throw ParseError(line_no, std::string(what) + " contains whitespace: '" + std::string(id) + "'");
}

std::pair<std::string_view, std::string_view> split_first_tab(std::string_view line, std::size_t line_no) {
    auto tab = line.find('\t');
    if (tab == std::string_view::npos) throw ParseError(line_no, "expected <id><TAB><text>");
    return {line.substr(0, tab), line.substr(tab + 1)};
}

bool is_jsonl(const std::filesystem::path& path) {
    auto ext = text::to_lower_ascii(path.extension().string());
    return ext == ".jsonl" || ext == ".json";
}

template <typename Int>
std::optional<Int> parse_int(std::string_view s) {
    Int value{};
    auto res = std::from_chars(s.data(), s.data() + s.size(), value);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) return std::nullopt;
    return value;
}

std::optional<double> parse_double(std::string_view s) {
    double value{};
    auto res = std::from_chars(s.data(), s.data() + s.size(), value);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) return std::nullopt;
    return value;
}

std::string json_string_field(const nlohmann::json& obj, const char* key, std::size_t line_no) {
    auto it = obj.find(key);
    if (it == obj.end()) throw ParseError(line_no, std::string("missing field '") + key + "'");
    if (it->is_string()) return it->get<std::string>();
    if (it->is_number_integer()) return std::to_string(it->get<long long>());
    throw ParseError(line_no, std::string("field '") + key + "' is not a string");
}

nlohmann::json parse_json_line(std::string_view line, std::size_t line_no) {
    try {
        auto obj = nlohmann::json::parse(line);
        if (!obj.is_object()) throw ParseError(line_no, "expected a JSON object");
        return obj;
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(line_no, std::string("invalid JSON: ") + e.what());
    }
}

}  // namespace

std::string model_text(const Passage& passage, bool include_title) {
    if (include_title && passage.title && !passage.title->empty()) return *passage.title + ". " + passage.text;
    return passage.text;
}

// ---------------------------------------------------------------------------
// Qrels

void Qrels::add(const std::string& qid, const std::string& docid, int grade, std::size_t line) {
    if (grade < 0) throw ParseError(line, "negative relevance grade " + std::to_string(grade));
    auto& docs = by_query_[qid];
    auto [it, inserted] = docs.emplace(docid, grade);
    if (inserted) {
        ++size_;
        return;
    }
    if (it->second != grade)
        throw ParseError(line, "conflicting grades for (" + qid + ", " + docid + "): " + std::to_string(it->second) +
                                   " vs " + std::to_string(grade));
}

std::optional<int> Qrels::grade(std::string_view qid, std::string_view docid) const {
    auto q = by_query_.find(qid);
    if (q == by_query_.end()) return std::nullopt;
    auto d = q->second.find(docid);
    if (d == q->second.end()) return std::nullopt;
    return d->second;
}

const Qrels::DocGrades* Qrels::judged(std::string_view qid) const {
    auto q = by_query_.find(qid);
    return q == by_query_.end() ? nullptr : &q->second;
}

// ---------------------------------------------------------------------------
// Passage readers

std::optional<Passage> TsvCollectionReader::next() {
    while (next_line(in_, line_, line_no_)) {
        if (blank(line_)) continue;
        auto [id, body] = split_first_tab(line_, line_no_);
        check_identifier(id, "docid", line_no_);
        return Passage{std::string(id), text::normalize_field(body), std::nullopt};
    }
    if (in_.bad()) throw IoError("read error in collection stream");
    return std::nullopt;
}

std::optional<Passage> BeirCorpusReader::next() {
    while (next_line(in_, line_, line_no_)) {
        if (blank(line_)) continue;
        auto obj = parse_json_line(line_, line_no_);
        Passage p;
        p.docid = json_string_field(obj, "_id", line_no_);
        check_identifier(p.docid, "docid", line_no_);
        p.text = text::normalize_field(json_string_field(obj, "text", line_no_));
        if (auto t = obj.find("title"); t != obj.end() && !t->is_null()) {
            if (!t->is_string()) throw ParseError(line_no_, "field 'title' is not a string");
            p.title = text::normalize_field(t->get<std::string>());
        }
        return p;
    }
    if (in_.bad()) throw IoError("read error in corpus stream");
    return std::nullopt;
}

namespace {

/// Reader that owns its file stream.
template <typename Reader>
class FileReader final : public PassageReader {
public:
    explicit FileReader(const std::filesystem::path& path) : file_(open_input(path)), reader_(file_) {}
    std::optional<Passage> next() override { return reader_.next(); }

private:
    std::ifstream file_;
    Reader reader_;
};

}  // namespace

std::unique_ptr<PassageReader> open_collection(const std::filesystem::path& path) {
    if (is_jsonl(path)) return std::make_unique<FileReader<BeirCorpusReader>>(path);
    return std::make_unique<FileReader<TsvCollectionReader>>(path);
}

std::ifstream open_input(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return in;
}

// ---------------------------------------------------------------------------
// Queries

namespace {

void add_query(std::vector<Query>& out, std::unordered_set<std::string>& seen, std::string qid, std::string body,
               std::size_t line_no) {
    check_identifier(qid, "qid", line_no);
    if (!seen.insert(qid).second) throw ParseError(line_no, "duplicate qid '" + qid + "'");
    auto norm = text::normalize_field(body);
    if (text::trim(norm).empty()) throw ParseError(line_no, "empty query text for qid '" + qid + "'");
    out.push_back(Query{std::move(qid), std::move(norm)});
}

}  // namespace

std::vector<Query> parse_queries_tsv(std::istream& in) {
    std::vector<Query> out;
    std::unordered_set<std::string> seen;
    std::string line;
    std::size_t line_no = 0;
    while (next_line(in, line, line_no)) {
        if (blank(line)) continue;
        auto [id, body] = split_first_tab(line, line_no);
        add_query(out, seen, std::string(id), std::string(body), line_no);
    }
    return out;
}

std::vector<Query> parse_beir_queries(std::istream& in) {
    std::vector<Query> out;
    std::unordered_set<std::string> seen;
    std::string line;
    std::size_t line_no = 0;
    while (next_line(in, line, line_no)) {
        if (blank(line)) continue;
        auto obj = parse_json_line(line, line_no);
        add_query(out, seen, json_string_field(obj, "_id", line_no), json_string_field(obj, "text", line_no), line_no);
    }
    return out;
}

std::vector<Query> load_queries(const std::filesystem::path& path) {
    auto in = open_input(path);
    return is_jsonl(path) ? parse_beir_queries(in) : parse_queries_tsv(in);
}

// ---------------------------------------------------------------------------
// Qrels

Qrels parse_qrels(std::istream& in) {
    Qrels qrels;
    std::string line;
    std::size_t line_no = 0;
    while (next_line(in, line, line_no)) {
        if (blank(line)) continue;
        auto cols = text::split_whitespace(line);
        if (cols.size() != 4) throw ParseError(line_no, "expected 4 columns 'qid iter docid grade', got " + std::to_string(cols.size()));
        auto grade = parse_int<int>(cols[3]);
        if (!grade) throw ParseError(line_no, "non-integer grade '" + std::string(cols[3]) + "'");
        qrels.add(std::string(cols[0]), std::string(cols[2]), *grade, line_no);
    }
    return qrels;
}

Qrels load_qrels(const std::filesystem::path& path) {
    auto in = open_input(path);
    return parse_qrels(in);
}

void write_qrels(const Qrels& qrels, std::ostream& out) {
    for (const auto& [qid, docs] : qrels.queries())
        for (const auto& [docid, grade] : docs) out << qid << " 0 " << docid << ' ' << grade << '\n';
}

// ---------------------------------------------------------------------------
// Runs

void validate_run(std::span<const TrecRunEntry> entries) {
    std::unordered_map<std::string_view, std::vector<const TrecRunEntry*>> by_query;
    for (const auto& e : entries) {
        if (e.qid.empty() || text::has_whitespace(e.qid)) throw InvariantError("invalid qid '" + e.qid + "'");
        if (e.docid.empty() || text::has_whitespace(e.docid)) throw InvariantError("invalid docid '" + e.docid + "'");
        if (e.tag.empty() || text::has_whitespace(e.tag)) throw InvariantError("invalid run tag '" + e.tag + "'");
        if (!std::isfinite(e.score)) throw InvariantError("non-finite score for (" + e.qid + ", " + e.docid + ")");
        if (e.rank < 1) throw InvariantError("rank < 1 for (" + e.qid + ", " + e.docid + ")");
        by_query[e.qid].push_back(&e);
    }
    for (auto& [qid, rows] : by_query) {
        std::sort(rows.begin(), rows.end(), [](auto* a, auto* b) { return a->rank < b->rank; });
        std::unordered_set<std::string_view> docs;
        for (std::size_t i = 0; i < rows.size(); ++i) {
            if (rows[i]->rank != static_cast<int>(i) + 1)
                throw InvariantError("ranks for query '" + std::string(qid) + "' are not contiguous 1.." +
                                     std::to_string(rows.size()) + " (found rank " + std::to_string(rows[i]->rank) + ")");
            if (!docs.insert(rows[i]->docid).second)
                throw InvariantError("duplicate docid '" + rows[i]->docid + "' for query '" + std::string(qid) + "'");
            if (i > 0 && rows[i]->score > rows[i - 1]->score)
                throw InvariantError("scores increase with rank for query '" + std::string(qid) + "' at rank " +
                                     std::to_string(rows[i]->rank));
        }
    }
}

void write_run(std::span<const TrecRunEntry> entries, std::ostream& out) {
    validate_run(entries);
    std::string buf;
    for (const auto& e : entries) {
        buf.clear();
        buf.append(e.qid).append(" Q0 ").append(e.docid).push_back(' ');
        buf.append(std::to_string(e.rank)).push_back(' ');
        buf.append(text::format_fixed(e.score, 6)).push_back(' ');
        buf.append(e.tag).push_back('\n');
        out << buf;
    }
    if (!out) throw IoError("failed writing run");
}

std::vector<TrecRunEntry> parse_run(std::istream& in, RunCheck check) {
    std::vector<TrecRunEntry> entries;
    std::string line;
    std::size_t line_no = 0;
    while (next_line(in, line, line_no)) {
        if (blank(line)) continue;
        auto cols = text::split_whitespace(line);
        if (cols.size() != 6) throw ParseError(line_no, "expected 6 columns 'qid Q0 docid rank score tag', got " + std::to_string(cols.size()));
        auto rank = parse_int<int>(cols[3]);
        if (!rank) throw ParseError(line_no, "non-integer rank '" + std::string(cols[3]) + "'");
        auto score = parse_double(cols[4]);
        if (!score || !std::isfinite(*score)) throw ParseError(line_no, "invalid score '" + std::string(cols[4]) + "'");
        entries.push_back(TrecRunEntry{std::string(cols[0]), std::string(cols[2]), *rank, *score, std::string(cols[5])});
    }
    if (check == RunCheck::strict) validate_run(entries);
    return entries;
}

std::vector<TrecRunEntry> load_run(const std::filesystem::path& path, RunCheck check) {
    auto in = open_input(path);
    return parse_run(in, check);
}

std::vector<CandidateSet> candidates_from_run(std::span<const TrecRunEntry> entries, std::size_t depth) {
    std::vector<CandidateSet> sets;
    std::unordered_map<std::string_view, std::size_t> index;
    std::vector<std::vector<const TrecRunEntry*>> rows;
    for (const auto& e : entries) {
        auto [it, inserted] = index.emplace(e.qid, sets.size());
        if (inserted) {
            sets.push_back(CandidateSet{e.qid, {}});
            rows.emplace_back();
        }
        rows[it->second].push_back(&e);
    }
    for (std::size_t i = 0; i < sets.size(); ++i) {
        auto& r = rows[i];
        std::stable_sort(r.begin(), r.end(), [](auto* a, auto* b) { return a->rank < b->rank; });
        std::unordered_set<std::string_view> seen;
        for (const auto* e : r) {
            if (depth != 0 && sets[i].candidates.size() >= depth) break;
            if (!seen.insert(e->docid).second)
                throw InvariantError("duplicate candidate '" + e->docid + "' for query '" + e->qid + "'");
            sets[i].candidates.push_back(Candidate{e->docid, e->score});
        }
    }
    return sets;
}

}  // namespace exaranker
