#pragma once

// Readers and writers for the external data formats: MS MARCO style TSV
// (queries, collection), BEIR JSONL (corpus, queries), TREC qrels and TREC
// run files. Text fields are CR/LF-stripped and NFC-normalized when parsed.

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <iosfwd>
#include <iterator>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace exaranker {

struct Query {
    std::string qid;
    std::string text;

    friend bool operator==(const Query&, const Query&) = default;
};

struct Passage {
    std::string docid;
    std::string text;
    std::optional<std::string> title;

    friend bool operator==(const Passage&, const Passage&) = default;
};

/// Text handed to a model: `"{title}. {text}"` when a non-empty title exists and
/// `include_title` is set, the raw text otherwise.
std::string model_text(const Passage& passage, bool include_title);

/// Graded relevance judgments keyed by (qid, docid).
class Qrels {
public:
    using DocGrades = std::map<std::string, int, std::less<>>;

    /// Adds a judgment. Re-adding an identical judgment is a no-op; a conflicting
    /// grade throws ParseError tagged with `line`.
    void add(const std::string& qid, const std::string& docid, int grade, std::size_t line = 0);

    /// Grade of a judged pair, std::nullopt when the pair is unjudged.
    std::optional<int> grade(std::string_view qid, std::string_view docid) const;

    /// Judged documents of one query, nullptr when the query has no judgments.
    const DocGrades* judged(std::string_view qid) const;

    const std::map<std::string, DocGrades, std::less<>>& queries() const noexcept { return by_query_; }
    std::size_t size() const noexcept { return size_; }
    bool empty() const noexcept { return size_ == 0; }

    friend bool operator==(const Qrels&, const Qrels&) = default;

private:
    std::map<std::string, DocGrades, std::less<>> by_query_;
    std::size_t size_ = 0;
};

struct TrecRunEntry {
    std::string qid;
    std::string docid;
    int rank = 1;
    double score = 0.0;
    std::string tag;
};

struct Candidate {
    std::string docid;
    double score = 0.0;
};

/// First-stage candidates of one query, in first-stage rank order.
struct CandidateSet {
    std::string qid;
    std::vector<Candidate> candidates;
};

// ---------------------------------------------------------------------------
// Streaming passage readers

/// Pull-style reader. Holds one record at a time.
class PassageReader {
public:
    virtual ~PassageReader() = default;
    /// Next passage, std::nullopt at end of stream. Throws ParseError on malformed input.
    virtual std::optional<Passage> next() = 0;

    class iterator {
    public:
        using iterator_category = std::input_iterator_tag;
        using value_type = Passage;
        using difference_type = std::ptrdiff_t;
        using pointer = const Passage*;
        using reference = const Passage&;

        iterator() = default;
        explicit iterator(PassageReader* reader) : reader_(reader) { advance(); }
        reference operator*() const { return *current_; }
        pointer operator->() const { return &*current_; }
        iterator& operator++() {
            advance();
            return *this;
        }
        void operator++(int) { advance(); }
        friend bool operator==(const iterator& a, const iterator& b) { return a.reader_ == b.reader_; }

    private:
        void advance() {
            current_ = reader_->next();
            if (!current_) reader_ = nullptr;
        }
        PassageReader* reader_ = nullptr;
        std::optional<Passage> current_;
    };

    iterator begin() { return iterator(this); }
    iterator end() { return iterator(); }
};

/// `docid<TAB>text` lines; splits on the first tab only.
class TsvCollectionReader final : public PassageReader {
public:
    explicit TsvCollectionReader(std::istream& in) : in_(in) {}
    std::optional<Passage> next() override;

private:
    std::istream& in_;
    std::string line_;
    std::size_t line_no_ = 0;
};

/// BEIR corpus JSONL: `{"_id", "text", optional "title"}` per line.
class BeirCorpusReader final : public PassageReader {
public:
    explicit BeirCorpusReader(std::istream& in) : in_(in) {}
    std::optional<Passage> next() override;

private:
    std::istream& in_;
    std::string line_;
    std::size_t line_no_ = 0;
};

/// Opens a collection file, choosing the BEIR reader for `.jsonl`/`.json` and TSV otherwise.
std::unique_ptr<PassageReader> open_collection(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Whole-file parsers

std::vector<Query> parse_queries_tsv(std::istream& in);
/// BEIR `queries.jsonl`: `{"_id", "text"}` per line.
std::vector<Query> parse_beir_queries(std::istream& in);
/// Dispatches on extension like open_collection.
std::vector<Query> load_queries(const std::filesystem::path& path);

/// `qid <ignored> docid grade`, whitespace separated.
Qrels parse_qrels(std::istream& in);
Qrels load_qrels(const std::filesystem::path& path);
/// Writes `qid 0 docid grade` lines sorted by (qid, docid).
void write_qrels(const Qrels& qrels, std::ostream& out);

enum class RunCheck {
    strict,  ///< enforce contiguous ranks, unique docids and non-increasing scores
    lenient  ///< syntax only; ranks are ignored by consumers that re-sort
};

/// Six-column TREC run. Tolerates any whitespace between columns.
std::vector<TrecRunEntry> parse_run(std::istream& in, RunCheck check = RunCheck::strict);
std::vector<TrecRunEntry> load_run(const std::filesystem::path& path, RunCheck check = RunCheck::strict);

/// Throws InvariantError when the entries break a TREC run invariant.
void validate_run(std::span<const TrecRunEntry> entries);

/// Writes `qid Q0 docid rank score tag` lines with six fractional score digits,
/// in input order. Validates everything before writing a byte.
void write_run(std::span<const TrecRunEntry> entries, std::ostream& out);

/// Groups a run into per-query candidate lists (queries in first-appearance
/// order, candidates by ascending rank), keeping at most `depth` per query
/// (0 keeps all).
std::vector<CandidateSet> candidates_from_run(std::span<const TrecRunEntry> entries, std::size_t depth = 0);

std::ifstream open_input(const std::filesystem::path& path);

}  // namespace exaranker
