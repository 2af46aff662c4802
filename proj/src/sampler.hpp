#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "corpus_io.hpp"

namespace exaranker {

enum class Relevance { non_relevant = 0, relevant = 1 };

/// relevant iff grade >= threshold.
constexpr Relevance binarize(int grade, int threshold) noexcept {
    return grade >= threshold ? Relevance::relevant : Relevance::non_relevant;
}

struct LabeledPair {
    std::string qid;
    std::string docid;
    std::string query_text;
    std::string passage_text;
    Relevance label = Relevance::non_relevant;

    friend bool operator==(const LabeledPair&, const LabeledPair&) = default;
};

enum class NegativeSource { candidate_run, random_collection };

std::string_view to_string(NegativeSource source) noexcept;
NegativeSource negative_source_from_string(std::string_view name);

struct SamplePlan {
    std::size_t n_pos = 0;
    std::size_t n_neg = 0;
    std::uint64_t seed = 0;
    NegativeSource negative_source = NegativeSource::candidate_run;
    int positive_threshold = 1;
    /// Candidates considered per query when drawing negatives from a run; 0 = all.
    std::size_t candidate_depth = 0;
};

/// Re-openable collection. Random negatives need two passes (ids, then texts).
using CollectionSource = std::function<std::unique_ptr<PassageReader>()>;

struct SampleInputs {
    std::span<const Query> queries;
    CollectionSource collection;
    const Qrels* qrels = nullptr;
    /// Empty when no candidate run is supplied.
    std::span<const TrecRunEntry> candidate_run;
};

/// Draws plan.n_pos relevant and plan.n_neg non-relevant pairs.
///
/// Positives: queries that have at least one judged-relevant document are sorted
/// by qid and shuffled; then each query's relevant docids (sorted) are shuffled,
/// in shuffled-query order. Pairs are emitted round-robin over the shuffled
/// queries (every query's first positive, then every query's second, ...), so
/// each query contributes one positive before any query is reused, and a
/// smaller plan is always a prefix of a larger one.
///
/// Negatives continue the same random stream.
///  - candidate_run: for each query in the shuffled order, its top
///    `candidate_depth` candidates minus judged positives, sorted and shuffled,
///    emitted round-robin like positives.
///  - random_collection: all collection docids sorted and shuffled; negative j
///    pairs the j-th query of the shuffled order (cycling) with the next pool
///    docid that is not a judged positive for that query.
///
/// Output: positives in selection order followed by negatives.
std::vector<LabeledPair> sample_pairs(const SampleInputs& inputs, const SamplePlan& plan);

void write_pairs_jsonl(std::span<const LabeledPair> pairs, std::ostream& out);
std::vector<LabeledPair> read_pairs_jsonl(std::istream& in);

}  // namespace exaranker
