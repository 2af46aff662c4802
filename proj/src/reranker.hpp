#pragma once

#include <atomic>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "corpus_io.hpp"
#include "http_client.hpp"

namespace exaranker {

/// Probability of the relevant label, in [0, 1].
struct ScoredDoc {
    std::string docid;
    double score = 0.0;
};

enum class ScoreFailurePolicy {
    abort_query,   ///< a chunk that still fails after retries aborts the run
    sentinel_zero  ///< its passages score 0 and a warning is logged
};

ScoreFailurePolicy score_failure_policy_from_string(std::string_view name);

struct ScorerEndpoint {
    std::string base_url;
    std::chrono::milliseconds timeout{60'000};
    /// Cap on outstanding /score requests across all queries.
    std::size_t max_in_flight = 4;
    /// Passages per /score request.
    std::size_t batch_size = 32;
    RetryPolicy retry;
    ScoreFailurePolicy on_failure = ScoreFailurePolicy::abort_query;
};

/// Client for the scoring service:
///   POST {base}/score  {"query": str, "passages": [str...]} -> {"p_relevant": [float...]}
///   GET  {base}/healthz -> 200
class ScorerClient {
public:
    explicit ScorerClient(ScorerEndpoint endpoint);

    bool healthy() const;

    /// One /score round trip (with retries). Throws ProtocolError when the
    /// response is not aligned with the request and InvariantError when a
    /// probability is outside [0, 1].
    std::vector<double> score_texts(std::string_view query, std::span<const std::string> passages);

    /// Scores passages for one query in chunks of batch_size, input order.
    std::vector<ScoredDoc> score_batch(const Query& query, std::span<const Passage> passages, bool include_title);

    const ScorerEndpoint& endpoint() const noexcept { return endpoint_; }
    std::uint64_t requests() const noexcept { return requests_.load(); }
    std::uint64_t retries() const noexcept { return retries_.load(); }
    std::uint64_t sentinel_scores() const noexcept { return sentinels_.load(); }

private:
    ScorerEndpoint endpoint_;
    HttpClient http_;
    std::atomic<std::uint64_t> requests_{0};
    std::atomic<std::uint64_t> retries_{0};
    std::atomic<std::uint64_t> sentinels_{0};
};

/// Orders candidates by (score desc, docid desc) and assigns ranks 1..n.
/// Throws InvariantError when a candidate has no score.
std::vector<TrecRunEntry> rerank(const CandidateSet& candidates, const std::unordered_map<std::string, double>& scores,
                                 std::string_view tag);

struct RerankInputs {
    std::span<const CandidateSet> candidate_sets;
    const std::unordered_map<std::string, Query>* queries = nullptr;
    const std::unordered_map<std::string, Passage>* passages = nullptr;
    bool include_title = true;
    std::string tag = "exaranker";
};

/// Scores and reranks every candidate set, several queries in parallel up to
/// the endpoint's in-flight cap. Output follows candidate-set order.
std::vector<TrecRunEntry> rerank_all(ScorerClient& scorer, const RerankInputs& inputs);

}  // namespace exaranker
