#include "reranker.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

#include <json.hpp>

#include "error.hpp"
#include "text.hpp"

namespace exaranker {

ScoreFailurePolicy score_failure_policy_from_string(std::string_view name) {
    if (name == "abort") return ScoreFailurePolicy::abort_query;
    if (name == "sentinel") return ScoreFailurePolicy::sentinel_zero;
    throw ConfigError("unknown scoring failure policy '" + std::string(name) + "' (expected abort or sentinel)");
}

ScorerClient::ScorerClient(ScorerEndpoint endpoint)
    : endpoint_(std::move(endpoint)), http_(endpoint_.base_url, endpoint_.timeout) {
    if (endpoint_.max_in_flight < 1) throw ConfigError("scorer max_in_flight must be >= 1");
    if (endpoint_.batch_size < 1) throw ConfigError("scorer batch_size must be >= 1");
}

bool ScorerClient::healthy() const {
    try {
        return http_.get("/healthz").status == 200;
    } catch (const NetworkError&) {
        return false;
    }
}

std::vector<double> ScorerClient::score_texts(std::string_view query, std::span<const std::string> passages) {
    if (passages.empty()) return {};
    nlohmann::json body;
    body["query"] = query;
    body["passages"] = passages;
    const auto payload = body.dump();
    const auto response = with_retries(
        endpoint_.retry,
        [&] {
            requests_.fetch_add(1, std::memory_order_relaxed);
            auto r = http_.post_json("/score", payload);
            check_status(r, "score");
            return r;
        },
        &retries_);

    auto doc = nlohmann::json::parse(response.body, nullptr, /*allow_exceptions=*/false);
    if (doc.is_discarded() || !doc.is_object()) throw ProtocolError("score response is not a JSON object", response.body);
    auto it = doc.find("p_relevant");
    if (it == doc.end() || !it->is_array()) throw ProtocolError("score response lacks a p_relevant array", response.body);
    if (it->size() != passages.size())
        throw ProtocolError("score response has " + std::to_string(it->size()) + " probabilities for " +
                                std::to_string(passages.size()) + " passages",
                            response.body);
    std::vector<double> out;
    out.reserve(passages.size());
    for (const auto& v : *it) {
        if (!v.is_number()) throw ProtocolError("p_relevant holds a non-number", response.body);
        const double p = v.get<double>();
        if (!std::isfinite(p) || p < 0.0 || p > 1.0)
            throw InvariantError("scorer returned p_relevant " + text::format_fixed(p, 6) + " outside [0, 1]");
        out.push_back(p);
    }
    return out;
}

std::vector<ScoredDoc> ScorerClient::score_batch(const Query& query, std::span<const Passage> passages,
                                                 bool include_title) {
    std::vector<ScoredDoc> out;
    out.reserve(passages.size());
    for (std::size_t start = 0; start < passages.size(); start += endpoint_.batch_size) {
        const auto chunk = passages.subspan(start, std::min(endpoint_.batch_size, passages.size() - start));
        std::vector<std::string> texts;
        texts.reserve(chunk.size());
        for (const auto& p : chunk) texts.push_back(model_text(p, include_title));
        std::vector<double> probs;
        try {
            probs = score_texts(query.text, texts);
        } catch (const Error& e) {
            const bool transport = e.code() == ErrorCode::network || e.code() == ErrorCode::protocol;
            if (!transport || endpoint_.on_failure == ScoreFailurePolicy::abort_query) throw;
            text::warn("query " + query.qid + ": scoring " + std::to_string(chunk.size()) +
                       " passage(s) failed, assigning score 0: " + e.what());
            sentinels_.fetch_add(chunk.size(), std::memory_order_relaxed);
            probs.assign(chunk.size(), 0.0);
        }
        for (std::size_t i = 0; i < chunk.size(); ++i) out.push_back(ScoredDoc{chunk[i].docid, probs[i]});
    }
    return out;
}

std::vector<TrecRunEntry> rerank(const CandidateSet& candidates, const std::unordered_map<std::string, double>& scores,
                                 std::string_view tag) {
    std::vector<std::pair<double, const std::string*>> order;
    order.reserve(candidates.candidates.size());
    for (const auto& c : candidates.candidates) {
        auto it = scores.find(c.docid);
        if (it == scores.end())
            throw InvariantError("no score for candidate '" + c.docid + "' of query '" + candidates.qid + "'");
        order.emplace_back(it->second, &c.docid);
    }
    std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return *a.second > *b.second;
    });
    std::vector<TrecRunEntry> out;
    out.reserve(order.size());
    int rank = 1;
    for (const auto& [score, docid] : order)
        out.push_back(TrecRunEntry{candidates.qid, *docid, rank++, score, std::string(tag)});
    return out;
}

std::vector<TrecRunEntry> rerank_all(ScorerClient& scorer, const RerankInputs& inputs) {
    if (inputs.queries == nullptr || inputs.passages == nullptr) throw ConfigError("rerank needs queries and passages");
    const auto& sets = inputs.candidate_sets;
    for (const auto& set : sets) {
        if (!inputs.queries->contains(set.qid)) throw InsufficientDataError("candidate query '" + set.qid + "' has no query text");
        for (const auto& c : set.candidates)
            if (!inputs.passages->contains(c.docid))
                throw InsufficientDataError("candidate '" + c.docid + "' is missing from the corpus");
    }

    std::vector<std::vector<TrecRunEntry>> per_query(sets.size());
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mu;
    auto worker = [&] {
        for (std::size_t i = next.fetch_add(1); i < sets.size(); i = next.fetch_add(1)) {
            try {
                const auto& set = sets[i];
                std::vector<Passage> passages;
                passages.reserve(set.candidates.size());
                for (const auto& c : set.candidates) passages.push_back(inputs.passages->at(c.docid));
                auto scored = scorer.score_batch(inputs.queries->at(set.qid), passages, inputs.include_title);
                std::unordered_map<std::string, double> scores;
                for (auto& s : scored) scores.emplace(std::move(s.docid), s.score);
                per_query[i] = rerank(set, scores, inputs.tag);
            } catch (...) {
                std::lock_guard lock(failure_mu);
                if (!failure) failure = std::current_exception();
                next.store(sets.size());
                return;
            }
        }
    };
    {
        const std::size_t workers = std::min(scorer.endpoint().max_in_flight, sets.size());
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
    }
    if (failure) std::rethrow_exception(failure);

    std::vector<TrecRunEntry> run;
    for (auto& q : per_query) std::move(q.begin(), q.end(), std::back_inserter(run));
    return run;
}

}  // namespace exaranker
