#include "sampler.hpp"

#include <algorithm>
#include <istream>
#include <optional>
#include <ostream>
#include <unordered_map>

#include <json.hpp>

#include "error.hpp"
#include "prng.hpp"
#include "text.hpp"

namespace exaranker {

namespace {

using Pool = std::vector<std::string>;

struct QueryPool {
    std::string qid;
    Pool docs;
};

/// Round-robin over pools in the given order until `limit` pairs are taken.
/// A query drops out once its pool is exhausted; the relative order of the rest is kept.
std::vector<std::pair<std::string, std::string>> round_robin(const std::vector<QueryPool>& pools, std::size_t limit) {
    std::vector<std::pair<std::string, std::string>> out;
    std::vector<const QueryPool*> active;
    for (const auto& p : pools)
        if (!p.docs.empty()) active.push_back(&p);
    for (std::size_t round = 0; out.size() < limit && !active.empty(); ++round) {
        std::vector<const QueryPool*> still;
        for (const auto* p : active) {
            if (out.size() >= limit) break;
            out.emplace_back(p->qid, p->docs[round]);
            if (round + 1 < p->docs.size()) still.push_back(p);
        }
        active = std::move(still);
    }
    return out;
}

std::size_t pool_total(const std::vector<QueryPool>& pools) {
    std::size_t n = 0;
    for (const auto& p : pools) n += p.docs.size();
    return n;
}

std::string join_some(const std::vector<std::string>& ids, std::size_t max_shown = 10) {
    std::string out;
    for (std::size_t i = 0; i < ids.size() && i < max_shown; ++i) {
        if (i) out += ", ";
        out += ids[i];
    }
    if (ids.size() > max_shown) out += ", ... (" + std::to_string(ids.size()) + " total)";
    return out;
}

bool is_positive(const Qrels& qrels, std::string_view qid, std::string_view docid, int threshold) {
    auto g = qrels.grade(qid, docid);
    return g && binarize(*g, threshold) == Relevance::relevant;
}

std::vector<std::pair<std::string, std::string>> candidate_negatives(const SampleInputs& in, const SamplePlan& plan,
                                                                     const std::vector<std::string>& order,
                                                                     Xoshiro256StarStar& rng) {
    if (in.candidate_run.empty())
        throw ConfigError("negative source 'candidate_run' requires a candidate run");
    auto sets = candidates_from_run(in.candidate_run, plan.candidate_depth);
    std::unordered_map<std::string_view, const CandidateSet*> by_qid;
    for (const auto& s : sets) by_qid.emplace(s.qid, &s);

    std::vector<QueryPool> pools;
    pools.reserve(order.size());
    for (const auto& qid : order) {
        auto it = by_qid.find(qid);
        if (it == by_qid.end()) continue;
        QueryPool pool{qid, {}};
        for (const auto& c : it->second->candidates)
            if (!is_positive(*in.qrels, qid, c.docid, plan.positive_threshold)) pool.docs.push_back(c.docid);
        std::sort(pool.docs.begin(), pool.docs.end());
        fisher_yates(std::span(pool.docs), rng);
        pools.push_back(std::move(pool));
    }
    const std::size_t available = pool_total(pools);
    if (available < plan.n_neg)
        throw InsufficientDataError("requested " + std::to_string(plan.n_neg) + " negatives but the candidate run offers " +
                                    std::to_string(available) + " non-positive candidates for sampled queries");
    return round_robin(pools, plan.n_neg);
}

std::vector<std::pair<std::string, std::string>> random_negatives(const SampleInputs& in, const SamplePlan& plan,
                                                                  const std::vector<std::string>& order,
                                                                  Xoshiro256StarStar& rng) {
    std::vector<std::string> pool;
    {
        auto reader = in.collection();
        while (auto p = reader->next()) pool.push_back(std::move(p->docid));
    }
    std::sort(pool.begin(), pool.end());
    if (auto dup = std::adjacent_find(pool.begin(), pool.end()); dup != pool.end())
        throw InvariantError("duplicate docid '" + *dup + "' in collection");
    fisher_yates(std::span(pool), rng);

    std::vector<std::pair<std::string, std::string>> out;
    if (order.empty()) throw InsufficientDataError("no queries with judged positives to pair negatives with");
    out.reserve(plan.n_neg);
    std::size_t cursor = 0;
    for (std::size_t j = 0; j < plan.n_neg; ++j) {
        const auto& qid = order[j % order.size()];
        while (cursor < pool.size() && is_positive(*in.qrels, qid, pool[cursor], plan.positive_threshold)) ++cursor;
        if (cursor >= pool.size())
            throw InsufficientDataError("requested " + std::to_string(plan.n_neg) + " negatives but the collection (" +
                                        std::to_string(pool.size()) + " passages) yields only " + std::to_string(j));
        out.emplace_back(qid, pool[cursor++]);
    }
    return out;
}

}  // namespace

std::string_view to_string(NegativeSource source) noexcept {
    return source == NegativeSource::candidate_run ? "candidate_run" : "random_collection";
}

NegativeSource negative_source_from_string(std::string_view name) {
    if (name == "candidate_run") return NegativeSource::candidate_run;
    if (name == "random_collection") return NegativeSource::random_collection;
    throw ConfigError("unknown negative source '" + std::string(name) + "' (expected candidate_run or random_collection)");
}

std::vector<LabeledPair> sample_pairs(const SampleInputs& in, const SamplePlan& plan) {
    if (in.qrels == nullptr) throw ConfigError("sampler needs qrels");
    if (plan.positive_threshold < 1) throw ConfigError("positive threshold must be >= 1");
    if (plan.n_pos == 0 && plan.n_neg == 0) return {};

    std::unordered_map<std::string_view, const Query*> queries;
    for (const auto& q : in.queries) queries.emplace(q.qid, &q);

    std::vector<QueryPool> positives;
    std::vector<std::string> missing;
    for (const auto& [qid, docs] : in.qrels->queries()) {
        QueryPool pool{qid, {}};
        for (const auto& [docid, grade] : docs)
            if (binarize(grade, plan.positive_threshold) == Relevance::relevant) pool.docs.push_back(docid);
        if (pool.docs.empty()) continue;
        if (!queries.contains(qid)) missing.push_back(qid);
        positives.push_back(std::move(pool));
    }
    if (!missing.empty()) throw InsufficientDataError("qrels reference queries missing from the queries file: " + join_some(missing));

    Xoshiro256StarStar rng(plan.seed);
    // `positives` is in ascending qid order (std::map); shuffle the queries, then each query's docids.
    fisher_yates(std::span(positives), rng);
    for (auto& pool : positives) fisher_yates(std::span(pool.docs), rng);

    const std::size_t available = pool_total(positives);
    if (available < plan.n_pos)
        throw InsufficientDataError("requested " + std::to_string(plan.n_pos) + " positives but qrels contain " +
                                    std::to_string(available) + " at threshold " + std::to_string(plan.positive_threshold));
    auto pos = round_robin(positives, plan.n_pos);

    std::vector<std::string> order;
    order.reserve(positives.size());
    for (const auto& p : positives) order.push_back(p.qid);

    std::vector<std::pair<std::string, std::string>> neg;
    if (plan.n_neg > 0)
        neg = plan.negative_source == NegativeSource::candidate_run ? candidate_negatives(in, plan, order, rng)
                                                                    : random_negatives(in, plan, order, rng);

    std::unordered_map<std::string, std::optional<std::string>> passage_text;
    for (const auto& [q, d] : pos) passage_text.emplace(d, std::nullopt);
    for (const auto& [q, d] : neg) passage_text.emplace(d, std::nullopt);
    {
        auto reader = in.collection();
        while (auto p = reader->next())
            if (auto it = passage_text.find(p->docid); it != passage_text.end()) it->second = std::move(p->text);
    }
    std::vector<std::string> absent;
    for (const auto& [docid, body] : passage_text)
        if (!body) absent.push_back(docid);
    if (!absent.empty()) {
        std::sort(absent.begin(), absent.end());
        throw InsufficientDataError("sampled docids missing from the collection: " + join_some(absent));
    }

    std::vector<LabeledPair> out;
    out.reserve(pos.size() + neg.size());
    auto emit = [&](const auto& list, Relevance label) {
        for (const auto& [qid, docid] : list) {
            out.push_back(LabeledPair{qid, docid, queries.at(qid)->text, *passage_text.at(docid), label});
        }
    };
    emit(pos, Relevance::relevant);
    emit(neg, Relevance::non_relevant);
    return out;
}

// ---------------------------------------------------------------------------

void write_pairs_jsonl(std::span<const LabeledPair> pairs, std::ostream& out) {
    for (const auto& p : pairs) {
        nlohmann::ordered_json row;
        row["qid"] = p.qid;
        row["docid"] = p.docid;
        row["query"] = p.query_text;
        row["passage"] = p.passage_text;
        row["label"] = static_cast<int>(p.label);
        out << row.dump() << '\n';
    }
    if (!out) throw IoError("failed writing sampled pairs");
}

std::vector<LabeledPair> read_pairs_jsonl(std::istream& in) {
    std::vector<LabeledPair> pairs;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (text::trim(line).empty()) continue;
        try {
            auto row = nlohmann::json::parse(line);
            int label = row.at("label").get<int>();
            if (label != 0 && label != 1) throw ParseError(line_no, "label must be 0 or 1");
            pairs.push_back(LabeledPair{row.at("qid").get<std::string>(), row.at("docid").get<std::string>(),
                                        row.at("query").get<std::string>(), row.at("passage").get<std::string>(),
                                        static_cast<Relevance>(label)});
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(line_no, std::string("bad sampled-pair row: ") + e.what());
        }
    }
    return pairs;
}

}  // namespace exaranker
