#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "corpus_io.hpp"

namespace exaranker {

struct EvalConfig {
    int k = 10;
    std::string validation_dataset_id = "dl20";
    std::vector<std::string> zero_shot_dataset_ids{"robust04", "trec-covid", "dbpedia", "fiqa", "trec-news", "nfcorpus"};

    void validate() const;
};

struct MetricReport {
    std::string dataset_id;
    int k = 10;
    std::map<std::string, double> per_query;
    double mean = 0.0;
    std::size_t n_queries = 0;

    nlohmann::ordered_json to_json() const;
    static MetricReport from_json(const nlohmann::json& doc);
};

/// trec_eval `ndcg_cut.k` with linear gain. Each query's run entries are
/// re-sorted by (score desc, docid desc); ranks in the run are ignored.
/// DCG@k = sum over the top k of grade / log2(rank + 1), unjudged docs count 0;
/// IDCG@k is the same sum over the query's judged grades sorted descending;
/// nDCG is 0 when IDCG is 0. Every qrels query is scored (0 when absent from
/// the run); run-only queries are ignored. The mean sums in qid order.
MetricReport ndcg_at_k(std::span<const TrecRunEntry> run, const Qrels& qrels, int k, std::string dataset_id = {});

/// Unweighted mean of the configured zero-shot datasets. Throws naming the
/// first missing dataset.
double avg_zero_shot(const std::map<std::string, double>& means, const EvalConfig& config);

struct CheckpointScore {
    int epoch = 0;
    double validation_ndcg = 0.0;
};

/// Epoch with the highest validation score; ties go to the earliest epoch.
int select_checkpoint(std::span<const CheckpointScore> history);

/// One row of a comparison table.
struct ComparisonRow {
    std::string model_name;
    std::string llm = "n/a";
    std::size_t ft_pos = 0;
    std::map<std::string, double> means;
    /// A published average to use instead of recomputing. Must agree with the
    /// recomputed mean to display precision when all zero-shot means are present.
    std::optional<double> avg_zs;
    std::optional<int> attempt;

    double zero_shot_average(const EvalConfig& config) const;

    nlohmann::ordered_json to_json(const EvalConfig& config) const;
    static ComparisonRow from_json(const nlohmann::json& doc);
};

struct ImprovementReport {
    struct SizeDelta {
        std::size_t ft_pos = 0;
        double avg_a = 0.0;
        double avg_b = 0.0;
        double delta = 0.0;
    };
    std::vector<SizeDelta> per_size;
    double mean_delta = 0.0;

    nlohmann::ordered_json to_json() const;
};

/// Pairs rows by ft_pos (order of `rows_a`) and reports avg_zs(a) - avg_zs(b)
/// per size plus the mean over sizes. Every row must have exactly one partner.
ImprovementReport improvement_report(std::span<const ComparisonRow> rows_a, std::span<const ComparisonRow> rows_b,
                                     const EvalConfig& config);

/// Collapses rows sharing (model, llm, ft_pos) across attempts: the per-attempt
/// rows are kept and followed by one mean row without an attempt number.
std::vector<ComparisonRow> with_attempt_means(std::span<const ComparisonRow> rows, const EvalConfig& config);

/// Half-away-from-zero rounding to `decimals` places, robust to binary
/// representation error (0.4745 rounds to 0.475).
double round_display(double value, int decimals = 3);
std::string format_display(double value, int decimals = 3);

/// "15k", "2.5k", "300".
std::string format_ft_pos(std::size_t ft_pos);

/// Short column header for a dataset id ("robust04" -> "Robust").
std::string dataset_header(std::string_view dataset_id);

/// Aligned text table: Model, LLM, Ft Pos., validation column, zero-shot columns, Avg ZS.
std::string comparison_table(std::span<const ComparisonRow> rows, const EvalConfig& config);

/// CSV of the same rows at full precision, one line per row, for plotting
/// Avg ZS against training size.
std::string comparison_csv(std::span<const ComparisonRow> rows, const EvalConfig& config);

}  // namespace exaranker
