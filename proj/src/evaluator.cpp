#include "evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <tuple>
#include <unordered_map>

#include "error.hpp"
#include "text.hpp"

namespace exaranker {

namespace {

constexpr double kDisplayTolerance = 0.0005 + 1e-9;

double dcg(std::span<const int> gains, int k) {
    double sum = 0.0;
    const auto n = std::min<std::size_t>(gains.size(), static_cast<std::size_t>(k));
    for (std::size_t i = 0; i < n; ++i)
        if (gains[i] > 0) sum += gains[i] / std::log2(static_cast<double>(i) + 2.0);
    return sum;
}

}  // namespace

void EvalConfig::validate() const {
    if (k < 1) throw ConfigError("cutoff k must be >= 1");
    if (std::find(zero_shot_dataset_ids.begin(), zero_shot_dataset_ids.end(), validation_dataset_id) !=
        zero_shot_dataset_ids.end())
        throw ConfigError("validation dataset '" + validation_dataset_id + "' is also listed as zero-shot");
    std::set<std::string> unique(zero_shot_dataset_ids.begin(), zero_shot_dataset_ids.end());
    if (unique.size() != zero_shot_dataset_ids.size()) throw ConfigError("duplicate zero-shot dataset id");
    if (zero_shot_dataset_ids.empty()) throw ConfigError("no zero-shot datasets configured");
}

// ---------------------------------------------------------------------------

nlohmann::ordered_json MetricReport::to_json() const {
    nlohmann::ordered_json j;
    j["dataset_id"] = dataset_id;
    j["metric"] = "ndcg_cut_" + std::to_string(k);
    j["k"] = k;
    j["mean"] = mean;
    j["n_queries"] = n_queries;
    j["per_query"] = nlohmann::ordered_json::object();
    for (const auto& [qid, v] : per_query) j["per_query"][qid] = v;
    return j;
}

MetricReport MetricReport::from_json(const nlohmann::json& doc) {
    try {
        MetricReport r;
        r.dataset_id = doc.value("dataset_id", std::string());
        r.k = doc.value("k", 10);
        r.mean = doc.at("mean").get<double>();
        r.n_queries = doc.value("n_queries", std::size_t{0});
        if (auto it = doc.find("per_query"); it != doc.end())
            for (const auto& [qid, v] : it->items()) r.per_query.emplace(qid, v.get<double>());
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(0, std::string("bad metric report: ") + e.what());
    }
}

MetricReport ndcg_at_k(std::span<const TrecRunEntry> run, const Qrels& qrels, int k, std::string dataset_id) {
    if (k < 1) throw ConfigError("cutoff k must be >= 1");

    std::unordered_map<std::string_view, std::vector<const TrecRunEntry*>> by_query;
    for (const auto& e : run) by_query[e.qid].push_back(&e);

    MetricReport report;
    report.dataset_id = std::move(dataset_id);
    report.k = k;
    double sum = 0.0;
    std::vector<int> gains;
    for (const auto& [qid, judged] : qrels.queries()) {
        gains.clear();
        for (const auto& [docid, grade] : judged) gains.push_back(grade);
        std::sort(gains.begin(), gains.end(), std::greater<>());
        const double ideal = dcg(gains, k);

        double value = 0.0;
        if (auto it = by_query.find(qid); it != by_query.end() && ideal > 0.0) {
            auto rows = it->second;
            const auto depth = std::min<std::size_t>(rows.size(), static_cast<std::size_t>(k));
            std::partial_sort(rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(depth), rows.end(),
                              [](const TrecRunEntry* a, const TrecRunEntry* b) {
                                  if (a->score != b->score) return a->score > b->score;
                                  return a->docid > b->docid;
                              });
            gains.clear();
            for (std::size_t i = 0; i < depth; ++i) {
                auto g = judged.find(rows[i]->docid);
                gains.push_back(g == judged.end() ? 0 : g->second);
            }
            value = dcg(gains, k) / ideal;
        }
        report.per_query.emplace(qid, value);
        sum += value;
    }
    report.n_queries = report.per_query.size();
    report.mean = report.n_queries ? sum / static_cast<double>(report.n_queries) : 0.0;
    return report;
}

double avg_zero_shot(const std::map<std::string, double>& means, const EvalConfig& config) {
    double sum = 0.0;
    for (const auto& id : config.zero_shot_dataset_ids) {
        auto it = means.find(id);
        if (it == means.end()) throw InsufficientDataError("missing zero-shot dataset '" + id + "'");
        sum += it->second;
    }
    return sum / static_cast<double>(config.zero_shot_dataset_ids.size());
}

int select_checkpoint(std::span<const CheckpointScore> history) {
    if (history.empty()) throw InsufficientDataError("checkpoint history is empty");
    const CheckpointScore* best = &history.front();
    for (const auto& h : history) {
        if (!std::isfinite(h.validation_ndcg)) throw InvariantError("non-finite validation score at epoch " + std::to_string(h.epoch));
        if (h.validation_ndcg > best->validation_ndcg ||
            (h.validation_ndcg == best->validation_ndcg && h.epoch < best->epoch))
            best = &h;
    }
    return best->epoch;
}

// ---------------------------------------------------------------------------

double ComparisonRow::zero_shot_average(const EvalConfig& config) const {
    const bool complete = std::all_of(config.zero_shot_dataset_ids.begin(), config.zero_shot_dataset_ids.end(),
                                      [&](const std::string& id) { return means.contains(id); });
    if (!avg_zs) return avg_zero_shot(means, config);
    if (complete) {
        const double computed = avg_zero_shot(means, config);
        if (std::abs(computed - *avg_zs) > kDisplayTolerance)
            throw InvariantError("row '" + model_name + "' (" + format_ft_pos(ft_pos) + "): stated Avg ZS " +
                                 format_display(*avg_zs) + " disagrees with the mean of its datasets " +
                                 text::format_fixed(computed, 4));
    }
    return *avg_zs;
}

nlohmann::ordered_json ComparisonRow::to_json(const EvalConfig& config) const {
    nlohmann::ordered_json j;
    j["model"] = model_name;
    j["llm"] = llm;
    j["ft_pos"] = ft_pos;
    if (attempt) j["attempt"] = *attempt;
    j["means"] = nlohmann::ordered_json::object();
    for (const auto& [id, v] : means) j["means"][id] = v;
    j["avg_zs"] = zero_shot_average(config);
    return j;
}

ComparisonRow ComparisonRow::from_json(const nlohmann::json& doc) {
    try {
        ComparisonRow row;
        row.model_name = doc.at("model").get<std::string>();
        row.llm = doc.value("llm", std::string("n/a"));
        row.ft_pos = doc.at("ft_pos").get<std::size_t>();
        if (auto it = doc.find("means"); it != doc.end())
            for (const auto& [id, v] : it->items()) row.means.emplace(id, v.get<double>());
        if (auto it = doc.find("avg_zs"); it != doc.end() && !it->is_null()) row.avg_zs = it->get<double>();
        if (auto it = doc.find("attempt"); it != doc.end() && !it->is_null()) row.attempt = it->get<int>();
        return row;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(0, std::string("bad comparison row: ") + e.what());
    }
}

nlohmann::ordered_json ImprovementReport::to_json() const {
    nlohmann::ordered_json j;
    j["per_size"] = nlohmann::ordered_json::array();
    for (const auto& d : per_size)
        j["per_size"].push_back({{"ft_pos", d.ft_pos}, {"avg_zs_a", d.avg_a}, {"avg_zs_b", d.avg_b}, {"delta", d.delta},
                                 {"delta_points", round_display(d.delta * 100.0, 1)}});
    j["mean_delta"] = mean_delta;
    j["mean_delta_points"] = round_display(mean_delta * 100.0, 1);
    return j;
}

ImprovementReport improvement_report(std::span<const ComparisonRow> rows_a, std::span<const ComparisonRow> rows_b,
                                     const EvalConfig& config) {
    std::map<std::size_t, const ComparisonRow*> b_by_size;
    for (const auto& b : rows_b)
        if (!b_by_size.emplace(b.ft_pos, &b).second)
            throw InvariantError("two baseline rows for Ft Pos. " + format_ft_pos(b.ft_pos));
    std::set<std::size_t> seen_a;
    ImprovementReport report;
    for (const auto& a : rows_a) {
        if (!seen_a.insert(a.ft_pos).second) throw InvariantError("two rows for Ft Pos. " + format_ft_pos(a.ft_pos));
        auto it = b_by_size.find(a.ft_pos);
        if (it == b_by_size.end()) throw InvariantError("no baseline row with Ft Pos. " + format_ft_pos(a.ft_pos));
        const double avg_a = a.zero_shot_average(config);
        const double avg_b = it->second->zero_shot_average(config);
        report.per_size.push_back({a.ft_pos, avg_a, avg_b, avg_a - avg_b});
    }
    for (const auto& [size, row] : b_by_size)
        if (!seen_a.contains(size)) throw InvariantError("baseline row with Ft Pos. " + format_ft_pos(size) + " has no partner");
    if (report.per_size.empty()) throw InsufficientDataError("no rows to compare");
    double sum = 0.0;
    for (const auto& d : report.per_size) sum += d.delta;
    report.mean_delta = sum / static_cast<double>(report.per_size.size());
    return report;
}

std::vector<ComparisonRow> with_attempt_means(std::span<const ComparisonRow> rows, const EvalConfig& config) {
    using Key = std::tuple<std::string, std::string, std::size_t>;
    std::vector<Key> order;
    std::map<Key, std::vector<const ComparisonRow*>> groups;
    for (const auto& r : rows) {
        Key key{r.model_name, r.llm, r.ft_pos};
        auto [it, inserted] = groups.try_emplace(key);
        if (inserted) order.push_back(key);
        it->second.push_back(&r);
    }
    std::vector<ComparisonRow> out;
    for (const auto& key : order) {
        const auto& members = groups.at(key);
        for (const auto* r : members) out.push_back(*r);
        const bool attempts = std::any_of(members.begin(), members.end(), [](auto* r) { return r->attempt.has_value(); });
        if (members.size() < 2 || !attempts) continue;
        ComparisonRow mean{std::get<0>(key), std::get<1>(key), std::get<2>(key), {}, std::nullopt, std::nullopt};
        std::map<std::string, std::pair<double, std::size_t>> acc;
        for (const auto* r : members)
            for (const auto& [id, v] : r->means) {
                acc[id].first += v;
                ++acc[id].second;
            }
        for (const auto& [id, s] : acc)
            if (s.second == members.size()) mean.means[id] = s.first / static_cast<double>(s.second);
        double avg = 0.0;
        for (const auto* r : members) avg += r->zero_shot_average(config);
        mean.avg_zs = avg / static_cast<double>(members.size());
        out.push_back(std::move(mean));
    }
    return out;
}

// ---------------------------------------------------------------------------

double round_display(double value, int decimals) {
    const double scale = std::pow(10.0, decimals);
    const double scaled = value * scale;
    return std::round(scaled + std::copysign(1e-9 * std::max(1.0, std::abs(scaled)), scaled)) / scale;
}

std::string format_display(double value, int decimals) {
    return text::format_fixed(round_display(value, decimals), decimals);
}

std::string format_ft_pos(std::size_t ft_pos) {
    if (ft_pos < 1000) return std::to_string(ft_pos);
    if (ft_pos % 1000 == 0) return std::to_string(ft_pos / 1000) + "k";
    std::string s = text::format_fixed(static_cast<double>(ft_pos) / 1000.0, 1);
    return s + "k";
}

std::string dataset_header(std::string_view id) {
    static const std::map<std::string, std::string, std::less<>> kHeaders{
        {"dl20", "DL 20"},     {"robust04", "Robust"}, {"trec-covid", "Covid"},    {"dbpedia", "Dbp"},
        {"dbpedia-entity", "Dbp"}, {"fiqa", "FiQA"},   {"trec-news", "News"},      {"nfcorpus", "NFC"},
    };
    auto it = kHeaders.find(id);
    return it == kHeaders.end() ? std::string(id) : it->second;
}

namespace {

std::vector<std::vector<std::string>> table_cells(std::span<const ComparisonRow> rows, const EvalConfig& config,
                                                  bool full_precision) {
    std::vector<std::string> datasets{config.validation_dataset_id};
    datasets.insert(datasets.end(), config.zero_shot_dataset_ids.begin(), config.zero_shot_dataset_ids.end());
    std::vector<std::vector<std::string>> cells;
    for (const auto& r : rows) {
        std::string model = r.model_name;
        if (!full_precision && r.attempt) model += " #" + std::to_string(*r.attempt);
        std::vector<std::string> line{model, r.llm, full_precision ? std::to_string(r.ft_pos) : format_ft_pos(r.ft_pos)};
        if (full_precision) line.push_back(r.attempt ? std::to_string(*r.attempt) : "");
        for (const auto& id : datasets) {
            auto it = r.means.find(id);
            if (it == r.means.end())
                line.emplace_back(full_precision ? "" : "-");
            else
                line.push_back(full_precision ? text::format_fixed(it->second, 6) : format_display(it->second));
        }
        const double avg = r.zero_shot_average(config);
        line.push_back(full_precision ? text::format_fixed(avg, 6) : format_display(avg));
        cells.push_back(std::move(line));
    }
    return cells;
}

}  // namespace

std::string comparison_table(std::span<const ComparisonRow> rows, const EvalConfig& config) {
    std::vector<std::string> header{"Model", "LLM", "Ft Pos.", dataset_header(config.validation_dataset_id)};
    for (const auto& id : config.zero_shot_dataset_ids) header.push_back(dataset_header(id));
    header.emplace_back("Avg ZS");
    auto cells = table_cells(rows, config, false);

    std::vector<std::size_t> width(header.size());
    for (std::size_t c = 0; c < header.size(); ++c) {
        width[c] = header[c].size();
        for (const auto& line : cells) width[c] = std::max(width[c], line[c].size());
    }
    std::ostringstream out;
    auto emit = [&](const std::vector<std::string>& line) {
        std::string buf;
        for (std::size_t c = 0; c < line.size(); ++c) {
            if (c) buf += "  ";
            // Text columns left-aligned, numbers right-aligned.
            const auto pad = std::string(width[c] - line[c].size(), ' ');
            buf += c < 2 ? line[c] + pad : pad + line[c];
        }
        out << text::rtrim(buf) << '\n';
    };
    emit(header);
    std::size_t total = 0;
    for (auto w : width) total += w;
    out << std::string(total + 2 * (width.size() - 1), '-') << '\n';
    for (const auto& line : cells) emit(line);
    return out.str();
}

std::string comparison_csv(std::span<const ComparisonRow> rows, const EvalConfig& config) {
    std::ostringstream out;
    out << "model,llm,ft_pos,attempt," << config.validation_dataset_id;
    for (const auto& id : config.zero_shot_dataset_ids) out << ',' << id;
    out << ",avg_zs\n";
    for (const auto& line : table_cells(rows, config, true)) {
        for (std::size_t c = 0; c < line.size(); ++c) {
            if (c) out << ',';
            const bool quote = line[c].find_first_of(",\"") != std::string::npos;
            if (!quote) {
                out << line[c];
                continue;
            }
            out << '"';
            for (char ch : line[c]) out << (ch == '"' ? "\"\"" : std::string(1, ch));
            out << '"';
        }
        out << '\n';
    }
    return out.str();
}

}  // namespace exaranker
