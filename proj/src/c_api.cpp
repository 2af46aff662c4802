#include "exaranker/exaranker.h"

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <new>
#include <string>
#include <vector>

#include <json.hpp>

#include "augmenter.hpp"
#include "corpus_io.hpp"
#include "error.hpp"
#include "evaluator.hpp"
#include "pipeline.hpp"
#include "response_cache.hpp"

using namespace exaranker;

struct exr_pipeline {
    Pipeline pipeline;
};

struct exr_qrels {
    Qrels qrels;
};

struct exr_run {
    std::vector<TrecRunEntry> entries;
};

namespace {

thread_local std::string g_last_error;

exr_status status_of(ErrorCode code) {
    switch (code) {
        case ErrorCode::invalid_argument: return EXR_ERR_INVALID_ARGUMENT;
        case ErrorCode::config: return EXR_ERR_CONFIG;
        case ErrorCode::io: return EXR_ERR_IO;
        case ErrorCode::parse: return EXR_ERR_PARSE;
        case ErrorCode::invariant: return EXR_ERR_INVARIANT;
        case ErrorCode::insufficient_data: return EXR_ERR_INSUFFICIENT_DATA;
        case ErrorCode::network: return EXR_ERR_NETWORK;
        case ErrorCode::protocol: return EXR_ERR_PROTOCOL;
    }
    return EXR_ERR_INTERNAL;
}

exr_status fail(exr_status status, std::string message) {
    g_last_error = std::move(message);
    return status;
}

template <typename F>
exr_status guarded(F&& body) {
    try {
        g_last_error.clear();
        body();
        return EXR_OK;
    } catch (const Error& e) {
        return fail(status_of(e.code()), e.what());
    } catch (const nlohmann::json::exception& e) {
        return fail(EXR_ERR_PARSE, std::string("JSON: ") + e.what());
    } catch (const std::filesystem::filesystem_error& e) {
        return fail(EXR_ERR_IO, e.what());
    } catch (const std::bad_alloc&) {
        return fail(EXR_ERR_INTERNAL, "out of memory");
    } catch (const std::exception& e) {
        return fail(EXR_ERR_INTERNAL, e.what());
    } catch (...) {
        return fail(EXR_ERR_INTERNAL, "unknown error");
    }
}

char* dup_string(const std::string& s) {
    char* out = static_cast<char*>(std::malloc(s.size() + 1));
    if (!out) throw std::bad_alloc();
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

void need(const void* p, const char* what) {
    if (!p) throw Error(ErrorCode::invalid_argument, std::string(what) + " must not be NULL");
}

}  // namespace

extern "C" {

const char* exr_version(void) { return "0.1.0"; }

const char* exr_status_name(exr_status status) {
    switch (status) {
        case EXR_OK: return "ok";
        case EXR_ERR_INVALID_ARGUMENT: return "invalid_argument";
        case EXR_ERR_CONFIG: return "config";
        case EXR_ERR_IO: return "io";
        case EXR_ERR_PARSE: return "parse";
        case EXR_ERR_INVARIANT: return "invariant";
        case EXR_ERR_INSUFFICIENT_DATA: return "insufficient_data";
        case EXR_ERR_NETWORK: return "network";
        case EXR_ERR_PROTOCOL: return "protocol";
        case EXR_ERR_INTERNAL: return "internal";
    }
    return "unknown";
}

const char* exr_last_error(void) { return g_last_error.c_str(); }

void exr_string_free(char* s) { std::free(s); }

exr_status exr_pipeline_create(const char* config_json, exr_pipeline** out) {
    return guarded([&] {
        need(out, "out");
        *out = nullptr;
        nlohmann::json doc = nlohmann::json::object();
        if (config_json && *config_json) {
            try {
                doc = nlohmann::json::parse(config_json);
            } catch (const nlohmann::json::parse_error& e) {
                throw ConfigError(std::string("config is not valid JSON: ") + e.what());
            }
        }
        *out = new exr_pipeline{Pipeline(PipelineConfig::from_json(doc))};
    });
}

void exr_pipeline_destroy(exr_pipeline* pipeline) { delete pipeline; }

exr_status exr_pipeline_config(const exr_pipeline* pipeline, char** out_json) {
    return guarded([&] {
        need(pipeline, "pipeline");
        need(out_json, "out_json");
        *out_json = dup_string(pipeline->pipeline.config().to_json().dump(2));
    });
}

exr_status exr_pipeline_run(exr_pipeline* pipeline, exr_stage stage, char** out_summary) {
    return guarded([&] {
        need(pipeline, "pipeline");
        if (out_summary) *out_summary = nullptr;
        auto& p = pipeline->pipeline;
        nlohmann::ordered_json summary;
        switch (stage) {
            case EXR_STAGE_SAMPLE: summary = p.sample(); break;
            case EXR_STAGE_AUGMENT: summary = p.augment(false); break;
            case EXR_STAGE_AUGMENT_DRY_RUN: summary = p.augment(true); break;
            case EXR_STAGE_EXPORT: summary = p.export_finetune(); break;
            case EXR_STAGE_RERANK: summary = p.rerank(); break;
            case EXR_STAGE_EVAL: summary = p.eval(); break;
            case EXR_STAGE_REPORT: summary = p.report(); break;
            default: throw Error(ErrorCode::invalid_argument, "unknown stage " + std::to_string(stage));
        }
        if (out_summary) *out_summary = dup_string(summary.dump(2));
    });
}

exr_status exr_cache_compact(const char* path, size_t* out_kept) {
    return guarded([&] {
        need(path, "path");
        std::size_t kept = ResponseCache::compact(path);
        if (out_kept) *out_kept = kept;
    });
}

exr_status exr_qrels_create(exr_qrels** out) {
    return guarded([&] {
        need(out, "out");
        *out = new exr_qrels{};
    });
}

exr_status exr_qrels_load(const char* path, exr_qrels** out) {
    return guarded([&] {
        need(path, "path");
        need(out, "out");
        *out = nullptr;
        *out = new exr_qrels{load_qrels(path)};
    });
}

exr_status exr_qrels_add(exr_qrels* qrels, const char* qid, const char* docid, int grade) {
    return guarded([&] {
        need(qrels, "qrels");
        need(qid, "qid");
        need(docid, "docid");
        if (grade < 0) throw Error(ErrorCode::invalid_argument, "grade must be >= 0");
        qrels->qrels.add(qid, docid, grade);
    });
}

void exr_qrels_destroy(exr_qrels* qrels) { delete qrels; }

exr_status exr_run_create(exr_run** out) {
    return guarded([&] {
        need(out, "out");
        *out = new exr_run{};
    });
}

exr_status exr_run_load(const char* path, exr_run** out) {
    return guarded([&] {
        need(path, "path");
        need(out, "out");
        *out = nullptr;
        *out = new exr_run{load_run(path, RunCheck::lenient)};
    });
}

exr_status exr_run_add(exr_run* run, const char* qid, const char* docid, double score) {
    return guarded([&] {
        need(run, "run");
        need(qid, "qid");
        need(docid, "docid");
        if (!std::isfinite(score)) throw Error(ErrorCode::invalid_argument, "score must be finite");
        run->entries.push_back(TrecRunEntry{qid, docid, static_cast<int>(run->entries.size()) + 1, score, "c"});
    });
}

size_t exr_run_size(const exr_run* run) { return run ? run->entries.size() : 0; }

void exr_run_destroy(exr_run* run) { delete run; }

exr_status exr_ndcg_at_k(const exr_run* run, const exr_qrels* qrels, int k, double* out_mean, char** out_report_json) {
    return guarded([&] {
        need(run, "run");
        need(qrels, "qrels");
        need(out_mean, "out_mean");
        if (out_report_json) *out_report_json = nullptr;
        auto report = ndcg_at_k(run->entries, qrels->qrels, k);
        *out_mean = report.mean;
        if (out_report_json) *out_report_json = dup_string(report.to_json().dump());
    });
}

exr_status exr_avg_zero_shot(const char* means_json, const char* eval_config_json, double* out) {
    return guarded([&] {
        need(means_json, "means_json");
        need(out, "out");
        auto means = nlohmann::json::parse(means_json).get<std::map<std::string, double>>();
        EvalConfig config;
        if (eval_config_json && *eval_config_json) {
            auto doc = nlohmann::json::parse(eval_config_json);
            if (doc.contains("zero_shot_dataset_ids"))
                config.zero_shot_dataset_ids = doc["zero_shot_dataset_ids"].get<std::vector<std::string>>();
        }
        config.validate();
        *out = avg_zero_shot(means, config);
    });
}

exr_status exr_select_checkpoint(const int* epochs, const double* validation_ndcg, size_t n, int* out_epoch) {
    return guarded([&] {
        need(out_epoch, "out_epoch");
        if (n > 0) {
            need(epochs, "epochs");
            need(validation_ndcg, "validation_ndcg");
        }
        std::vector<CheckpointScore> history;
        for (size_t i = 0; i < n; ++i) history.push_back({epochs[i], validation_ndcg[i]});
        *out_epoch = select_checkpoint(history);
    });
}

exr_status exr_parse_llm_output(const char* text, const char* relevant_token, const char* non_relevant_token,
                                int* out_label, char** out_explanation) {
    return guarded([&] {
        need(text, "text");
        need(out_label, "out_label");
        if (out_explanation) *out_explanation = nullptr;
        LabelVocabulary vocab;
        if (relevant_token) vocab.relevant = relevant_token;
        if (non_relevant_token) vocab.non_relevant = non_relevant_token;
        auto parsed = parse_llm_output(text, vocab);
        if (!parsed) throw ParseError(0, "no label token at the start of the output");
        *out_label = parsed->label == Relevance::relevant ? 1 : 0;
        if (out_explanation) *out_explanation = dup_string(parsed->explanation);
    });
}

double exr_round_display(double value, int decimals) { return round_display(value, decimals); }

}  // extern "C"
