#ifndef EXARANKER_EXARANKER_H
#define EXARANKER_EXARANKER_H

/*
 * C interface of libexaranker.
 *
 * Every fallible call returns an exr_status. On failure a message is stored
 * per thread and can be read with exr_last_error() until the next call on the
 * same thread. Strings returned through char** out-parameters are owned by the
 * caller and released with exr_string_free().
 */

#include <stddef.h>

#if defined(_WIN32)
#  if defined(EXR_BUILDING_LIBRARY)
#    define EXR_API __declspec(dllexport)
#  else
#    define EXR_API __declspec(dllimport)
#  endif
#else
#  define EXR_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum exr_status {
    EXR_OK = 0,
    EXR_ERR_INVALID_ARGUMENT = 1,
    EXR_ERR_CONFIG = 2,
    EXR_ERR_IO = 3,
    EXR_ERR_PARSE = 4,
    EXR_ERR_INVARIANT = 5,
    EXR_ERR_INSUFFICIENT_DATA = 6,
    EXR_ERR_NETWORK = 7,
    EXR_ERR_PROTOCOL = 8,
    EXR_ERR_INTERNAL = 9
} exr_status;

EXR_API const char* exr_version(void);
EXR_API const char* exr_status_name(exr_status status);
EXR_API const char* exr_last_error(void);
EXR_API void exr_string_free(char* s);

/* ---- pipeline ---------------------------------------------------------- */

typedef struct exr_pipeline exr_pipeline;

typedef enum exr_stage {
    EXR_STAGE_SAMPLE = 0,
    EXR_STAGE_AUGMENT = 1,
    EXR_STAGE_AUGMENT_DRY_RUN = 2,
    EXR_STAGE_EXPORT = 3,
    EXR_STAGE_RERANK = 4,
    EXR_STAGE_EVAL = 5,
    EXR_STAGE_REPORT = 6
} exr_stage;

/* config_json: a pipeline config document; NULL or "" selects the defaults. */
EXR_API exr_status exr_pipeline_create(const char* config_json, exr_pipeline** out);
EXR_API void exr_pipeline_destroy(exr_pipeline* pipeline);
/* Resolved configuration as JSON. */
EXR_API exr_status exr_pipeline_config(const exr_pipeline* pipeline, char** out_json);
/* Runs one stage; *out_summary (may be NULL) receives a JSON summary. */
EXR_API exr_status exr_pipeline_run(exr_pipeline* pipeline, exr_stage stage, char** out_summary);

/* Rewrites a generation cache file without torn lines or duplicate keys. */
EXR_API exr_status exr_cache_compact(const char* path, size_t* out_kept);

/* ---- evaluation -------------------------------------------------------- */

typedef struct exr_qrels exr_qrels;
typedef struct exr_run exr_run;

EXR_API exr_status exr_qrels_create(exr_qrels** out);
EXR_API exr_status exr_qrels_load(const char* path, exr_qrels** out);
EXR_API exr_status exr_qrels_add(exr_qrels* qrels, const char* qid, const char* docid, int grade);
EXR_API void exr_qrels_destroy(exr_qrels* qrels);

EXR_API exr_status exr_run_create(exr_run** out);
/* Loads a six-column run without rank checks. */
EXR_API exr_status exr_run_load(const char* path, exr_run** out);
EXR_API exr_status exr_run_add(exr_run* run, const char* qid, const char* docid, double score);
EXR_API size_t exr_run_size(const exr_run* run);
EXR_API void exr_run_destroy(exr_run* run);

/* nDCG@k with trec_eval ndcg_cut semantics. out_report_json may be NULL. */
EXR_API exr_status exr_ndcg_at_k(const exr_run* run, const exr_qrels* qrels, int k, double* out_mean,
                                 char** out_report_json);

/* means_json: {"dataset_id": mean, ...}. eval_config_json may be NULL for the
 * default six zero-shot datasets, or {"zero_shot_dataset_ids": [...]}. */
EXR_API exr_status exr_avg_zero_shot(const char* means_json, const char* eval_config_json, double* out);

EXR_API exr_status exr_select_checkpoint(const int* epochs, const double* validation_ndcg, size_t n, int* out_epoch);

/* *out_label: 1 relevant, 0 non-relevant. Returns EXR_ERR_PARSE when no label
 * token leads the text. NULL tokens select "true"/"false". */
EXR_API exr_status exr_parse_llm_output(const char* text, const char* relevant_token, const char* non_relevant_token,
                                        int* out_label, char** out_explanation);

EXR_API double exr_round_display(double value, int decimals);

#ifdef __cplusplus
}
#endif

#endif
