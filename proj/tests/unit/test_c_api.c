/* Exercises libexaranker through its C header only. */

#define _POSIX_C_SOURCE 200809L

#include <math.h>
#include <stdio.h>
#include <stdlib.h>
#include <string.h>

#include "exaranker/exaranker.h"

static int failures = 0;

#define EXPECT(cond)                                                        \
    do {                                                                    \
        if (!(cond)) {                                                      \
            fprintf(stderr, "%s:%d: expectation failed: %s\n", __FILE__, __LINE__, #cond); \
            ++failures;                                                     \
        }                                                                   \
    } while (0)

static void test_basics(void) {
    EXPECT(strcmp(exr_version(), "0.1.0") == 0);
    EXPECT(strcmp(exr_status_name(EXR_OK), "ok") == 0);
    EXPECT(strcmp(exr_status_name(EXR_ERR_CONFIG), "config") == 0);
    EXPECT(fabs(exr_round_display(0.4745, 3) - 0.475) < 1e-12);
}

static void test_ndcg(void) {
    exr_qrels* q = NULL;
    exr_run* r = NULL;
    double mean = -1.0;
    char* report = NULL;
    EXPECT(exr_qrels_create(&q) == EXR_OK);
    EXPECT(exr_run_create(&r) == EXR_OK);
    EXPECT(exr_qrels_add(q, "q1", "d1", 1) == EXR_OK);
    EXPECT(exr_qrels_add(q, "q1", "d1", 2) == EXR_ERR_PARSE);
    EXPECT(strlen(exr_last_error()) > 0);
    EXPECT(exr_qrels_add(q, "q1", "d9", -1) == EXR_ERR_INVALID_ARGUMENT);
    EXPECT(exr_run_add(r, "q1", "d2", 2.0) == EXR_OK);
    EXPECT(exr_run_add(r, "q1", "d1", 1.0) == EXR_OK);
    EXPECT(exr_run_size(r) == 2);
    EXPECT(exr_ndcg_at_k(r, q, 10, &mean, &report) == EXR_OK);
    EXPECT(fabs(mean - 1.0 / log2(3.0)) < 1e-12);
    EXPECT(report != NULL && strstr(report, "\"per_query\"") != NULL);
    exr_string_free(report);
    EXPECT(exr_ndcg_at_k(r, q, 0, &mean, NULL) == EXR_ERR_CONFIG);
    EXPECT(exr_ndcg_at_k(NULL, q, 10, &mean, NULL) == EXR_ERR_INVALID_ARGUMENT);
    exr_run_destroy(r);
    exr_qrels_destroy(q);
}

static void test_files(void) {
    exr_qrels* q = NULL;
    exr_run* r = NULL;
    double mean = 0.0;
    EXPECT(exr_qrels_load(EXR_SOURCE_DIR "/tests/fixtures/ndcg_parity/qrels.txt", &q) == EXR_OK);
    EXPECT(exr_run_load(EXR_SOURCE_DIR "/tests/fixtures/ndcg_parity/run.trec", &r) == EXR_OK);
    EXPECT(exr_ndcg_at_k(r, q, 10, &mean, NULL) == EXR_OK);
    EXPECT(mean > 0.0 && mean < 1.0);
    exr_run_destroy(r);
    exr_qrels_destroy(q);
    EXPECT(exr_qrels_load("/nonexistent/qrels.txt", &q) == EXR_ERR_IO);
}

static void test_zero_shot_and_checkpoints(void) {
    double avg = 0.0;
    int epoch = 0;
    const int epochs[] = {1, 2, 3};
    const double scores[] = {0.60, 0.66, 0.66};
    EXPECT(exr_avg_zero_shot("{\"robust04\":0.523,\"trec-covid\":0.746,\"dbpedia\":0.392,\"fiqa\":0.382,"
                             "\"trec-news\":0.409,\"nfcorpus\":0.344}",
                             NULL, &avg) == EXR_OK);
    EXPECT(fabs(exr_round_display(avg, 3) - 0.466) < 1e-12);
    EXPECT(exr_avg_zero_shot("{\"robust04\":0.5}", NULL, &avg) == EXR_ERR_INSUFFICIENT_DATA);
    EXPECT(strstr(exr_last_error(), "trec-covid") != NULL);
    EXPECT(exr_avg_zero_shot("{\"a\":0.2,\"b\":0.4}", "{\"zero_shot_dataset_ids\":[\"a\",\"b\"]}", &avg) == EXR_OK);
    EXPECT(fabs(avg - 0.3) < 1e-12);
    EXPECT(exr_avg_zero_shot("not json", NULL, &avg) == EXR_ERR_PARSE);
    EXPECT(exr_select_checkpoint(epochs, scores, 3, &epoch) == EXR_OK);
    EXPECT(epoch == 2);
    EXPECT(exr_select_checkpoint(epochs, scores, 0, &epoch) == EXR_ERR_INSUFFICIENT_DATA);
}

static void test_parse_output(void) {
    int label = -1;
    char* expl = NULL;
    EXPECT(exr_parse_llm_output("true. Explanation: because.", NULL, NULL, &label, &expl) == EXR_OK);
    EXPECT(label == 1);
    EXPECT(expl != NULL && strcmp(expl, "because.") == 0);
    exr_string_free(expl);
    expl = NULL;
    EXPECT(exr_parse_llm_output("No - wrong topic", "yes", "no", &label, &expl) == EXR_OK);
    EXPECT(label == 0);
    exr_string_free(expl);
    EXPECT(exr_parse_llm_output("The passage is about K2.", NULL, NULL, &label, &expl) == EXR_ERR_PARSE);
}

static void test_pipeline(void) {
    exr_pipeline* p = NULL;
    char* cfg = NULL;
    char* summary = NULL;
    EXPECT(exr_pipeline_create("{\"nope\":1}", &p) == EXR_ERR_CONFIG);
    EXPECT(p == NULL);
    EXPECT(exr_pipeline_create("{", &p) == EXR_ERR_CONFIG);

    char tmpl[] = "/tmp/exr-capi-XXXXXX";
    EXPECT(mkdtemp(tmpl) != NULL);
    char config[2048];
    snprintf(config, sizeof config,
             "{\"output_dir\":\"%s\",\"seed\":42,\"paths\":{"
             "\"queries\":\"" EXR_SOURCE_DIR "/tests/fixtures/toy/queries.tsv\","
             "\"collection\":\"" EXR_SOURCE_DIR "/tests/fixtures/toy/collection.tsv\","
             "\"qrels\":\"" EXR_SOURCE_DIR "/tests/fixtures/toy/qrels.txt\","
             "\"candidate_run\":\"" EXR_SOURCE_DIR "/tests/fixtures/toy/candidates.trec\"},"
             "\"sample\":{\"n_pos\":5,\"n_neg\":5}}",
             tmpl);
    EXPECT(exr_pipeline_create(config, &p) == EXR_OK);
    EXPECT(exr_pipeline_config(p, &cfg) == EXR_OK);
    EXPECT(cfg != NULL && strstr(cfg, "\"seed\": 42") != NULL);
    exr_string_free(cfg);
    EXPECT(exr_pipeline_run(p, EXR_STAGE_SAMPLE, &summary) == EXR_OK);
    EXPECT(summary != NULL && strstr(summary, "\"pairs\": 10") != NULL);
    exr_string_free(summary);
    EXPECT(exr_pipeline_run(p, (exr_stage)99, NULL) == EXR_ERR_INVALID_ARGUMENT);
    EXPECT(exr_pipeline_run(p, EXR_STAGE_EVAL, NULL) == EXR_ERR_CONFIG);
    EXPECT(strstr(exr_last_error(), "--run") != NULL);
    exr_pipeline_destroy(p);

    char cmd[512];
    snprintf(cmd, sizeof cmd, "rm -rf '%s'", tmpl);
    EXPECT(system(cmd) == 0);
}

int main(void) {
    test_basics();
    test_ndcg();
    test_files();
    test_zero_shot_and_checkpoints();
    test_parse_output();
    test_pipeline();
    if (failures) {
        fprintf(stderr, "%d expectation(s) failed\n", failures);
        return 1;
    }
    printf("c api: all expectations passed\n");
    return 0;
}
