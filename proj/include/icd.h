#ifndef ICD_H
#define ICD_H

/* C interface to the in-context distillation engine.
 *
 * Every function returns an icd_status; on failure the thread-local message
 * from icd_last_error() describes what went wrong. Strings returned through
 * out-parameters are heap-allocated and must be released with
 * icd_string_free().
 */

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum icd_status {
  ICD_OK = 0,
  ICD_ERR_CONFIG = 1,   /* bad config, dataset, or arguments */
  ICD_ERR_RUNTIME = 2,  /* backend or I/O failure mid-run */
  ICD_BUDGET_EXHAUSTED = 3,
} icd_status;

typedef struct icd_engine icd_engine;

/* Thread-local message for the most recent failing call on this thread. */
const char* icd_last_error(void);

void icd_string_free(char* s);

const char* icd_version(void);

/* Builds an engine from a config JSON document (string, not a path). */
icd_status icd_engine_create(const char* config_json, icd_engine** out);
void icd_engine_destroy(icd_engine* engine);

/* Runs one baseline over a JSONL dataset. baseline is one of: zero_shot,
 * cot, best_of_n_student, self_labeling, icd_online, icd_offline,
 * oracle_demos. Writes <out_dir>/<baseline>.report.jsonl and .series.csv
 * when out_dir is non-NULL/non-empty. When out_report_json is non-NULL it
 * receives the report header JSON. */
icd_status icd_run_baseline(icd_engine* engine, const char* baseline,
                            const char* dataset_path, const char* out_dir,
                            char** out_report_json);

/* Runs a sweep described by a spec JSON document
 * {"axis": ..., "values": [...], "repeats": n, "baseline": ...};
 * writes per-cell reports plus summary.csv/summary.json under out_dir.
 * When out_summary_json is non-NULL it receives the summary JSON. */
icd_status icd_run_sweep(icd_engine* engine, const char* spec_json,
                         const char* dataset_path, const char* out_dir,
                         char** out_summary_json);

/* Fits the uncertainty gate threshold on a golded validation set and
 * returns {"delta": ..., "r": ..., "p_value": ..., "n": ...}. */
icd_status icd_calibrate(icd_engine* engine, const char* validation_path,
                         char** out_json);

/* Runs each named selector (comma-separated list, e.g.
 * "icd_cross_modal,rices,random") over one shared annotated pool and
 * returns a JSON array of {selector, metric_value, demonstration_accuracy}. */
icd_status icd_compare_selectors(icd_engine* engine, const char* selectors,
                                 const char* dataset_path, const char* out_dir,
                                 char** out_json);

/* Annotates a share of a support dataset into a pool snapshot file. */
icd_status icd_pool_build(icd_engine* engine, const char* support_path,
                          double fraction, const char* out_pool_path);

/* Reads a pool snapshot and returns {"entries": n, "dimension": d,
 * "encoder_id": ..., "sources": {...}}. Needs no engine. */
icd_status icd_pool_inspect(const char* pool_path, char** out_json);

/* Writes a deterministic synthetic dataset; sim_json is a config document
 * (see the simulation section of the engine config). Needs no engine. */
icd_status icd_make_sim_data(const char* sim_json, const char* out_path);

#ifdef __cplusplus
}
#endif

#endif /* ICD_H */
