/* Copyright (c) 2026, The wiper-lab authors
 * SPDX-License-Identifier: Apache-2.0 */

#ifndef WIPER_WIPER_H
#define WIPER_WIPER_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define WIPER_API __declspec(dllexport)
#else
#define WIPER_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum wiper_status {
  WIPER_OK = 0,
  WIPER_ERR_INVALID_ARGUMENT = 1,
  WIPER_ERR_CONFIG = 2,
  WIPER_ERR_CALIBRATION = 3,
  WIPER_ERR_IO = 4,
  WIPER_ERR_FORMAT = 5,
  WIPER_ERR_SHAPE = 6,
  WIPER_ERR_NON_FINITE = 7,
  WIPER_ERR_STATE = 8,
  WIPER_ERR_INTERNAL = 9
} wiper_status;

typedef enum wiper_split { WIPER_SPLIT_TRAIN = 0, WIPER_SPLIT_HOLDOUT = 1, WIPER_SPLIT_TEST = 2 } wiper_split;

typedef struct wiper_config wiper_config;
typedef struct wiper_dataset wiper_dataset;
typedef struct wiper_model wiper_model;

typedef struct wiper_dataset_info {
  size_t size;
  size_t height;
  size_t width;
  size_t channels;
  size_t classes;
} wiper_dataset_info;

/* Percentages in [0, 100]. */
typedef struct wiper_eval {
  double acc;
  double asr;
} wiper_eval;

typedef struct wiper_victim_info {
  wiper_eval before;
  double twin_acc;
  int calibrated;
  size_t poisoned_count;
} wiper_victim_info;

typedef struct wiper_matrix_info {
  size_t cells;
  size_t failed;
} wiper_matrix_info;

/* Message of the last failing call on this thread; empty after a success. */
WIPER_API const char* wiper_last_error(void);
WIPER_API const char* wiper_status_name(wiper_status status);
WIPER_API const char* wiper_version(void);

/* Configuration. Every key has a default; unknown keys are WIPER_ERR_CONFIG. */
WIPER_API wiper_status wiper_config_create(wiper_config** out);
WIPER_API wiper_status wiper_config_load(const char* path, wiper_config** out);
WIPER_API wiper_status wiper_config_clone(const wiper_config* cfg, wiper_config** out);
WIPER_API void wiper_config_free(wiper_config* cfg);
WIPER_API wiper_status wiper_config_set(wiper_config* cfg, const char* key, const char* value);
/* Copies the value with its terminator when it fits; *needed is the full length plus one. */
WIPER_API wiper_status wiper_config_get(const wiper_config* cfg, const char* key, char* buf, size_t cap,
                                        size_t* needed);
WIPER_API wiper_status wiper_config_save(const wiper_config* cfg, const char* path);
/* Writes 16 hex digits and a terminator. */
WIPER_API wiper_status wiper_config_hash(const wiper_config* cfg, char out[17]);

/* Datasets (DSK1 files). */
WIPER_API wiper_status wiper_dataset_generate(const wiper_config* cfg, wiper_split split, wiper_dataset** out);
WIPER_API wiper_status wiper_dataset_load(const char* path, wiper_dataset** out);
WIPER_API wiper_status wiper_dataset_save(const wiper_dataset* ds, const char* path);
WIPER_API wiper_status wiper_dataset_export_csv(const wiper_dataset* ds, const char* path);
WIPER_API wiper_status wiper_dataset_import_csv(const char* path, size_t height, size_t width, size_t channels,
                                                size_t classes, wiper_dataset** out);
WIPER_API wiper_status wiper_dataset_info_get(const wiper_dataset* ds, wiper_dataset_info* out);
WIPER_API void wiper_dataset_free(wiper_dataset* ds);

/* A trojannn trigger is carried as a one-sample dataset whose image is the patch. */
WIPER_API wiper_status wiper_trojan_synthesize(const wiper_config* cfg, const wiper_model* reference,
                                               const wiper_dataset* synthesis_set, wiper_dataset** patch_out);
/* `trojan_patch` is required for trojannn and ignored otherwise. `triggered_out` may be NULL. */
WIPER_API wiper_status wiper_dataset_poison(const wiper_config* cfg, const wiper_dataset* clean,
                                            const wiper_dataset* trojan_patch, wiper_dataset** poisoned_out,
                                            size_t* poisoned_count);
WIPER_API wiper_status wiper_dataset_trigger(const wiper_config* cfg, const wiper_dataset* clean,
                                             const wiper_dataset* trojan_patch, wiper_dataset** triggered_out);

/* Models (WIPR checkpoints). The architecture comes from the config. */
WIPER_API wiper_status wiper_model_build(const wiper_config* cfg, uint64_t seed, wiper_model** out);
WIPER_API wiper_status wiper_model_load(const wiper_config* cfg, const char* path, wiper_model** out);
WIPER_API wiper_status wiper_model_save(const wiper_model* model, const char* path);
WIPER_API wiper_status wiper_model_fan_in(const wiper_model* model, size_t* out);
WIPER_API void wiper_model_free(wiper_model* model);

/* Pipeline. `out_dir` may be NULL to skip file output. */

/* Trains twin and victim on the configured synthetic data. With victim.calibrate=true a missed
 * calibration returns WIPER_ERR_CALIBRATION after the outputs are written; *victim_out is still set.
 * Writes victim.wipr, twin.wipr, report.json, predictions.csv and (trojannn) trigger.dsk. */
WIPER_API wiper_status wiper_train_victim(const wiper_config* cfg, const char* out_dir, wiper_model** victim_out,
                                          wiper_victim_info* info);

/* Runs defense.kind on `victim`. A NULL holdout is generated from the config. Evaluation uses the
 * configured test set. Writes model.wipr, report.json, predictions.csv, curve.csv and
 * (wiper) importance.csv. */
WIPER_API wiper_status wiper_defend(const wiper_config* cfg, const wiper_model* victim, const wiper_dataset* holdout,
                                    const wiper_dataset* trojan_patch, const char* out_dir, wiper_model** out,
                                    wiper_eval* after);

/* NULL test/triggered sets are generated from the config. `dump_path` may be NULL. */
WIPER_API wiper_status wiper_evaluate(const wiper_config* cfg, const wiper_model* model, const wiper_dataset* test,
                                      const wiper_dataset* triggered, const wiper_dataset* trojan_patch,
                                      const char* dump_path, wiper_eval* out);

/* One CSV row per neuron of the purified layer: full-holdout BS, AM and the beta0 selection. */
WIPER_API wiper_status wiper_importance_dump(const wiper_config* cfg, const wiper_model* model,
                                             const wiper_dataset* holdout, const char* csv_path);

WIPER_API wiper_status wiper_run_matrix(const wiper_config* cfg, const char* out_dir, wiper_matrix_info* info);

WIPER_API wiper_status wiper_recompute_from_dump(const char* path, uint32_t target_label, wiper_eval* out);

#ifdef __cplusplus
}
#endif

#endif
