/* SPDX-License-Identifier: Apache-2.0 */
#ifndef SAPD_SAPD_H
#define SAPD_SAPD_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(SAPD_BUILDING_LIBRARY)
#    define SAPD_API __declspec(dllexport)
#  else
#    define SAPD_API __declspec(dllimport)
#  endif
#else
#  define SAPD_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum sapd_status {
  SAPD_OK = 0,
  SAPD_ERR_INVALID_ARGUMENT = 1,
  SAPD_ERR_CONFIG = 2,
  SAPD_ERR_IO = 3,
  SAPD_ERR_DIVERGED = 4,
  SAPD_ERR_OUT_OF_RANGE = 5,
  SAPD_ERR_INTERNAL = 6
} sapd_status;

typedef struct sapd_config sapd_config;
typedef struct sapd_model sapd_model;
typedef struct sapd_detections sapd_detections;

typedef struct sapd_detection {
  int32_t class_id;
  float score;
  float x1, y1, x2, y2;
  int32_t level;
} sapd_detection;

typedef struct sapd_metrics {
  double ap;   /* mean over IoU 0.50:0.95 */
  double ap50;
  double ap75;
} sapd_metrics;

/* Receives one human-readable progress line (no trailing newline). */
typedef void (*sapd_progress_fn)(void* user, const char* line);

/* Message of the last failure on the calling thread; never NULL. */
SAPD_API const char* sapd_last_error(void);
/* Stable lowercase identifier such as "config" or "io". */
SAPD_API const char* sapd_status_name(sapd_status status);
SAPD_API const char* sapd_version(void);

/* ---- configuration ---- */

SAPD_API sapd_status sapd_config_create(sapd_config** out);
SAPD_API sapd_status sapd_config_load(const char* path, sapd_config** out);
SAPD_API void sapd_config_destroy(sapd_config* config);
SAPD_API sapd_status sapd_config_set(sapd_config* config, const char* key, const char* value);
/* "key=value" */
SAPD_API sapd_status sapd_config_apply_override(sapd_config* config, const char* assignment);
/* Checks ranges and cross-key consistency. */
SAPD_API sapd_status sapd_config_validate(const sapd_config* config);
/* Copies the value into buf (NUL-terminated); *needed gets the full length
 * including the terminator. A NULL buf only queries the size; a buf that is
 * too small yields SAPD_ERR_OUT_OF_RANGE. */
SAPD_API sapd_status sapd_config_get(const sapd_config* config, const char* key, char* buf,
                                     size_t capacity, size_t* needed);
/* Writes every key with its resolved value. */
SAPD_API sapd_status sapd_config_save(const sapd_config* config, const char* path);

/* ---- data ---- */

/* Writes `count` scenes drawn from `seed` into dir. */
SAPD_API sapd_status sapd_generate_dataset(const sapd_config* config, const char* dir,
                                           int32_t count, uint64_t seed);
/* Writes the configured train and test sets into dir/train and dir/test. */
SAPD_API sapd_status sapd_generate_default_datasets(const sapd_config* config, const char* dir);

/* ---- training ---- */

/* Trains on the dataset in data_dir (NULL: the configured synthetic train
 * set) and writes metrics.csv and checkpoint.bin into run_dir. On success
 * *out_model, when non-NULL, receives the trained model. */
SAPD_API sapd_status sapd_train(const sapd_config* config, const char* data_dir,
                                const char* run_dir, sapd_progress_fn progress, void* user,
                                sapd_model** out_model);

SAPD_API sapd_status sapd_model_load(const sapd_config* config, const char* checkpoint,
                                     sapd_model** out);
SAPD_API sapd_status sapd_model_save(const sapd_model* model, const char* path);
SAPD_API void sapd_model_destroy(sapd_model* model);

/* ---- inference and evaluation ---- */

SAPD_API sapd_status sapd_infer_image(const sapd_model* model, const char* ppm_path,
                                      sapd_detections** out);
SAPD_API size_t sapd_detections_count(const sapd_detections* detections);
SAPD_API sapd_status sapd_detections_get(const sapd_detections* detections, size_t index,
                                         sapd_detection* out);
/* Appends one JSON line for image_name. */
SAPD_API sapd_status sapd_detections_write(const sapd_detections* detections,
                                           const char* image_name, const char* path);
SAPD_API void sapd_detections_destroy(sapd_detections* detections);

/* Runs the model over data_dir (NULL: the configured synthetic test set);
 * writes detections.jsonl and metrics.json into run_dir. */
SAPD_API sapd_status sapd_evaluate_model(const sapd_model* model, const char* data_dir,
                                         const char* run_dir, sapd_metrics* out);
/* Scores a detections JSON-lines file against the dataset in data_dir
 * (NULL: the configured synthetic test set). */
SAPD_API sapd_status sapd_evaluate_detections(const sapd_config* config,
                                              const char* detections_path, const char* data_dir,
                                              sapd_metrics* out);

/* ---- inspection and experiments ---- */

/* Writes selection_weights.csv and weight_maps/ into run_dir. */
SAPD_API sapd_status sapd_dump_weights(sapd_model* model, const char* data_dir,
                                       const char* run_dir);

/* Number of configurations in the ablation grid. */
SAPD_API sapd_status sapd_ablation_size(const sapd_config* config, size_t* out);
/* Trains and evaluates every grid configuration; writes ablation.csv into
 * run_dir, one row per configuration. */
SAPD_API sapd_status sapd_ablate(const sapd_config* config, const char* train_dir,
                                 const char* test_dir, const char* run_dir,
                                 sapd_progress_fn progress, void* user);

#ifdef __cplusplus
}
#endif

#endif
