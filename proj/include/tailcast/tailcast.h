/* tailcast: heatwave forecasting with distribution-informed graph attention networks.
 *
 * Plain C interface over the C++ core. Objects are opaque handles owned by the caller and
 * released with the matching *_free function. Every fallible call returns a tc_status; on
 * failure tc_last_error() describes the most recent error on the calling thread.
 */
#ifndef TAILCAST_TAILCAST_H
#define TAILCAST_TAILCAST_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(TAILCAST_BUILDING_LIBRARY)
#    define TAILCAST_API __declspec(dllexport)
#  else
#    define TAILCAST_API __declspec(dllimport)
#  endif
#else
#  define TAILCAST_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Status values double as CLI exit codes. */
typedef enum tc_status {
  TC_OK = 0,
  TC_ERR_INTERNAL = 1,
  TC_ERR_CONFIG = 2,
  TC_ERR_DATA = 3,
  TC_ERR_NUMERIC = 4
} tc_status;

typedef struct tc_config tc_config;
typedef struct tc_result tc_result;
typedef struct tc_model tc_model;

TAILCAST_API const char* tc_version(void);

/* Message and error kind of the last failure on this thread; empty strings after success. */
TAILCAST_API const char* tc_last_error(void);
TAILCAST_API const char* tc_last_error_kind(void);

/* ---- run configuration ------------------------------------------------------------------ */

TAILCAST_API tc_status tc_config_new(tc_config** out);
TAILCAST_API void tc_config_free(tc_config* config);
/* Flat `key = value` file; later calls override earlier ones. */
TAILCAST_API tc_status tc_config_load(tc_config* config, const char* path);
TAILCAST_API tc_status tc_config_set(tc_config* config, const char* key, const char* value);
/* Applies TAILCAST_OUT when set. */
TAILCAST_API tc_status tc_config_apply_env(tc_config* config);
TAILCAST_API tc_status tc_config_validate(const tc_config* config);
/* Copies a NUL-terminated value into buf. *needed receives the size including the NUL,
 * so a first call with capacity 0 sizes the buffer. */
TAILCAST_API tc_status tc_config_get(const tc_config* config, const char* key, char* buf, size_t capacity,
                                     size_t* needed);
/* Whole configuration in file form. */
TAILCAST_API tc_status tc_config_text(const tc_config* config, char* buf, size_t capacity, size_t* needed);

TAILCAST_API size_t tc_config_key_count(void);
TAILCAST_API const char* tc_config_key_name(size_t index);
TAILCAST_API const char* tc_config_key_help(size_t index);

/* ---- commands --------------------------------------------------------------------------- */

typedef struct tc_epoch_info {
  size_t epoch;
  double train_loss;
  double val_loss;
  double val_balanced_accuracy;
  double val_precision;
  double val_recall;
  double val_f1;
  double val_accuracy;
} tc_epoch_info;

typedef void (*tc_epoch_callback)(void* user_data, const tc_epoch_info* info);

TAILCAST_API tc_status tc_run_synth(const tc_config* config, tc_result** out);
TAILCAST_API tc_status tc_run_ingest(const tc_config* config, tc_result** out);
TAILCAST_API tc_status tc_run_fit_evt(const tc_config* config, tc_result** out);
TAILCAST_API tc_status tc_run_build_graph(const tc_config* config, tc_result** out);
/* callback may be NULL. */
TAILCAST_API tc_status tc_run_train(const tc_config* config, tc_epoch_callback callback, void* user_data,
                                    tc_result** out);
TAILCAST_API tc_status tc_run_evaluate(const tc_config* config, const char* checkpoint, int threshold_sweep,
                                       int per_station, tc_result** out);
TAILCAST_API tc_status tc_run_compare(const tc_config* config, const char* report_a, const char* report_b,
                                      tc_result** out);

TAILCAST_API const char* tc_result_summary(const tc_result* result);
TAILCAST_API size_t tc_result_warning_count(const tc_result* result);
TAILCAST_API const char* tc_result_warning(const tc_result* result, size_t index);
TAILCAST_API size_t tc_result_output_count(const tc_result* result);
TAILCAST_API const char* tc_result_output(const tc_result* result, size_t index);
TAILCAST_API void tc_result_free(tc_result* result);

/* ---- models and metrics ----------------------------------------------------------------- */

typedef struct tc_metrics {
  uint64_t tp, tn, fp, fn;
  double accuracy;
  double balanced_accuracy;
  double precision;
  double recall;
  double tnr;
  double f1;
  int has_auc_roc;
  double auc_roc;
  int has_average_precision;
  double average_precision;
  double threshold;
} tc_metrics;

/* Trains per config without writing files. */
TAILCAST_API tc_status tc_model_train(const tc_config* config, tc_model** out);
TAILCAST_API tc_status tc_model_load(const char* path, tc_model** out);
TAILCAST_API tc_status tc_model_save(const tc_model* model, const char* path);
TAILCAST_API void tc_model_free(tc_model* model);
TAILCAST_API size_t tc_model_feature_count(const tc_model* model);
TAILCAST_API size_t tc_model_station_count(const tc_model* model);
/* Evaluates on the split and threshold named by config, reading data from its data_dir. */
TAILCAST_API tc_status tc_model_evaluate(const tc_model* model, const tc_config* config, tc_metrics* out);

/* Micro-averaged metrics of scores against 0/1 labels. */
TAILCAST_API tc_status tc_metrics_compute(const double* labels, const double* scores, size_t n, double threshold,
                                          tc_metrics* out);

/* ---- extreme value statistics ----------------------------------------------------------- */

TAILCAST_API tc_status tc_gpd_cdf(double y, double xi, double sigma, double* out);
/* Maximum likelihood fit of exceedances (values above the threshold, minus the threshold). */
TAILCAST_API tc_status tc_gpd_fit(const double* exceedances, size_t n, size_t min_exceedances, double* xi,
                                  double* sigma);

#ifdef __cplusplus
}
#endif

#endif /* TAILCAST_TAILCAST_H */
