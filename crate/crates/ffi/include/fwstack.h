#ifndef FWSTACK_H
#define FWSTACK_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum FwsModelKind {
  FWS_MODEL_KIND_ARIMA = 0,
  FWS_MODEL_KIND_HOLT_WINTERS = 1,
  FWS_MODEL_KIND_PROPHET = 2,
  FWS_MODEL_KIND_LSTM = 3,
} FwsModelKind;

typedef enum FwsStatus {
  FWS_STATUS_OK = 0,
  FWS_STATUS_NULL_POINTER = 1,
  FWS_STATUS_INVALID_ARGUMENT = 2,
  FWS_STATUS_INVALID_SERIES = 3,
  FWS_STATUS_NO_VIABLE_MODEL = 4,
  FWS_STATUS_MODEL_FILE = 5,
  FWS_STATUS_IO = 6,
  FWS_STATUS_INTERNAL = 7,
  FWS_STATUS_PANIC = 8,
} FwsStatus;

/**
 * A loaded ensemble model file.
 */
typedef struct FwsBundle FwsBundle;

/**
 * A fitted base model.
 */
typedef struct FwsForecaster FwsForecaster;

typedef struct FwsFeatures {
  double cv;
  double svd_entropy;
  double kpss;
  double acf1;
} FwsFeatures;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer is
 * valid until the next failing call on the same thread.
 */
const char *fws_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *fws_version(void);

/**
 * sMAPE of `forecast` against `actual`, both of length `len`.
 *
 * # Safety
 * Both arrays must hold `len` values; `out` must be writable.
 */
enum FwsStatus fws_smape(const double *actual, const double *forecast, size_t len, double *out);

/**
 * CV, SVD entropy, KPSS and lag-1 autocorrelation of `values`.
 *
 * # Safety
 * `values` must hold `len` values; `out` must be writable.
 */
enum FwsStatus fws_extract_features(const double *values, size_t len, struct FwsFeatures *out);

/**
 * Box-Cox transform with the given `lambda` and `shift`, written to `out`
 * (`len` values; may alias `values`).
 *
 * # Safety
 * `values` and `out` must each hold `len` values.
 */
enum FwsStatus fws_box_cox(const double *values,
                           size_t len,
                           double lambda,
                           double shift,
                           double *out);

/**
 * Fits a base model with default hyperparameters on `values`.
 *
 * # Safety
 * `values` must hold `len` values; `out` must be writable. The handle
 * written to `out` must be released with [`fws_forecaster_free`].
 */
enum FwsStatus fws_forecaster_fit(enum FwsModelKind kind,
                                  uint64_t seed,
                                  const double *values,
                                  size_t len,
                                  struct FwsForecaster **out);

/**
 * Writes `horizon` forecast values to `out`.
 *
 * # Safety
 * `handle` must come from [`fws_forecaster_fit`]; `out` must hold
 * `horizon` values.
 */
enum FwsStatus fws_forecaster_predict(const struct FwsForecaster *handle,
                                      size_t horizon,
                                      double *out);

/**
 * # Safety
 * `handle` must be null or come from [`fws_forecaster_fit`], and must not
 * be used afterwards.
 */
void fws_forecaster_free(struct FwsForecaster *handle);

/**
 * Loads an ensemble model file written by a run.
 *
 * # Safety
 * `path` must be a NUL-terminated UTF-8 string; `out` must be writable.
 * Release the handle with [`fws_bundle_free`].
 */
enum FwsStatus fws_bundle_load(const char *path, struct FwsBundle **out);

/**
 * Horizon the bundle was trained for, or 0 for a null handle.
 *
 * # Safety
 * `handle` must be null or come from [`fws_bundle_load`].
 */
size_t fws_bundle_horizon(const struct FwsBundle *handle);

/**
 * Meta-learner output for base forecasts `f1` and `f2` (in the bundle's
 * base-pair order) and the input window's features.
 *
 * # Safety
 * `f1`, `f2` and `out` must hold `len` values; `features` must be readable.
 */
enum FwsStatus fws_bundle_predict(const struct FwsBundle *handle,
                                  const double *f1,
                                  const double *f2,
                                  size_t len,
                                  const struct FwsFeatures *features,
                                  double *out);

/**
 * # Safety
 * `handle` must be null or come from [`fws_bundle_load`], and must not be
 * used afterwards.
 */
void fws_bundle_free(struct FwsBundle *handle);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FWSTACK_H */
