#ifndef HHI_H
#define HHI_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes of every fallible call.
 */
typedef enum HhiStatus {
  HHI_STATUS_OK = 0,
  HHI_STATUS_NULL_POINTER = 1,
  HHI_STATUS_INVALID_ARGUMENT = 2,
  HHI_STATUS_DOMAIN = 3,
  HHI_STATUS_SHAPE = 4,
  HHI_STATUS_FORMAT = 5,
  HHI_STATUS_CHECKSUM = 6,
  HHI_STATUS_VERSION = 7,
  HHI_STATUS_IO = 8,
  HHI_STATUS_CONFIG = 9,
  HHI_STATUS_DIVERGED = 10,
  HHI_STATUS_BUFFER_TOO_SMALL = 11,
  HHI_STATUS_PANIC = 12,
} HhiStatus;

/**
 * A loaded fold model plus its scaler.
 */
typedef struct HhiModel HhiModel;

/**
 * A loaded trial recording.
 */
typedef struct HhiTrial HhiTrial;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer is
 * valid until the next failing call on the same thread.
 */
const char *hhi_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *hhi_version(void);

/**
 * Number of interaction classes.
 */
size_t hhi_label_count(void);

/**
 * Static name of class `index`, or null when out of range.
 */
const char *hhi_label_name(uint32_t index);

/**
 * Class index of a label name.
 *
 * # Safety
 * `name` must be a NUL-terminated string; `out_index` must be writable.
 */
enum HhiStatus hhi_label_index(const char *name, uint32_t *out_index);

/**
 * Carrier wavelength `c / freq_hz` in meters.
 *
 * # Safety
 * `out_meters` must be writable.
 */
enum HhiStatus hhi_wavelength(double freq_hz, double *out_meters);

/**
 * Log-distance path loss in dB at `distance` for the given reference loss,
 * reference distance and exponent.
 *
 * # Safety
 * `out_db` must be writable.
 */
enum HhiStatus hhi_path_loss_db(double distance,
                                double ref_distance,
                                double exponent,
                                double ref_loss_db,
                                double *out_db);

/**
 * Rician received-power density at `p` for K factor `k` and mean power
 * `p_bar`.
 *
 * # Safety
 * `out_density` must be writable.
 */
enum HhiStatus hhi_rician_power_pdf(double p, double k, double p_bar, double *out_density);

/**
 * Per-position majority vote over `folds` label rows of length `len`
 * (row-major `folds × len`); ties go to the lowest class index.
 *
 * # Safety
 * `labels` must hold `folds * len` values and `out` must hold `len`.
 */
enum HhiStatus hhi_ensemble_mode(const uint32_t *labels, size_t folds, size_t len, uint32_t *out);

/**
 * Apply the prediction smoother (window 20 per side) to `len` labels.
 *
 * # Safety
 * `labels` and `out` must each hold `len` values; they may not overlap.
 */
enum HhiStatus hhi_smooth(const uint32_t *labels, size_t len, uint32_t *out);

/**
 * Load a weight bundle.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out_model` must be writable.
 */
enum HhiStatus hhi_model_load(const char *path, struct HhiModel **out_model);

/**
 * Release a model; null is ignored.
 *
 * # Safety
 * `model` must come from [`hhi_model_load`] and not be used afterwards.
 */
void hhi_model_free(struct HhiModel *model);

/**
 * Sequence length the model expects (packets per trial).
 *
 * # Safety
 * `model` must be a live handle or null (returns 0).
 */
size_t hhi_model_seq_len(const struct HhiModel *model);

/**
 * Feature columns the model expects per packet.
 *
 * # Safety
 * `model` must be a live handle or null (returns 0).
 */
size_t hhi_model_feature_dim(const struct HhiModel *model);

/**
 * Per-packet labels for a scaled `rows × cols` feature matrix (row-major).
 *
 * # Safety
 * `model` must be live; `features` must hold `rows * cols` values and
 * `out_labels` must hold `rows`.
 */
enum HhiStatus hhi_model_predict(const struct HhiModel *model,
                                 const double *features,
                                 size_t rows,
                                 size_t cols,
                                 uint32_t *out_labels);

/**
 * Load a trial file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out_trial` must be writable.
 */
enum HhiStatus hhi_trial_load(const char *path, struct HhiTrial **out_trial);

/**
 * Release a trial; null is ignored.
 *
 * # Safety
 * `trial` must come from [`hhi_trial_load`] and not be used afterwards.
 */
void hhi_trial_free(struct HhiTrial *trial);

/**
 * Number of packets in a trial.
 *
 * # Safety
 * `trial` must be a live handle or null (returns 0).
 */
size_t hhi_trial_len(const struct HhiTrial *trial);

/**
 * Classify a trial with an ensemble of models: the trial is normalized to
 * the models' sequence length, scaled with the first model's scaler, and
 * each model's labels are mode-ensembled and smoothed. `out_ensembled` and
 * `out_smoothed` must each hold `capacity >= seq_len` labels; `out_len`
 * receives the number written. Either output may be null.
 *
 * # Safety
 * `models` must point to `n_models` live model handles sharing one
 * architecture; `trial` must be live; `out_len` must be writable.
 */
enum HhiStatus hhi_classify_trial(const struct HhiModel *const *models,
                                  size_t n_models,
                                  const struct HhiTrial *trial,
                                  uint32_t *out_ensembled,
                                  uint32_t *out_smoothed,
                                  size_t capacity,
                                  size_t *out_len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HHI_H */
