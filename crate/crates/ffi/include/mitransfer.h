#ifndef MITRANSFER_H
#define MITRANSFER_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum MitStatus {
  MIT_STATUS_OK = 0,
  MIT_STATUS_NULL_ARGUMENT = 1,
  MIT_STATUS_INVALID_ARGUMENT = 2,
  MIT_STATUS_FORMAT = 3,
  MIT_STATUS_IO = 4,
  MIT_STATUS_MODEL = 5,
  MIT_STATUS_TRAINING = 6,
  MIT_STATUS_STATISTICS = 7,
  MIT_STATUS_PANIC = 8,
} MitStatus;

typedef enum MitModelKind {
  MIT_MODEL_KIND_EEG_NET = 0,
  MIT_MODEL_KIND_DEEP_CONV_NET = 1,
  MIT_MODEL_KIND_MIN2_NET = 2,
} MitModelKind;

// Opaque dataset handle.
typedef struct MitDataset MitDataset;

// Opaque leave-one-subject-out result handle.
typedef struct MitLoso MitLoso;

// Opaque single-precision model handle.
typedef struct MitModel MitModel;

// Synthetic dataset parameters; start from [`mit_synth_defaults`].
typedef struct MitSynthParams {
  size_t n_subjects;
  size_t trials_per_subject;
  size_t n_channels;
  size_t n_samples;
  float sample_rate;
  double erd_depth;
  double noise_scale;
  double cue_onset_s;
  uint64_t seed;
} MitSynthParams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread; empty after a success.
// Valid until the next call on the same thread.
const char *mit_last_error(void);

// Library version as a static NUL-terminated string.
const char *mit_version(void);

struct MitSynthParams mit_synth_defaults(void);

// # Safety
// `params` and `out` must be valid pointers.
enum MitStatus mit_dataset_synthesize(const struct MitSynthParams *params, struct MitDataset **out);

// # Safety
// `dir` must be a NUL-terminated string and `out` a valid pointer.
enum MitStatus mit_dataset_load(const char *dir, struct MitDataset **out);

// # Safety
// `ds` must come from this library and `dir` be a NUL-terminated string.
enum MitStatus mit_dataset_save(const struct MitDataset *ds, const char *dir);

// Writes subject count, channels, samples per trial and total trials.
//
// # Safety
// `ds` must come from this library; out pointers may be null to skip.
enum MitStatus mit_dataset_shape(const struct MitDataset *ds,
                                 size_t *n_subjects,
                                 size_t *n_channels,
                                 size_t *n_samples,
                                 size_t *n_trials);

// # Safety
// `ds` must come from this library or be null; it is invalid afterwards.
void mit_dataset_free(struct MitDataset *ds);

// Default architecture of `kind` for the given geometry.
//
// # Safety
// `out` must be a valid pointer.
enum MitStatus mit_model_new(enum MitModelKind kind,
                             size_t n_channels,
                             size_t n_samples,
                             double sample_rate,
                             uint64_t seed,
                             struct MitModel **out);

// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum MitStatus mit_model_load(const char *path, struct MitModel **out);

// # Safety
// `model` must come from this library and `path` be a NUL-terminated string.
enum MitStatus mit_model_save(const struct MitModel *model, const char *path);

// # Safety
// `model` must come from this library and `out` be a valid pointer.
enum MitStatus mit_model_n_params(const struct MitModel *model, size_t *out);

// Class probabilities for `n_trials` trials laid out trial, channel,
// sample. `probs` receives `n_trials * 2` values, row-major.
//
// # Safety
// `data` must hold `n_trials * channels * samples` floats and `probs`
// `probs_len` floats.
enum MitStatus mit_model_predict_proba(const struct MitModel *model,
                                       const float *data,
                                       size_t n_trials,
                                       float *probs,
                                       size_t probs_len);

// # Safety
// `model` must come from this library or be null; it is invalid afterwards.
void mit_model_free(struct MitModel *model);

// Leave-one-subject-out evaluation with the model's default schedule.
// `epochs` 0 keeps the default budget; `out_dir` may be null to skip
// writing results.
//
// # Safety
// `ds` must come from this library, `out_dir` be null or NUL-terminated and
// `out` a valid pointer.
enum MitStatus mit_loso_run(const struct MitDataset *ds,
                            enum MitModelKind kind,
                            size_t epochs,
                            uint64_t seed,
                            size_t jobs,
                            const char *out_dir,
                            struct MitLoso **out);

// Completed and failed fold counts.
//
// # Safety
// `run` must come from this library; out pointers may be null to skip.
enum MitStatus mit_loso_counts(const struct MitLoso *run, size_t *n_completed, size_t *n_failed);

// Accuracy of completed fold `index`, in subject order.
//
// # Safety
// `run` must come from this library and `out` be a valid pointer.
enum MitStatus mit_loso_accuracy(const struct MitLoso *run, size_t index, double *out);

// # Safety
// `run` must come from this library or be null; it is invalid afterwards.
void mit_loso_free(struct MitLoso *run);

// # Safety
// `x` must hold `n` values; `w` and `p` must be valid pointers.
enum MitStatus mit_shapiro_wilk(const double *x, size_t n, double *w, double *p);

// Friedman test on a row-major `n_blocks × k` matrix, one row per subject.
//
// # Safety
// `values` must hold `n_blocks * k` values; `chi2` and `p` must be valid.
enum MitStatus mit_friedman(const double *values,
                            size_t n_blocks,
                            size_t k,
                            double *chi2,
                            double *p);

// Paired Wilcoxon signed-rank test; `statistic` is the negative-rank sum.
//
// # Safety
// `x` and `y` must hold `n` values; `statistic` and `p` must be valid.
enum MitStatus mit_wilcoxon(const double *x,
                            const double *y,
                            size_t n,
                            double *statistic,
                            double *p);

// Holm step-down adjustment of `n` p-values into `adjusted`.
//
// # Safety
// `p_values` and `adjusted` must each hold `n` values.
enum MitStatus mit_holm(const double *p_values, size_t n, double *adjusted);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MITRANSFER_H */
