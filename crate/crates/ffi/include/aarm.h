#ifndef AARM_H
#define AARM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum AarmStatus {
  AARM_STATUS_OK = 0,
  AARM_STATUS_NULL_POINTER = 1,
  AARM_STATUS_INVALID_ARGUMENT = 2,
  AARM_STATUS_IO = 3,
  AARM_STATUS_PARSE = 4,
  AARM_STATUS_SCHEMA = 5,
  AARM_STATUS_UNKNOWN_ID = 6,
  AARM_STATUS_NUMERIC = 7,
  AARM_STATUS_PANIC = 8,
  AARM_STATUS_OTHER = 9,
} AarmStatus;

/**
 * Prepared dataset bundle.
 */
typedef struct AarmDataset AarmDataset;

/**
 * Trained model bound to the dataset it was loaded against.
 */
typedef struct AarmModel AarmModel;

/**
 * Averaged metrics as fractions in [0, 1].
 */
typedef struct AarmMetrics {
  double recall;
  double precision;
  double ndcg;
  double hit_ratio;
  size_t num_users;
} AarmMetrics;

/**
 * Message of the last failed call on this thread ("" after a success).
 * Valid until the next call into the library on the same thread.
 */
const char *aarm_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *aarm_version(void);

/**
 * Opens a dataset bundle directory.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum AarmStatus aarm_dataset_open(const char *path, struct AarmDataset **out);

/**
 * # Safety
 * `dataset` must come from [`aarm_dataset_open`] and not be used afterwards.
 */
void aarm_dataset_free(struct AarmDataset *dataset);

/**
 * Number of users, items and aspects (PAD excluded).
 *
 * # Safety
 * Pointers must be valid; any output pointer may be null to skip it.
 */
enum AarmStatus aarm_dataset_counts(const struct AarmDataset *dataset,
                                    size_t *num_users,
                                    size_t *num_items,
                                    size_t *num_aspects);

/**
 * Internal index of an external user id.
 *
 * # Safety
 * `id` must be NUL-terminated; other pointers valid.
 */
enum AarmStatus aarm_dataset_user_index(const struct AarmDataset *dataset,
                                        const char *id,
                                        size_t *out);

/**
 * Internal index of an external item id.
 *
 * # Safety
 * `id` must be NUL-terminated; other pointers valid.
 */
enum AarmStatus aarm_dataset_item_index(const struct AarmDataset *dataset,
                                        const char *id,
                                        size_t *out);

/**
 * Loads a checkpoint and checks it against `dataset`.
 *
 * # Safety
 * `path` must be NUL-terminated; other pointers valid.
 */
enum AarmStatus aarm_model_load(const char *path,
                                const struct AarmDataset *dataset,
                                struct AarmModel **out);

/**
 * # Safety
 * `model` must come from [`aarm_model_load`] and not be used afterwards.
 */
void aarm_model_free(struct AarmModel *model);

/**
 * Inference-mode score of (user, item) by internal index.
 *
 * # Safety
 * Handles must be valid and `model` loaded against `dataset`.
 */
enum AarmStatus aarm_model_score(const struct AarmModel *model,
                                 const struct AarmDataset *dataset,
                                 size_t user,
                                 size_t item,
                                 double *out);

/**
 * Writes up to `n` recommended item indices for `user` into `items`
 * (capacity `n`) and their count into `written`.
 *
 * # Safety
 * `items` must have room for `n` values; other pointers valid.
 */
enum AarmStatus aarm_model_recommend(const struct AarmModel *model,
                                     const struct AarmDataset *dataset,
                                     size_t user,
                                     size_t n,
                                     size_t *items,
                                     size_t *written);

/**
 * Test-set evaluation at cutoff `n`.
 *
 * # Safety
 * Handles and `out` must be valid.
 */
enum AarmStatus aarm_model_evaluate(const struct AarmModel *model,
                                    const struct AarmDataset *dataset,
                                    size_t n,
                                    size_t threads,
                                    struct AarmMetrics *out);

/**
 * Runs a command-line invocation (`argv[0]` is the program name) and
 * returns its exit status.
 *
 * # Safety
 * `argv` must hold `argc` NUL-terminated strings.
 */
int aarm_run_command(int argc, const char *const *argv);

#endif  /* AARM_H */
