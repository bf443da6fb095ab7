#ifndef SVCRANK_H
#define SVCRANK_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SvcrankStatus {
  SVCRANK_STATUS_OK = 0,
  SVCRANK_STATUS_NULL_POINTER = 1,
  SVCRANK_STATUS_INVALID_ARGUMENT = 2,
  SVCRANK_STATUS_DATA_ERROR = 3,
  SVCRANK_STATUS_UNKNOWN_CONSUMER = 4,
  SVCRANK_STATUS_OUT_OF_RANGE = 5,
  /**
   * The requested value does not exist (e.g. an unscored service's priority).
   */
  SVCRANK_STATUS_NO_VALUE = 6,
  SVCRANK_STATUS_INTERNAL = 7,
  SVCRANK_STATUS_PANIC = 8,
} SvcrankStatus;

/**
 * A loaded observation dataset.
 */
typedef struct SvcrankDataset SvcrankDataset;

/**
 * A predicted ranking.
 */
typedef struct SvcrankRanking SvcrankRanking;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the last failed call on this thread, or an empty
 * string. Valid until the next svcrank call on the same thread.
 */
const char *svcrank_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *svcrank_version(void);

/**
 * Releases a string returned by this library. NULL is ignored.
 *
 * # Safety
 * `s` must be NULL or a pointer obtained from an svcrank `char **`
 * out-parameter that has not been freed yet.
 */
void svcrank_string_free(char *s);

/**
 * Loads an observation CSV (and its ground-truth sidecar, when present).
 *
 * # Safety
 * `path` must be a valid NUL-terminated string and `out` a valid pointer.
 */
enum SvcrankStatus svcrank_dataset_load(const char *path, struct SvcrankDataset **out);

/**
 * Parses observation CSV text held in memory.
 *
 * # Safety
 * `csv` must be a valid NUL-terminated string and `out` a valid pointer.
 */
enum SvcrankStatus svcrank_dataset_parse(const char *csv, struct SvcrankDataset **out);

/**
 * # Safety
 * `dataset` must be NULL or a handle from `svcrank_dataset_load`/`_parse` not yet freed.
 */
void svcrank_dataset_free(struct SvcrankDataset *dataset);

/**
 * Number of consumers, or 0 for NULL.
 *
 * # Safety
 * `dataset` must be NULL or a live dataset handle.
 */
size_t svcrank_dataset_consumer_count(const struct SvcrankDataset *dataset);

/**
 * Number of services, or 0 for NULL.
 *
 * # Safety
 * `dataset` must be NULL or a live dataset handle.
 */
size_t svcrank_dataset_service_count(const struct SvcrankDataset *dataset);

/**
 * Predicts `consumer`'s ranking over every service in the dataset, using
 * all other consumers as history. `implicit` lists `n_implicit` services the
 * consumer already uses and may be NULL when `n_implicit` is 0.
 *
 * # Safety
 * `dataset` must be a live dataset handle, `consumer` a valid string,
 * `implicit` an array of `n_implicit` valid strings, and `out` a valid pointer.
 */
enum SvcrankStatus svcrank_predict(const struct SvcrankDataset *dataset,
                                   const char *consumer,
                                   const char *const *implicit,
                                   size_t n_implicit,
                                   struct SvcrankRanking **out);

/**
 * # Safety
 * `ranking` must be NULL or a live ranking handle.
 */
size_t svcrank_ranking_len(const struct SvcrankRanking *ranking);

/**
 * Service at 0-based position `index` (rank `index + 1`), or NULL when out of
 * range. The string lives as long as the ranking handle.
 *
 * # Safety
 * `ranking` must be NULL or a live ranking handle.
 */
const char *svcrank_ranking_service(const struct SvcrankRanking *ranking, size_t index);

/**
 * Priority value of the service at `index`. Returns
 * `SVCRANK_STATUS_NO_VALUE` for services ranked without evidence.
 *
 * # Safety
 * `ranking` must be a live ranking handle and `out` a valid pointer.
 */
enum SvcrankStatus svcrank_ranking_priority(const struct SvcrankRanking *ranking,
                                            size_t index,
                                            double *out);

/**
 * Renders the ranking in the ranking JSON format.
 *
 * # Safety
 * `ranking` must be a live ranking handle and `out` a valid pointer.
 */
enum SvcrankStatus svcrank_ranking_to_json(const struct SvcrankRanking *ranking, char **out);

/**
 * # Safety
 * `ranking` must be NULL or a handle from `svcrank_predict` not yet freed.
 */
void svcrank_ranking_free(struct SvcrankRanking *ranking);

/**
 * Correspondence value between two consumers given index-aligned response
 * times for `n` services. Entries that are not positive and finite mean
 * "not observed". Fewer than 2 commonly observed services give 0.
 *
 * # Safety
 * `x` and `y` must point to `n` readable doubles; `out` must be valid.
 */
enum SvcrankStatus svcrank_correspondence(const double *x, const double *y, size_t n, double *out);

/**
 * Runs a simulation described by config JSON and returns the trace JSON.
 *
 * # Safety
 * `config_json` must be a valid NUL-terminated string and `out` a valid pointer.
 */
enum SvcrankStatus svcrank_simulate(const char *config_json, char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SVCRANK_H */
