#ifndef SRLP_H
#define SRLP_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SrlpStatus {
  SRLP_STATUS_OK = 0,
  SRLP_STATUS_NULL_POINTER = 1,
  SRLP_STATUS_INVALID_UTF8 = 2,
  SRLP_STATUS_IO = 4,
  SRLP_STATUS_DATA = 5,
  SRLP_STATUS_MODEL = 6,
  SRLP_STATUS_TRAIN = 7,
  SRLP_STATUS_BACKTEST = 8,
  /**
   * The event has no complete SRL frame and cannot be scored.
   */
  SRLP_STATUS_NO_FRAMES = 9,
  SRLP_STATUS_OUT_OF_RANGE = 10,
  SRLP_STATUS_PANIC = 99,
} SrlpStatus;

/**
 * Parsed events with their embeddings.
 */
typedef struct SrlpCorpus SrlpCorpus;

/**
 * A loaded checkpoint.
 */
typedef struct SrlpModel SrlpModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next failing call on the same thread.
 */
const char *srlp_last_error(void);

/**
 * Library version as a static nul-terminated string.
 */
const char *srlp_version(void);

/**
 * Loads an events file and an optional embeddings file (`embeddings_path`
 * may be null).
 *
 * # Safety
 * Paths must be nul-terminated strings; `out` must be writable.
 */
enum SrlpStatus srlp_corpus_load(const char *events_path,
                                 const char *embeddings_path,
                                 struct SrlpCorpus **out);

/**
 * Number of events, 0 for null.
 *
 * # Safety
 * `corpus` must be null or a live handle.
 */
size_t srlp_corpus_len(const struct SrlpCorpus *corpus);

/**
 * # Safety
 * `corpus` must be null or a handle from [`srlp_corpus_load`] not yet freed.
 */
void srlp_corpus_free(struct SrlpCorpus *corpus);

/**
 * # Safety
 * `path` must be a nul-terminated string; `out` must be writable.
 */
enum SrlpStatus srlp_model_load(const char *path, struct SrlpModel **out);

/**
 * # Safety
 * `model` must be null or a handle from [`srlp_model_load`] not yet freed.
 */
void srlp_model_free(struct SrlpModel *model);

/**
 * Class probabilities (outperforming, neutral, underperforming) of event
 * `index`, written to `probabilities[0..3]`.
 *
 * # Safety
 * Handles must be live; `probabilities` must hold 3 writable doubles.
 */
enum SrlpStatus srlp_model_predict(const struct SrlpModel *model,
                                   const struct SrlpCorpus *corpus,
                                   size_t index,
                                   double *probabilities);

/**
 * Predicts every event and writes the predictions CSV to `path`.
 *
 * # Safety
 * Handles must be live; `path` must be a nul-terminated string.
 */
enum SrlpStatus srlp_model_predict_file(const struct SrlpModel *model,
                                        const struct SrlpCorpus *corpus,
                                        const char *path);

/**
 * Quantile labels of `n` return rates: 0 outperforming, 1 neutral,
 * 2 underperforming, -1 excluded. Ties rank by input position.
 *
 * # Safety
 * `returns` and `labels` must each hold `n` elements.
 */
enum SrlpStatus srlp_assign_labels(const double *returns,
                                   size_t n,
                                   double a,
                                   double b,
                                   double c,
                                   double d,
                                   int32_t *labels);

/**
 * Maximum drawdown of an equity curve, as a non-positive fraction.
 *
 * # Safety
 * `equity` must hold `n` doubles; `out` must be writable.
 */
enum SrlpStatus srlp_max_drawdown(const double *equity, size_t n, double *out);

/**
 * Annualized return of a daily equity curve over a 252-day year.
 *
 * # Safety
 * `equity` must hold `n` doubles; `out` must be writable.
 */
enum SrlpStatus srlp_annualized_return(const double *equity, size_t n, double *out);

/**
 * Annualized Sharpe ratio of daily returns.
 *
 * # Safety
 * `returns` must hold `n` doubles; `out` must be writable.
 */
enum SrlpStatus srlp_sharpe(const double *returns, size_t n, double risk_free_daily, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SRLP_H */
