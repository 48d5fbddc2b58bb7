#ifndef NSIR_H
#define NSIR_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum NsirStatus {
  NSIR_STATUS_OK = 0,
  NSIR_STATUS_NULL_POINTER = 1,
  NSIR_STATUS_INVALID_ARGUMENT = 2,
  NSIR_STATUS_PARSE_ERROR = 3,
  NSIR_STATUS_DIMENSION_MISMATCH = 4,
  NSIR_STATUS_NUMERICAL_FAILURE = 5,
  NSIR_STATUS_NOT_FOUND = 6,
  NSIR_STATUS_IO_ERROR = 7,
  NSIR_STATUS_DATA_ERROR = 8,
  NSIR_STATUS_PANIC = 9,
} NsirStatus;

typedef enum NsirTokenClass {
  NSIR_TOKEN_CLASS_NEGATION = 0,
  NSIR_TOKEN_CLASS_BINARY_CONNECTIVE = 1,
  NSIR_TOKEN_CLASS_QUANTIFIER = 2,
  NSIR_TOKEN_CLASS_PREDICATE = 3,
  NSIR_TOKEN_CLASS_TERM = 4,
  NSIR_TOKEN_CLASS_PUNCTUATION = 5,
} NsirTokenClass;

/**
 * Tokenized FOL formula.
 */
typedef struct NsirFolSeq NsirFolSeq;

/**
 * Alignment, σ and attention results for one NL/FOL pair.
 */
typedef struct NsirSideAnalysis NsirSideAnalysis;

/**
 * Embedding store loaded from disk.
 */
typedef struct NsirStore NsirStore;

/**
 * Scoring switches mirrored from the core options.
 */
typedef struct NsirOptions {
  /**
   * Attention scale; 0 means the embedding dimension.
   */
  size_t d_k;
  bool normalize;
  bool include_cls_row;
  double w1;
  double w2;
} NsirOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer is
 * valid until the next call into this library from the same thread.
 */
const char *nsir_last_error_message(void);

struct NsirOptions nsir_default_options(void);

/**
 * # Safety
 * `formula` must be a NUL-terminated string and `out` a valid pointer.
 */
enum NsirStatus nsir_fol_tokenize(const char *formula, struct NsirFolSeq **out);

/**
 * # Safety
 * `seq` must come from [`nsir_fol_tokenize`] or be null.
 */
size_t nsir_fol_len(const struct NsirFolSeq *seq);

/**
 * # Safety
 * `seq` must come from [`nsir_fol_tokenize`]; `class_out` must be valid.
 */
enum NsirStatus nsir_fol_token_class(const struct NsirFolSeq *seq,
                                     size_t index,
                                     enum NsirTokenClass *class_out);

/**
 * Copies token `index`'s canonical surface into `buf` (NUL-terminated,
 * truncated to `buf_len`). Returns the full byte length via `len_out`.
 *
 * # Safety
 * `seq` must come from [`nsir_fol_tokenize`]; `buf` must hold `buf_len`
 * bytes or be null when `buf_len` is 0.
 */
enum NsirStatus nsir_fol_token_surface(const struct NsirFolSeq *seq,
                                       size_t index,
                                       char *buf,
                                       size_t buf_len,
                                       size_t *len_out);

/**
 * # Safety
 * `seq` must come from [`nsir_fol_tokenize`] and not be used afterwards.
 */
void nsir_fol_free(struct NsirFolSeq *seq);

/**
 * Cosine cost `1 - cos` between rows of `h` (`m × d`) and `z` (`n × d`),
 * written to `cost_out` (`m × n`).
 *
 * # Safety
 * All pointers must reference arrays of the stated sizes.
 */
enum NsirStatus nsir_cost_matrix(const double *h,
                                 size_t m,
                                 const double *z,
                                 size_t n,
                                 size_t d,
                                 double *cost_out);

/**
 * Exact transport plan for an `m × n` cost matrix with uniform marginals.
 *
 * # Safety
 * `cost` and `plan_out` must hold `m * n` doubles; `objective_out` may be null.
 */
enum NsirStatus nsir_solve_ot(const double *cost,
                              size_t m,
                              size_t n,
                              double *plan_out,
                              double *objective_out);

/**
 * Fused CLS vector `Hᵀ · P · Z · cls` of length `d`.
 *
 * # Safety
 * `h` is `m × d`, `plan` is `m × n`, `z` is `n × d`, `cls` and `out` hold `d`.
 */
enum NsirStatus nsir_fuse_cls(const double *h,
                              size_t m,
                              const double *plan,
                              const double *z,
                              size_t n,
                              size_t d,
                              const double *cls,
                              bool normalize,
                              double *out);

/**
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum NsirStatus nsir_store_open(const char *path, struct NsirStore **out);

/**
 * # Safety
 * `store` must come from [`nsir_store_open`] or be null.
 */
size_t nsir_store_len(const struct NsirStore *store);

/**
 * # Safety
 * `store` must come from [`nsir_store_open`] and not be used afterwards.
 */
void nsir_store_free(struct NsirStore *store);

/**
 * Analyzes an NL text and its FOL translation, both looked up in `store`.
 *
 * # Safety
 * `store` must be a live store handle, the texts NUL-terminated strings,
 * `opts` null or valid, and `out` a valid pointer.
 */
enum NsirStatus nsir_analyze_side(const struct NsirStore *store,
                                  const char *nl_text,
                                  const char *fol_text,
                                  const struct NsirOptions *opts,
                                  struct NsirSideAnalysis **out);

/**
 * Plan shape as (NL rows, FOL tokens).
 *
 * # Safety
 * `side` must be a live analysis handle; outputs may be null.
 */
enum NsirStatus nsir_side_shape(const struct NsirSideAnalysis *side,
                                size_t *nl_out,
                                size_t *fol_out);

/**
 * Copies the transport plan (row-major, NL × FOL) into `plan_out`.
 *
 * # Safety
 * `side` must be a live analysis handle and `plan_out` hold `len` doubles.
 */
enum NsirStatus nsir_side_plan(const struct NsirSideAnalysis *side, double *plan_out, size_t len);

/**
 * Copies σ (row-major, FOL × NL) into `sigma_out`.
 *
 * # Safety
 * `side` must be a live analysis handle and `sigma_out` hold `len` bytes.
 */
enum NsirStatus nsir_side_sigma(const struct NsirSideAnalysis *side, int8_t *sigma_out, size_t len);

/**
 * Scores a query analysis against a document analysis.
 *
 * # Safety
 * Both handles must be live; `opts` null or valid; outputs may be null.
 */
enum NsirStatus nsir_pair_scores(const struct NsirSideAnalysis *query,
                                 const struct NsirSideAnalysis *doc,
                                 const struct NsirOptions *opts,
                                 double *score1_out,
                                 double *score2_out,
                                 double *combined_out);

/**
 * # Safety
 * `side` must come from [`nsir_analyze_side`] and not be used afterwards.
 */
void nsir_side_free(struct NsirSideAnalysis *side);

/**
 * Mean nDCG@cutoff and MAP of a TREC run file against a qrels file.
 *
 * # Safety
 * Paths must be NUL-terminated strings; outputs may be null.
 */
enum NsirStatus nsir_eval_files(const char *run_path,
                                const char *qrels_path,
                                size_t cutoff,
                                double *ndcg_out,
                                double *map_out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NSIR_H */
