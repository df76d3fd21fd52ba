/* C interface to the bloomgate retrieval engine. Generated by cbindgen; do not edit. */

#ifndef BLOOMGATE_H
#define BLOOMGATE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible FFI call.
typedef enum BgStatus {
  BG_STATUS_OK = 0,
  BG_STATUS_NULL_POINTER = 1,
  BG_STATUS_INVALID_ARGUMENT = 2,
  BG_STATUS_DIMENSION_MISMATCH = 3,
  BG_STATUS_IO_ERROR = 4,
  BG_STATUS_FORMAT_ERROR = 5,
  BG_STATUS_INTERNAL_ERROR = 6,
} BgStatus;

// Binarization rule selector for `bg_index_build`.
typedef enum BgBinarizerMode {
  // Set the bits of centroids closer than the mean centroid distance.
  BG_BINARIZER_MODE_MEAN = 0,
  // Set exactly the bits of the `n_smallest` smallest distances.
  BG_BINARIZER_MODE_MINX = 1,
} BgBinarizerMode;

// Shard assignment rule for `bg_index_build`.
typedef enum BgShardPolicy {
  BG_SHARD_POLICY_ROUND_ROBIN = 0,
  BG_SHARD_POLICY_HASH_ID = 1,
} BgShardPolicy;

// Opaque codebook handle.
typedef struct BgCodebook BgCodebook;

// Opaque index handle.
typedef struct BgIndex BgIndex;

// Opaque query-result handle.
typedef struct BgQueryResult BgQueryResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *bg_version(void);

// Message of the most recent failure on this thread. The pointer stays
// valid until the next failing bloomgate call on the same thread.
const char *bg_last_error_message(void);

// Train a k-means codebook over `count` vectors of `dim` floats.
//
// # Safety
// `vectors` must point to at least `count * dim` readable floats and
// `out_codebook` to a writable pointer slot.
enum BgStatus bg_codebook_train(const float *vectors,
                                size_t count,
                                size_t dim,
                                size_t k_centroids,
                                size_t max_iters,
                                uint64_t seed,
                                struct BgCodebook **out_codebook);

// # Safety
// `path` must be a NUL-terminated string; `out_codebook` as in
// `bg_codebook_train`.
enum BgStatus bg_codebook_load(const char *path, struct BgCodebook **out_codebook);

// # Safety
// `codebook` must be a live handle from this library; `path` a
// NUL-terminated string.
enum BgStatus bg_codebook_save(const struct BgCodebook *codebook, const char *path);

// Number of centroids (== code width in bits); 0 for NULL.
//
// # Safety
// `codebook` must be NULL or a live handle.
size_t bg_codebook_k(const struct BgCodebook *codebook);

// Vector dimensionality; 0 for NULL.
//
// # Safety
// `codebook` must be NULL or a live handle.
size_t bg_codebook_dim(const struct BgCodebook *codebook);

// # Safety
// `codebook` must be NULL or an owned handle not freed before.
void bg_codebook_free(struct BgCodebook *codebook);

// Build a sharded, gated index over `count` vectors of `dim` floats.
// `ids` may be NULL, in which case records are numbered 0..count.
// `n_smallest` is only read in `BG_BINARIZER_MODE_MINX`.
//
// # Safety
// `codebook` must be a live handle; `vectors` must hold `count * dim`
// floats; `ids`, when non-NULL, must hold `count` u32 values;
// `out_index` must be writable.
enum BgStatus bg_index_build(const struct BgCodebook *codebook,
                             const float *vectors,
                             const uint32_t *ids,
                             size_t count,
                             size_t dim,
                             enum BgBinarizerMode mode,
                             size_t n_smallest,
                             size_t num_shards,
                             double bloom_factor,
                             enum BgShardPolicy policy,
                             struct BgIndex **out_index);

// # Safety
// `path` must be a NUL-terminated string naming an index directory;
// `out_index` must be writable.
enum BgStatus bg_index_load(const char *path, struct BgIndex **out_index);

// # Safety
// `index` must be a live handle; `path` a NUL-terminated string.
enum BgStatus bg_index_save(const struct BgIndex *index, const char *path);

// Records indexed; 0 for NULL.
//
// # Safety
// `index` must be NULL or a live handle.
size_t bg_index_len(const struct BgIndex *index);

// # Safety
// `index` must be NULL or a live handle.
size_t bg_index_num_shards(const struct BgIndex *index);

// # Safety
// `index` must be NULL or a live handle.
size_t bg_index_code_width(const struct BgIndex *index);

// # Safety
// `index` must be NULL or a live handle.
size_t bg_index_dim(const struct BgIndex *index);

// # Safety
// `index` must be NULL or an owned handle not freed before.
void bg_index_free(struct BgIndex *index);

// Run one query. On success the caller owns `*out_result` and must free
// it with `bg_query_result_free`.
//
// # Safety
// `index` must be a live handle; `query` must hold `dim` floats;
// `out_result` must be writable.
enum BgStatus bg_index_query(const struct BgIndex *index,
                             const float *query,
                             size_t dim,
                             uint32_t hamming_threshold,
                             size_t top_r,
                             bool use_gates,
                             struct BgQueryResult **out_result);

// Number of ranked hits; 0 for NULL.
//
// # Safety
// `result` must be NULL or a live handle.
size_t bg_query_result_hit_count(const struct BgQueryResult *result);

// Fetch hit `rank` (0-based): record id and cosine distance.
//
// # Safety
// `result` must be a live handle; `out_id` and `out_distance`, when
// non-NULL, must be writable.
enum BgStatus bg_query_result_hit(const struct BgQueryResult *result,
                                  size_t rank,
                                  uint32_t *out_id,
                                  double *out_distance);

// True when every gate rejected the query code.
//
// # Safety
// `result` must be NULL or a live handle.
bool bg_query_result_gated_out(const struct BgQueryResult *result);

// # Safety
// `result` must be NULL or a live handle.
size_t bg_query_result_shards_scanned(const struct BgQueryResult *result);

// # Safety
// `result` must be NULL or a live handle.
size_t bg_query_result_candidates_examined(const struct BgQueryResult *result);

// Wall-clock seconds spent inside the query.
//
// # Safety
// `result` must be NULL or a live handle.
double bg_query_result_elapsed_seconds(const struct BgQueryResult *result);

// # Safety
// `result` must be NULL or an owned handle not freed before.
void bg_query_result_free(struct BgQueryResult *result);

// Optimal hash-function count `round(ln 2 * m / n)`, clamped to >= 1.
//
// # Safety
// `out_k`, when non-NULL, must be writable.
enum BgStatus bg_bloom_optimal_k(uint64_t m_bits, uint64_t n_capacity, uint32_t *out_k);

// False-positive probability `(1 - e^(-k*n/m))^k`; NaN on invalid input.
double bg_bloom_fp_probability(uint64_t m_bits, uint64_t n_inserted, uint32_t k_hashes);

// Half-full-filter bound `0.6185^(m/n)`; NaN on invalid input.
double bg_bloom_fp_bound(uint64_t m_bits, uint64_t n_capacity);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BLOOMGATE_H */
