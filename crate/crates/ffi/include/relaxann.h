#ifndef RELAXANN_H
#define RELAXANN_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum RelaxannBackend {
  /**
   * Positioned reads from the index file.
   */
  RELAXANN_BACKEND_FILE = 0,
  /**
   * Whole index in memory, zero latency.
   */
  RELAXANN_BACKEND_MEMORY = 1,
  /**
   * Whole index in memory, latency from a storage profile.
   */
  RELAXANN_BACKEND_SIMULATED = 2,
} RelaxannBackend;

typedef enum RelaxannEngine {
  RELAXANN_ENGINE_STRICT = 0,
  RELAXANN_ENGINE_RELAXED = 1,
} RelaxannEngine;

typedef enum RelaxannStatus {
  RELAXANN_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  RELAXANN_STATUS_NULL_POINTER = 1,
  /**
   * An argument is malformed at the ABI level (bad UTF-8, unknown enum value).
   */
  RELAXANN_STATUS_INVALID_ARGUMENT = 2,
  /**
   * Configuration or parameter error.
   */
  RELAXANN_STATUS_CONFIG = 3,
  /**
   * Unreadable or malformed data.
   */
  RELAXANN_STATUS_DATA = 4,
  /**
   * Failure while running.
   */
  RELAXANN_STATUS_RUNTIME = 5,
  /**
   * The library panicked; the handle involved should be freed.
   */
  RELAXANN_STATUS_PANIC = 6,
} RelaxannStatus;

/**
 * An open index and the backend serving its pages.
 */
typedef struct RelaxannIndex RelaxannIndex;

typedef struct RelaxannSearchParams {
  /**
   * Candidate list length.
   */
  size_t l;
  /**
   * Results per query; must not exceed `l`.
   */
  size_t k;
  /**
   * Step cap per query; 0 keeps the library default.
   */
  size_t max_steps;
  /**
   * A [`RelaxannEngine`] value.
   */
  uint32_t engine;
  /**
   * Search workers; 0 is treated as 1.
   */
  size_t workers;
} RelaxannSearchParams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *relaxann_version(void);

/**
 * Copies the calling thread's last error message into `buf` (NUL-terminated,
 * truncated to `len`). Returns the full message length plus one, or 0 when
 * there is no error.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t relaxann_last_error(char *buf, size_t len);

/**
 * Page fill ratio of one node: payload bytes over 4096.
 *
 * # Safety
 * `out` must be null or valid for writes.
 */
enum RelaxannStatus relaxann_fill_ratio(size_t dim,
                                        size_t elem_size,
                                        size_t max_degree,
                                        double *out);

/**
 * Trains PQ and builds an index from a `.fvecs`/`.bvecs` file, writing it
 * to `out_path`. Other build parameters take their defaults.
 *
 * # Safety
 * Both paths must be valid NUL-terminated strings.
 */
enum RelaxannStatus relaxann_build(const char *base_path,
                                   const char *out_path,
                                   size_t max_degree,
                                   uint64_t seed);

/**
 * Opens an index file. `backend` is a [`RelaxannBackend`] value.
 * `profile_path` names a storage profile; the simulated backend requires
 * it and the others ignore it, so it may be null.
 *
 * # Safety
 * `path` must be a valid string, `profile_path` null or a valid string,
 * `out` valid for writes. On success `*out` owns a handle.
 */
enum RelaxannStatus relaxann_index_open(const char *path,
                                        uint32_t backend,
                                        const char *profile_path,
                                        struct RelaxannIndex **out);

/**
 * Releases a handle. Null is ignored.
 *
 * # Safety
 * `index` must be null or a handle from [`relaxann_index_open`] not yet freed.
 */
void relaxann_index_free(struct RelaxannIndex *index);

/**
 * Vector dimension, or 0 for a null handle.
 *
 * # Safety
 * `index` must be null or a live handle.
 */
size_t relaxann_index_dim(const struct RelaxannIndex *index);

/**
 * Node count, or 0 for a null handle.
 *
 * # Safety
 * `index` must be null or a live handle.
 */
size_t relaxann_index_count(const struct RelaxannIndex *index);

/**
 * Searches `nq` row-major f32 queries of length `dim`.
 *
 * Writes `nq * k` ids to `out_ids` and, when non-null, `nq * k` squared
 * distances to `out_distances` and `nq` step counts to `out_steps`. Rows
 * with fewer than `k` results are padded with `UINT32_MAX` and infinity.
 * A failure in any query fails the call.
 *
 * # Safety
 * `queries` must hold `nq * dim` floats and the output buffers must be
 * sized as above.
 */
enum RelaxannStatus relaxann_search(const struct RelaxannIndex *index,
                                    const float *queries,
                                    size_t nq,
                                    size_t dim,
                                    const struct RelaxannSearchParams *params,
                                    uint32_t *out_ids,
                                    float *out_distances,
                                    uint32_t *out_steps);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RELAXANN_H */
