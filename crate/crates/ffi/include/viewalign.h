#ifndef VIEWALIGN_H
#define VIEWALIGN_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum VaStatus {
  VaStatus_Ok = 0,
  VaStatus_NullPointer = 1,
  VaStatus_InvalidArgument = 2,
  VaStatus_Io = 3,
  VaStatus_InvalidData = 4,
  VaStatus_Numeric = 5,
  VaStatus_BufferTooSmall = 6,
  VaStatus_Panic = 7,
} VaStatus;

typedef enum VaFusion {
  VaFusion_Sum = 0,
  VaFusion_Concat = 1,
  VaFusion_Sa = 2,
} VaFusion;

/**
 * Opaque embedding store.
 */
typedef struct VaStore VaStore;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. Valid until the next call.
 */
const char *va_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *va_version(void);

/**
 * Opens and validates a store file and its manifest sidecar.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum VaStatus va_store_open(const char *path, struct VaStore **out);

/**
 * Releases a store. NULL is ignored.
 *
 * # Safety
 * `store` must come from [`va_store_open`] and not be freed twice.
 */
void va_store_free(struct VaStore *store);

/**
 * # Safety
 * `store` must be a live handle; the out pointers must be valid.
 */
enum VaStatus va_store_dims(const struct VaStore *store,
                            size_t *n_items,
                            size_t *n_views,
                            size_t *dim);

/**
 * Copies the `n_items * n_views * dim` text payload.
 *
 * # Safety
 * `store` must be a live handle and `buf` valid for `len` floats.
 */
enum VaStatus va_store_copy_text(const struct VaStore *store, float *buf, size_t len);

/**
 * Copies the `n_items * dim` image payload.
 *
 * # Safety
 * `store` must be a live handle and `buf` valid for `len` floats.
 */
enum VaStatus va_store_copy_image(const struct VaStore *store, float *buf, size_t len);

/**
 * Cosine similarity of two vectors of length `len`.
 *
 * # Safety
 * `a` and `b` must be valid for `len` floats and `out` a valid pointer.
 */
enum VaStatus va_cosine_similarity(const float *a, const float *b, size_t len, double *out);

/**
 * Temperature softmax over the cosines of `n_views` row-major views against one image.
 *
 * # Safety
 * `views` must hold `n_views * dim` floats, `image` `dim` floats, `scores` `n_views` doubles.
 */
enum VaStatus va_view_scores(const float *views,
                             size_t n_views,
                             size_t dim,
                             const float *image,
                             double tau,
                             double *scores);

/**
 * Similarity scores of every item, `n_items * n_views` row-major.
 *
 * # Safety
 * `store` must be a live handle and `out` valid for `len` doubles.
 */
enum VaStatus va_store_profile(const struct VaStore *store, double tau, double *out, size_t len);

/**
 * Width of the fused text vector for a method.
 *
 * # Safety
 * `store` must be a live handle and `out` a valid pointer.
 */
enum VaStatus va_fused_dim(const struct VaStore *store, enum VaFusion method, size_t *out);

/**
 * Fused text of every item, `n_items * fused_dim` row-major. `tau` is used by SA only.
 *
 * # Safety
 * `store` must be a live handle and `out` valid for `len` doubles.
 */
enum VaStatus va_store_fuse(const struct VaStore *store,
                            enum VaFusion method,
                            double tau,
                            double *out,
                            size_t len);

/**
 * Recall@K of a ranking (item indices, best first) against a target set.
 *
 * # Safety
 * `ranking` and `targets` must be valid for their lengths and `out` a valid pointer.
 */
enum VaStatus va_recall_at_k(const size_t *ranking,
                             size_t n_ranking,
                             const size_t *targets,
                             size_t n_targets,
                             size_t k,
                             double *out);

/**
 * NDCG@K with a `log2(rank + 1)` discount.
 *
 * # Safety
 * `ranking` and `targets` must be valid for their lengths and `out` a valid pointer.
 */
enum VaStatus va_ndcg_at_k(const size_t *ranking,
                           size_t n_ranking,
                           const size_t *targets,
                           size_t n_targets,
                           size_t k,
                           double *out);

/**
 * Writes the density percentage (e.g. `0.117%`) as a NUL-terminated string.
 *
 * # Safety
 * `buf` must be valid for `len` bytes.
 */
enum VaStatus va_density_percent(uint64_t n_users,
                                 uint64_t n_items,
                                 uint64_t n_interactions,
                                 uint32_t decimals,
                                 char *buf,
                                 size_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VIEWALIGN_H */
