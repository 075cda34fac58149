#ifndef PWI_BENCH_H
#define PWI_BENCH_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum PwiStatus {
  PWI_STATUS_OK = 0,
  PWI_STATUS_NULL_POINTER = 1,
  PWI_STATUS_INVALID_UTF8 = 2,
  PWI_STATUS_INVALID_ARGUMENT = 3,
  PWI_STATUS_IO = 4,
  PWI_STATUS_PROVIDER = 5,
  PWI_STATUS_RENDER = 6,
  PWI_STATUS_PANIC = 7,
} PwiStatus;

// Opaque representational dissimilarity matrix.
typedef struct PwiRdm PwiRdm;

// Opaque synthetic embedding provider.
typedef struct PwiSynthetic PwiSynthetic;

// Opaque pretrained word-vector table.
typedef struct PwiWordVectors PwiWordVectors;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or NULL. The pointer is
// valid until the next failing call on the same thread.
const char *pwi_last_error_message(void);

// Library version, a static NUL-terminated string.
const char *pwi_version(void);

// Jaro-Winkler similarity of two UTF-8 strings.
//
// # Safety
// `a` and `b` must be NUL-terminated strings; `out` must be writable.
enum PwiStatus pwi_jaro_winkler(const char *a, const char *b, double *out);

// Zero-shot classification of one image embedding against `n_labels`
// label embeddings stored row-major in `labels` (`n_labels × dim`).
// Writes `n_labels` probabilities and the predicted index.
//
// # Safety
// Array arguments must hold the stated number of elements.
enum PwiStatus pwi_classify(const double *image,
                            size_t dim,
                            const double *labels,
                            size_t n_labels,
                            double logit_scale,
                            double *out_probabilities,
                            size_t *out_index);

// RDM of `n` embeddings stored row-major in `data` (`n × dim`).
//
// # Safety
// `data` must hold `n × dim` values; `out` must be writable.
enum PwiStatus pwi_rdm_from_embeddings(const double *data,
                                       size_t n,
                                       size_t dim,
                                       struct PwiRdm **out);

// # Safety
// `rdm` must come from `pwi_rdm_from_embeddings` and not be used again.
void pwi_rdm_free(struct PwiRdm *rdm);

// Number of items, or 0 for a null handle.
//
// # Safety
// `rdm` must be a live handle or null.
size_t pwi_rdm_size(const struct PwiRdm *rdm);

// # Safety
// `rdm` must be a live handle; `out` must be writable.
enum PwiStatus pwi_rdm_get(const struct PwiRdm *rdm, size_t i, size_t j, double *out);

// Assign an integer category to each item, in item order.
//
// # Safety
// `rdm` must be a live handle; `categories` must hold `n` values.
enum PwiStatus pwi_rdm_set_categories(struct PwiRdm *rdm, const uint32_t *categories, size_t n);

// # Safety
// `rdm` must be a live handle; `out` must be writable.
enum PwiStatus pwi_rdm_cluster_index(const struct PwiRdm *rdm, double *out);

// # Safety
// `rdm` must be a live handle; `out` must be writable.
enum PwiStatus pwi_rdm_mean_offdiag(const struct PwiRdm *rdm, double *out);

// Spearman correlation between the upper triangles of two RDMs.
//
// # Safety
// `a` and `b` must be live handles; `out` must be writable.
enum PwiStatus pwi_rdm_compare(const struct PwiRdm *a, const struct PwiRdm *b, double *out);

// Load a text-format word-vector file.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum PwiStatus pwi_word_vectors_load(const char *path, struct PwiWordVectors **out);

// # Safety
// `store` must come from `pwi_word_vectors_load` and not be used again.
void pwi_word_vectors_free(struct PwiWordVectors *store);

// Cosine similarity of two strings' vectors. `*out_found` is false (and
// `*out` untouched) when either string has no usable vector.
//
// # Safety
// Pointers must be valid; strings NUL-terminated.
enum PwiStatus pwi_semantic_similarity(const struct PwiWordVectors *store,
                                       const char *a,
                                       const char *b,
                                       double *out,
                                       bool *out_found);

// # Safety
// `vocabulary` must hold `n` NUL-terminated strings; `out` must be writable.
enum PwiStatus pwi_synthetic_new(const char *const *vocabulary,
                                 size_t n,
                                 uint64_t seed,
                                 double gamma,
                                 struct PwiSynthetic **out);

// # Safety
// `provider` must come from `pwi_synthetic_new` and not be used again.
void pwi_synthetic_free(struct PwiSynthetic *provider);

// Embedding width, or 0 for a null handle.
//
// # Safety
// `provider` must be a live handle or null.
size_t pwi_synthetic_dim(const struct PwiSynthetic *provider);

// # Safety
// `text` must be NUL-terminated; `out` must hold `out_len` values.
enum PwiStatus pwi_synthetic_embed_text(const struct PwiSynthetic *provider,
                                        const char *text,
                                        double *out,
                                        size_t out_len);

// Image embedding for a content label with an optional word (NULL for
// none).
//
// # Safety
// Strings must be NUL-terminated; `out` must hold `out_len` values.
enum PwiStatus pwi_synthetic_embed_image(const struct PwiSynthetic *provider,
                                         const char *content,
                                         const char *word,
                                         double *out,
                                         size_t out_len);

// Render `word` onto an encoded image with the default style. With a NULL
// word the input bytes come back unchanged. The result is released with
// `pwi_bytes_free`.
//
// # Safety
// `image` must hold `len` bytes; `out_data` and `out_len` must be writable.
enum PwiStatus pwi_render_png(const uint8_t *image,
                              size_t len,
                              const char *word,
                              uint8_t **out_data,
                              size_t *out_len);

// # Safety
// `data`/`len` must come from one `pwi_render_png` call.
void pwi_bytes_free(uint8_t *data, size_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PWI_BENCH_H */
