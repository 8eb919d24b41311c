#ifndef TSGP_H
#define TSGP_H

/* C ABI over the evolved-model runtime: load a model document, transform
 * series into feature vectors, predict labels, and query inference cost.
 *
 * Generated from the tsgp-capi crate (see cbindgen.toml); kept in sync with
 * the Rust surface by the crate's ABI test.
 */

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

/* Status codes returned by every fallible ABI function. */
typedef enum TsgpStatus {
  TSGP_OK = 0,
  TSGP_ERR_NULL_ARGUMENT = 1,
  TSGP_ERR_IO = 2,
  TSGP_ERR_MALFORMED_MODEL = 3,
  TSGP_ERR_LENGTH_MISMATCH = 4,
  TSGP_ERR_BUFFER_TOO_SMALL = 5,
  TSGP_ERR_NO_CLASSIFIER = 6,
  TSGP_ERR_UTF8 = 7,
  TSGP_ERR_INTERNAL = 8,
} TsgpStatus;

/* Opaque model handle: a full evolved model (tree + classifier) or a
 * tree-only document (transform and cost work; predict does not).
 */
typedef struct TsgpModel TsgpModel;

/* Last error message of the current thread (empty when none). The pointer
 * stays valid until the next failing call on this thread.
 */
const char *tsgp_last_error(void);

/* Loads a model document from a file path. */
TsgpStatus tsgp_model_load(const char *path, TsgpModel **out_model);

/* Parses a model document from a JSON string. */
TsgpStatus tsgp_model_from_json(const char *json, TsgpModel **out_model);

/* Releases a model handle. A null pointer is a no-op. */
void tsgp_model_free(TsgpModel *model);

/* Series length the model was evolved for (0 on null). */
size_t tsgp_model_series_length(const TsgpModel *model);

/* Output feature dimension (0 on null). */
size_t tsgp_model_feature_dim(const TsgpModel *model);

/* Number of classes of the embedded classifier (0 for tree-only models). */
size_t tsgp_model_n_classes(const TsgpModel *model);

/* Transforms one series into its feature vector. `out_features` must hold
 * at least `tsgp_model_feature_dim` doubles.
 */
TsgpStatus tsgp_model_transform(const TsgpModel *model,
                                const double *series,
                                size_t series_len,
                                double *out_features,
                                size_t out_capacity);

/* Predicts the label of one series (in the training data's original label
 * values). Requires a full model with an embedded classifier.
 */
TsgpStatus tsgp_model_predict(const TsgpModel *model,
                              const double *series,
                              size_t series_len,
                              int64_t *out_label);

/* Inference cost of the feature model under the published counting
 * convention. Null output pointers skip that output.
 */
TsgpStatus tsgp_model_cost(const TsgpModel *model,
                           uint64_t *out_flops,
                           uint64_t *out_peak_bytes);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* TSGP_H */
