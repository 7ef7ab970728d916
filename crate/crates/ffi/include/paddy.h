/* Generated by cbindgen from crates/ffi/src. Do not edit. */

#ifndef PADDY_H
#define PADDY_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every exported function.
 */
typedef enum PaddyStatus {
  PADDY_STATUS_OK = 0,
  PADDY_STATUS_INVALID_INPUT = 1,
  PADDY_STATUS_NOT_FOUND = 2,
  PADDY_STATUS_UNSUPPORTED = 3,
  PADDY_STATUS_FIXTURE_MISS = 4,
  PADDY_STATUS_LEASE_INVALID = 5,
  PADDY_STATUS_UNAVAILABLE = 6,
  PADDY_STATUS_CONFLICT = 7,
  PADDY_STATUS_UNAUTHORIZED = 8,
  PADDY_STATUS_FORBIDDEN = 9,
  PADDY_STATUS_UNSUPPORTED_MEDIA = 10,
  PADDY_STATUS_PAYLOAD_TOO_LARGE = 11,
  PADDY_STATUS_REFUSED = 12,
  PADDY_STATUS_PARSE = 13,
  PADDY_STATUS_IO = 14,
  PADDY_STATUS_NULL_POINTER = 15,
  PADDY_STATUS_BUFFER_TOO_SMALL = 16,
  PADDY_STATUS_PANIC = 17,
} PaddyStatus;

/**
 * Accumulates images for detection evaluation.
 */
typedef struct PaddyDetectionEvaluator PaddyDetectionEvaluator;

/**
 * Axis-aligned box as corner coordinates.
 */
typedef struct PaddyRect {
  double x1;
  double y1;
  double x2;
  double y2;
} PaddyRect;

/**
 * Fractions in `[0, 1]`.
 */
typedef struct PaddyClassificationSummary {
  double accuracy;
  double macro_precision;
  double macro_recall;
  double macro_f1;
} PaddyClassificationSummary;

/**
 * Detection in normalized center format.
 */
typedef struct PaddyDetection {
  size_t class_index;
  double confidence;
  double cx;
  double cy;
  double w;
  double h;
} PaddyDetection;

typedef struct PaddyScoredBox {
  size_t class_index;
  double confidence;
  struct PaddyRect rect;
} PaddyScoredBox;

typedef struct PaddyGroundTruth {
  size_t class_index;
  struct PaddyRect rect;
} PaddyGroundTruth;

/**
 * Fractions in `[0, 1]`; means run over classes with ground truth.
 */
typedef struct PaddyDetectionSummary {
  double map;
  double mean_box_precision;
  double mean_box_recall;
  size_t classes_evaluated;
} PaddyDetectionSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the calling thread's last error message into `buf` as a
 * NUL-terminated string and returns the buffer size needed, including the
 * terminator. Returns 0 when there is no error. A null `buf` or a short
 * `cap` only reports the size.
 *
 * # Safety
 * `buf` must be null or valid for `cap` bytes.
 */
size_t paddy_last_error_message(char *buf, size_t cap);

size_t paddy_num_classes(void);

size_t paddy_num_detection_classes(void);

/**
 * Static slug of a classification class, or null when out of range.
 */
const char *paddy_class_slug(size_t index);

/**
 * # Safety
 * `slug` must be a NUL-terminated string; `out` must be writable.
 */
enum PaddyStatus paddy_class_index(const char *slug, size_t *out);

/**
 * Maps a detection class index onto the classification index space.
 *
 * # Safety
 * `out` must be writable.
 */
enum PaddyStatus paddy_detection_to_class(size_t detection_index, size_t *out);

/**
 * # Safety
 * `a`, `b` must point to valid rects; `out` must be writable.
 */
enum PaddyStatus paddy_iou(const struct PaddyRect *a, const struct PaddyRect *b, double *out);

/**
 * Mean cross-entropy of a row-major `rows x cols` probability matrix.
 *
 * # Safety
 * `probs` must hold `rows * cols` values, `labels` must hold `rows`.
 */
enum PaddyStatus paddy_cross_entropy(const double *probs,
                                     size_t rows,
                                     size_t cols,
                                     const size_t *labels,
                                     double *out);

/**
 * Summary metrics of a row-major `classes x classes` confusion matrix with
 * rows as truth.
 *
 * # Safety
 * `matrix` must hold `classes * classes` counts; `out` must be writable.
 */
enum PaddyStatus paddy_classification_summary(const uint64_t *matrix,
                                              size_t classes,
                                              struct PaddyClassificationSummary *out);

/**
 * Greedy class-wise non-maximum suppression. Survivors are written to
 * `out` in descending confidence order and their number to `out_len`. When
 * `out_cap` is too small, `out_len` still receives the needed count and
 * `BufferTooSmall` is returned.
 *
 * # Safety
 * `dets` must hold `len` items, `out` must be valid for `out_cap` items and
 * `out_len` must be writable.
 */
enum PaddyStatus paddy_nms(const struct PaddyDetection *dets,
                           size_t len,
                           double iou_threshold,
                           struct PaddyDetection *out,
                           size_t out_cap,
                           size_t *out_len);

/**
 * # Safety
 * `out` must be writable. The handle must be released with
 * [`paddy_evaluator_free`].
 */
enum PaddyStatus paddy_evaluator_new(size_t num_classes,
                                     double iou_threshold,
                                     struct PaddyDetectionEvaluator **out);

/**
 * Adds one image's predictions and ground truth.
 *
 * # Safety
 * `ev` must come from [`paddy_evaluator_new`]; the arrays must hold the
 * stated number of items.
 */
enum PaddyStatus paddy_evaluator_add_image(struct PaddyDetectionEvaluator *ev,
                                           const struct PaddyScoredBox *preds,
                                           size_t n_preds,
                                           const struct PaddyGroundTruth *gts,
                                           size_t n_gts);

/**
 * # Safety
 * `ev` must come from [`paddy_evaluator_new`]; `out` must be writable.
 */
enum PaddyStatus paddy_evaluator_compute(const struct PaddyDetectionEvaluator *ev,
                                         struct PaddyDetectionSummary *out);

/**
 * AP of one class. Classes without ground truth give `NotFound`.
 *
 * # Safety
 * `ev` must come from [`paddy_evaluator_new`]; `out` must be writable.
 */
enum PaddyStatus paddy_evaluator_class_ap(const struct PaddyDetectionEvaluator *ev,
                                          size_t class_index,
                                          double *out);

/**
 * # Safety
 * `ev` must be null or come from [`paddy_evaluator_new`] and not be used
 * afterwards.
 */
void paddy_evaluator_free(struct PaddyDetectionEvaluator *ev);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PADDY_H */
