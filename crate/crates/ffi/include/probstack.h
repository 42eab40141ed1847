#ifndef PROBSTACK_H
#define PROBSTACK_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Number of levels in every quantile output.
#define PS_GRID_LEN 99

typedef enum PsStatus {
  PS_STATUS_OK = 0,
  PS_STATUS_NULL_POINTER = 1,
  PS_STATUS_INVALID_ARGUMENT = 2,
  PS_STATUS_IO = 3,
  PS_STATUS_PARSE = 4,
  PS_STATUS_NUMERICAL = 5,
  PS_STATUS_INSUFFICIENT_DATA = 6,
  PS_STATUS_PANIC = 7,
} PsStatus;

typedef enum PsMethod {
  PS_METHOD_QRS = 0,
  PS_METHOD_QLR = 1,
  PS_METHOD_QRF = 2,
} PsMethod;

typedef struct PsPanel PsPanel;

typedef struct PsQrfModel PsQrfModel;

typedef struct PsResult PsResult;

// Evaluation settings. `k == 0` selects global mode; `min_leaf == 0` keeps
// the method default (10 for QRF, 1 for QRS).
typedef struct PsEvalOptions {
  enum PsMethod method;
  size_t k;
  size_t horizon;
  size_t test_hours;
  size_t trees;
  size_t min_leaf;
  uint64_t seed;
} PsEvalOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null after a success.
// The pointer stays valid until the next call into this library on the
// same thread.
const char *ps_last_error_message(void);

// Loads a panel CSV (`timestamp,actual,<model>...`).
//
// # Safety
// `path` must be a valid NUL-terminated string and `out` a valid pointer.
enum PsStatus ps_panel_load(const char *path, struct PsPanel **out);

// Generates series `index` (0-based, < 10) of the seeded synthetic benchmark.
//
// # Safety
// `out` must be a valid pointer.
enum PsStatus ps_panel_benchmark(uint64_t seed, size_t index, struct PsPanel **out);

// Number of hours in the panel; 0 for a null handle.
//
// # Safety
// `panel` must be null or a live handle.
size_t ps_panel_len(const struct PsPanel *panel);

// Number of base models in the panel; 0 for a null handle.
//
// # Safety
// `panel` must be null or a live handle.
size_t ps_panel_n_models(const struct PsPanel *panel);

// # Safety
// `panel` must be null or a handle not yet freed.
void ps_panel_free(struct PsPanel *panel);

// Backtests one method on evenly spaced hours of the panel's final year.
//
// # Safety
// `panel` must be a live handle, `options` and `out` valid pointers.
enum PsStatus ps_evaluate(const struct PsPanel *panel,
                          const struct PsEvalOptions *options,
                          struct PsResult **out);

// Number of evaluated test hours; 0 for a null handle.
//
// # Safety
// `result` must be null or a live handle.
size_t ps_result_n_hours(const struct PsResult *result);

// Reads one aggregate metric by its report name (`MPQRE`, `MARFE`, `MPWS`,
// `inPI`, ...).
//
// # Safety
// `result` must be a live handle, `name` a NUL-terminated string and `out`
// a valid pointer.
enum PsStatus ps_result_metric(const struct PsResult *result, const char *name, double *out);

// Test-hour index, actual load and 99 quantiles of record `i`.
//
// # Safety
// `result` must be a live handle; `hour` and `actual` valid pointers;
// `quantiles` must hold 99 doubles.
enum PsStatus ps_result_record(const struct PsResult *result,
                               size_t i,
                               size_t *hour,
                               double *actual,
                               double *quantiles);

// Writes the aggregate report as JSON into `buf` (NUL-terminated) and its
// length without the terminator into `len`. With a too-small or null
// buffer only `len` is set and the call fails with `InvalidArgument`.
//
// # Safety
// `result` must be a live handle, `len` a valid pointer and `buf` null or
// valid for `capacity` bytes.
enum PsStatus ps_result_report_json(const struct PsResult *result,
                                    char *buf,
                                    size_t capacity,
                                    size_t *len);

// # Safety
// `result` must be null or a handle not yet freed.
void ps_result_free(struct PsResult *result);

// Fits a quantile regression forest on row-major `x` (`n_rows` by
// `n_features`) and targets `y`.
//
// # Safety
// `x` must hold `n_rows * n_features` doubles, `y` `n_rows` doubles and
// `out` be a valid pointer.
enum PsStatus ps_qrf_fit(const double *x,
                         size_t n_rows,
                         size_t n_features,
                         const double *y,
                         size_t trees,
                         size_t min_leaf,
                         uint64_t seed,
                         struct PsQrfModel **out);

// Conditional quantiles of a fitted forest at one query point.
//
// # Safety
// `model` must be a live handle, `query` hold `n_features` doubles and
// `quantiles` hold 99 doubles.
enum PsStatus ps_qrf_predict(const struct PsQrfModel *model,
                             const double *query,
                             size_t n_features,
                             double *quantiles);

// # Safety
// `model` must be null or a handle not yet freed.
void ps_qrf_free(struct PsQrfModel *model);

// Fits linear quantile regressions for all 99 levels and evaluates them
// at `query`, sorting the result when `rearrange` is non-zero.
//
// # Safety
// `x` must hold `n_rows * n_features` doubles, `y` `n_rows`, `query`
// `n_features` and `quantiles` 99.
enum PsStatus ps_qlr_quantiles(const double *x,
                               size_t n_rows,
                               size_t n_features,
                               const double *y,
                               const double *query,
                               int32_t rearrange,
                               double *quantiles);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PROBSTACK_H */
