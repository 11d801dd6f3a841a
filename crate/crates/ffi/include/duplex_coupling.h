#ifndef DUPLEX_COUPLING_H
#define DUPLEX_COUPLING_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum DcStatus {
  DC_STATUS_OK = 0,
  DC_STATUS_NULL_POINTER = 1,
  DC_STATUS_INVALID_ARGUMENT = 2,
  DC_STATUS_IO = 3,
  DC_STATUS_FORMAT = 4,
  DC_STATUS_DEGENERATE = 5,
  DC_STATUS_NUMERIC_FAULT = 6,
  DC_STATUS_BUFFER_TOO_SMALL = 7,
  DC_STATUS_PANIC = 8,
} DcStatus;

typedef enum DcSpeaker {
  DC_SPEAKER_A = 0,
  DC_SPEAKER_B = 1,
} DcSpeaker;

// Opaque dialogue trace.
typedef struct DcTrace DcTrace;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failure on this thread; empty after a success. The
// pointer stays valid until the next call on the same thread.
const char *dc_last_error(void);

// Reads and validates a trace directory.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum DcStatus dc_trace_read(const char *path, struct DcTrace **out);

// Simulates one toy dialogue with the default agent configuration.
//
// # Safety
// `out` must be writable.
enum DcStatus dc_trace_simulate(double noise_p,
                                double pad_bias_a,
                                double pad_bias_b,
                                bool finetuned_a,
                                bool finetuned_b,
                                uint64_t seed,
                                size_t n_frames,
                                uint32_t frame_ms,
                                struct DcTrace **out);

// # Safety
// `trace` must come from this library; `path` must be NUL-terminated.
enum DcStatus dc_trace_write(const struct DcTrace *trace, const char *path);

// Releases a trace. Null is ignored.
//
// # Safety
// `trace` must come from this library and not be used afterwards.
void dc_trace_free(struct DcTrace *trace);

// # Safety
// `trace` must come from this library; `out` must be writable.
enum DcStatus dc_trace_n_frames(const struct DcTrace *trace, size_t *out);

// # Safety
// `trace` must come from this library; `out` must be writable.
enum DcStatus dc_trace_frame_ms(const struct DcTrace *trace, uint32_t *out);

// Activation dimension of one participant.
//
// # Safety
// `trace` must come from this library; `out` must be writable.
enum DcStatus dc_trace_dim(const struct DcTrace *trace, enum DcSpeaker speaker, size_t *out);

// Copies `n_frames × dim` activations, row-major.
//
// # Safety
// `buf` must hold `len` writable doubles.
enum DcStatus dc_trace_activations(const struct DcTrace *trace,
                                   enum DcSpeaker speaker,
                                   double *buf,
                                   size_t len);

// Copies the per-frame VAD track as 0/1 bytes.
//
// # Safety
// `buf` must hold `len` writable bytes.
enum DcStatus dc_trace_vad(const struct DcTrace *trace,
                           enum DcSpeaker speaker,
                           uint8_t *buf,
                           size_t len);

// End-of-IPU targets (0/1 per frame) for one participant.
//
// # Safety
// `buf` must hold `len` writable bytes.
enum DcStatus dc_trace_eoi_targets(const struct DcTrace *trace,
                                   enum DcSpeaker speaker,
                                   uint8_t *buf,
                                   size_t len);

// Number of Hold and Non-Hold boundaries in a trace.
//
// # Safety
// `trace` must come from this library; both out pointers must be writable.
enum DcStatus dc_trace_transition_counts(const struct DcTrace *trace,
                                         size_t *holds,
                                         size_t *non_holds);

// Linear CKA of two row-major matrices sharing `n_rows`.
//
// # Safety
// `x` must hold `n_rows * dim_x` doubles, `y` `n_rows * dim_y`.
enum DcStatus dc_linear_cka(const double *x,
                            const double *y,
                            size_t n_rows,
                            size_t dim_x,
                            size_t dim_y,
                            double *out);

// Lagged CKA between the two participants for lags `-max_lag..=max_lag`.
// Lags with too little overlap are written as NaN.
//
// # Safety
// `values` must hold `len >= 2 * max_lag + 1` writable doubles.
enum DcStatus dc_trace_lagged_cka(const struct DcTrace *trace,
                                  int64_t max_lag,
                                  size_t min_overlap,
                                  double *values,
                                  size_t len);

// AUC-ROC with ties counted one half. Labels are 0 or 1.
//
// # Safety
// `scores` and `labels` must each hold `n` elements.
enum DcStatus dc_auc_roc(const double *scores, const uint8_t *labels, size_t n, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DUPLEX_COUPLING_H */
