#ifndef FILMSCORE_H
#define FILMSCORE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum FsStatus {
  FsStatusOk = 0,
  FsStatusInvalidArgument = 1,
  FsStatusIo = 2,
  FsStatusNumeric = 3,
  FsStatusConfig = 4,
  FsStatusFormat = 5,
  FsStatusInternal = 6,
} FsStatus;

/**
 * An initialized generation pipeline: configuration plus model parameters.
 */
typedef struct FsEngine FsEngine;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Last error message for this thread (empty string when none).
 * The pointer stays valid until the next failing call on the same thread.
 */
const char *fs_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *fs_version(void);

/**
 * Create an engine with default configuration and seed-initialized
 * (untrained) parameters. Returns null on failure.
 */
struct FsEngine *fs_engine_new_default(void);

/**
 * Create an engine from a TOML run-configuration file. Returns null on
 * failure; see [`fs_last_error_message`].
 *
 * # Safety
 * `config_path` must be a valid NUL-terminated string or null.
 */
struct FsEngine *fs_engine_new_from_file(const char *config_path);

/**
 * Load trained parameters into the engine.
 *
 * # Safety
 * `engine` must come from an `fs_engine_new*` call; `checkpoint_path` must
 * be a valid NUL-terminated string.
 */
enum FsStatus fs_engine_load_checkpoint(struct FsEngine *engine, const char *checkpoint_path);

/**
 * Generate music for a video file and write a 16-bit PCM mono WAV.
 *
 * # Safety
 * `engine` must come from an `fs_engine_new*` call; both paths must be
 * valid NUL-terminated strings.
 */
enum FsStatus fs_engine_generate(const struct FsEngine *engine,
                                 const char *video_path,
                                 const char *out_wav_path,
                                 uint64_t seed);

/**
 * Destroy an engine created by `fs_engine_new*`. Null is a no-op.
 *
 * # Safety
 * `engine` must not be used after this call.
 */
void fs_engine_free(struct FsEngine *engine);

/**
 * Frechet distance between two row-major embedding matrices
 * (`gen_n x dim` and `ref_n x dim`; both sides need at least 2 rows).
 *
 * # Safety
 * Buffers must hold at least `n * dim` doubles; `out` must be writable.
 */
enum FsStatus fs_metric_frechet(const double *gen,
                                uintptr_t gen_n,
                                const double *reference,
                                uintptr_t ref_n,
                                uintptr_t dim,
                                double *out);

/**
 * k-NN density and coverage of `gen` against `reference`.
 *
 * # Safety
 * Buffers must hold at least `n * dim` doubles; outputs must be writable.
 */
enum FsStatus fs_metric_density_coverage(const double *gen,
                                         uintptr_t gen_n,
                                         const double *reference,
                                         uintptr_t ref_n,
                                         uintptr_t dim,
                                         uintptr_t k,
                                         double *out_density,
                                         double *out_coverage);

/**
 * Mean cosine similarity of row-paired embeddings (`n x dim` each).
 *
 * # Safety
 * Buffers must hold at least `n * dim` doubles; `out` must be writable.
 */
enum FsStatus fs_metric_alignment(const double *audio,
                                  const double *video,
                                  uintptr_t n,
                                  uintptr_t dim,
                                  double *out);

/**
 * Average rank per method over a `n_methods x n_metrics` table; direction
 * byte per metric: 0 = lower is better, 1 = higher is better. `out` must
 * hold `n_methods` doubles.
 *
 * # Safety
 * Buffers must be sized as documented.
 */
enum FsStatus fs_metric_average_rank(const double *table,
                                     uintptr_t n_methods,
                                     uintptr_t n_metrics,
                                     const uint8_t *directions,
                                     double *out);

/**
 * Plan sliding windows for a clip. Each window writes four doubles
 * (`t_start, t_end, emit_start, emit_end`) into `out`, which holds up to
 * `capacity` windows; the required count lands in `out_count` even when it
 * exceeds the capacity.
 *
 * # Safety
 * `out` must hold `4 * capacity` doubles; `out_count` must be writable.
 */
enum FsStatus fs_plan_windows(double duration_s,
                              double window_s,
                              double overlap_s,
                              double *out,
                              uintptr_t capacity,
                              uintptr_t *out_count);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FILMSCORE_H */
