#ifndef RHO_RAW_H
#define RHO_RAW_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

/**
 * Result of every fallible call.
 */
typedef enum RhoStatus {
  RHO_STATUS_OK = 0,
  RHO_STATUS_NULL_POINTER = 1,
  RHO_STATUS_INVALID_ARGUMENT = 2,
  RHO_STATUS_IO = 3,
  RHO_STATUS_CORRUPT_INPUT = 4,
  RHO_STATUS_TRUNCATED = 5,
  RHO_STATUS_CHECKSUM_MISMATCH = 6,
  RHO_STATUS_UNSUPPORTED = 7,
  RHO_STATUS_NUMERICAL = 8,
  RHO_STATUS_PANIC = 99,
} RhoStatus;

/**
 * Colour filter layouts, matching the `.braw` pattern codes.
 */
typedef enum RhoPattern {
  RHO_PATTERN_RGGB = 0,
  RHO_PATTERN_BGGR = 1,
  RHO_PATTERN_GRBG = 2,
  RHO_PATTERN_GBRG = 3,
  RHO_PATTERN_RYYB = 4,
} RhoPattern;

typedef enum RhoProfile {
  RHO_PROFILE_STATIC = 0,
  RHO_PROFILE_FITTED = 1,
} RhoProfile;

/**
 * An owned byte buffer (encoded streams).
 */
typedef struct RhoBuffer RhoBuffer;

/**
 * Four half-resolution planes (R, Gr, Gb, B) of a preview.
 */
typedef struct RhoPlanes RhoPlanes;

/**
 * A Bayer mosaic.
 */
typedef struct RhoRaw RhoRaw;

/**
 * Sensor metadata of a mosaic.
 */
typedef struct RhoMeta {
  enum RhoPattern pattern;
  uint8_t bit_depth;
  uint16_t black_level;
  uint16_t saturation_level;
} RhoMeta;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. Valid until the
 * next call into the library from the same thread.
 */
const char *rho_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *rho_version(void);

/**
 * Builds a mosaic from `width * height` row-major samples.
 *
 * # Safety
 * `samples` must point to `len` readable values; `out` must be writable.
 */
enum RhoStatus rho_raw_new(uintptr_t width,
                           uintptr_t height,
                           struct RhoMeta meta,
                           const uint16_t *samples,
                           uintptr_t len,
                           struct RhoRaw **out);

/**
 * Reads a `.braw` file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum RhoStatus rho_raw_load(const char *path, struct RhoRaw **out);

/**
 * Writes a `.braw` file.
 *
 * # Safety
 * `raw` must be a live handle and `path` a NUL-terminated string.
 */
enum RhoStatus rho_raw_save(const struct RhoRaw *raw, const char *path);

/**
 * # Safety
 * `raw` must be a live handle or NULL.
 */
uintptr_t rho_raw_width(const struct RhoRaw *raw);

/**
 * # Safety
 * `raw` must be a live handle or NULL.
 */
uintptr_t rho_raw_height(const struct RhoRaw *raw);

/**
 * # Safety
 * `raw` must be a live handle; `out` must be writable.
 */
enum RhoStatus rho_raw_meta(const struct RhoRaw *raw, struct RhoMeta *out);

/**
 * Borrowed view of the samples; valid while `raw` lives. Writes the count
 * to `len` (if non-NULL). NULL for a NULL handle.
 *
 * # Safety
 * `raw` must be a live handle or NULL; `len` writable or NULL.
 */
const uint16_t *rho_raw_samples(const struct RhoRaw *raw, uintptr_t *len);

/**
 * # Safety
 * `raw` must come from this library and not be used afterwards.
 */
void rho_raw_free(struct RhoRaw *raw);

/**
 * Losslessly compresses `raw`.
 *
 * # Safety
 * `raw` must be a live handle; `out` must be writable.
 */
enum RhoStatus rho_encode(const struct RhoRaw *raw,
                          enum RhoProfile profile,
                          bool cross_channel,
                          struct RhoBuffer **out);

/**
 * # Safety
 * `buf` must be a live handle or NULL.
 */
const uint8_t *rho_buffer_data(const struct RhoBuffer *buf);

/**
 * # Safety
 * `buf` must be a live handle or NULL.
 */
uintptr_t rho_buffer_len(const struct RhoBuffer *buf);

/**
 * # Safety
 * `buf` must come from this library and not be used afterwards.
 */
void rho_buffer_free(struct RhoBuffer *buf);

/**
 * Decodes a complete stream back to the exact mosaic.
 *
 * # Safety
 * `data` must point to `len` readable bytes; `out` must be writable.
 */
enum RhoStatus rho_decode(const uint8_t *data, uintptr_t len, struct RhoRaw **out);

/**
 * Decodes scales `0..=scale` (0..3) and returns that pyramid level, in
 * sample units.
 *
 * # Safety
 * `data` must point to `len` readable bytes; `out` must be writable.
 */
enum RhoStatus rho_decode_preview(const uint8_t *data,
                                  uintptr_t len,
                                  uintptr_t scale,
                                  struct RhoPlanes **out);

/**
 * Number of complete scales recoverable from a possibly truncated stream.
 *
 * # Safety
 * `data` must point to `len` readable bytes; `scales` must be writable.
 */
enum RhoStatus rho_complete_scales(const uint8_t *data, uintptr_t len, uintptr_t *scales);

/**
 * # Safety
 * `planes` must be a live handle or NULL.
 */
uintptr_t rho_planes_width(const struct RhoPlanes *planes);

/**
 * # Safety
 * `planes` must be a live handle or NULL.
 */
uintptr_t rho_planes_height(const struct RhoPlanes *planes);

/**
 * Borrowed plane `channel` (0 R, 1 Gr, 2 Gb, 3 B) of `width * height`
 * values; NULL for a bad handle or channel.
 *
 * # Safety
 * `planes` must be a live handle or NULL.
 */
const uint16_t *rho_planes_channel(const struct RhoPlanes *planes, uintptr_t channel);

/**
 * # Safety
 * `planes` must come from this library and not be used afterwards.
 */
void rho_planes_free(struct RhoPlanes *planes);

/**
 * Fits the patch-mean curvature `k` to `n` values in `[0, 1]`
 * (clamped to `[-6, 12]`).
 *
 * # Safety
 * `means` must point to `n` readable values; `k` must be writable.
 */
enum RhoStatus rho_fit_k(const double *means, uintptr_t n, double *k);

/**
 * Runs the embedded property checks; `passed` receives the verdict.
 *
 * # Safety
 * `passed` must be writable.
 */
enum RhoStatus rho_selftest(uint64_t seed, bool *passed);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RHO_RAW_H */
