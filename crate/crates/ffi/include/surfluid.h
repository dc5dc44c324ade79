#ifndef SURFLUID_H
#define SURFLUID_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes. Values are stable.
 */
typedef enum SfStatus {
  SF_STATUS_OK = 0,
  SF_STATUS_NULL_ARGUMENT = 1,
  SF_STATUS_BUFFER_TOO_SMALL = 2,
  SF_STATUS_UTF8 = 3,
  SF_STATUS_PANIC = 4,
  SF_STATUS_MISSING_FILE = 10,
  SF_STATUS_DIMENSION_MISMATCH = 11,
  SF_STATUS_NON_POSITIVE_DEPTH = 12,
  SF_STATUS_BAD_MAGIC = 13,
  SF_STATUS_TRUNCATED_FILE = 14,
  SF_STATUS_FORMAT = 15,
  SF_STATUS_EMPTY_SEQUENCE = 20,
  SF_STATUS_EMPTY_FLUID_REGION = 21,
  SF_STATUS_NO_HINTS = 22,
  SF_STATUS_DEGENERATE_TRIANGLE = 23,
  SF_STATUS_SOLVER_DIVERGED = 24,
  SF_STATUS_SINGULAR_SYSTEM = 25,
  SF_STATUS_ALL_HOLES = 26,
  SF_STATUS_OBJECT_OUT_OF_FRAME = 27,
  SF_STATUS_INVALID_CONFIG = 30,
  SF_STATUS_INVALID_INPUT = 31,
  SF_STATUS_IO = 40,
  SF_STATUS_IMAGE = 41,
  SF_STATUS_JSON = 42,
} SfStatus;

/**
 * Opaque rendered frame sequence.
 */
typedef struct SfFrames SfFrames;

/**
 * Opaque editing session.
 */
typedef struct SfSession SfSession;

/**
 * Simulation settings; start from [`sf_simulate_defaults`].
 */
typedef struct SfSimulateParams {
  size_t frames;
  double beta;
  uint64_t seed;
  size_t warmup_steps;
  double gravity_scale;
  size_t particles_per_face;
} SfSimulateParams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next call on this thread.
 */
const char *sf_last_error_message(void);

/**
 * Open a session on a scene manifest or directory. Hints stored in the
 * manifest are kept.
 *
 * # Safety
 * `path` must be a valid C string; `out` must be writable.
 */
enum SfStatus sf_session_open(const char *path, size_t stride, struct SfSession **out);

/**
 * Open a session from a JSON create request, as accepted by the HTTP API.
 *
 * # Safety
 * `json` must be a valid C string; `out` must be writable.
 */
enum SfStatus sf_session_create_json(const char *json, struct SfSession **out);

/**
 * # Safety
 * `session` must come from this library and not be used afterwards.
 */
void sf_session_free(struct SfSession *session);

/**
 * Apply one JSON request (`{"op": ...}`) from a session log.
 *
 * # Safety
 * `session` must be valid; `json` must be a valid C string.
 */
enum SfStatus sf_session_apply_json(struct SfSession *session, const char *json);

/**
 * Replace the hints. `hints` holds `count` records of `u, v, vx, vy`.
 *
 * # Safety
 * `session` must be valid; `hints` must point to `4 * count` doubles.
 */
enum SfStatus sf_session_set_hints(struct SfSession *session, const double *hints, size_t count);

/**
 * Default simulation settings.
 */
struct SfSimulateParams sf_simulate_defaults(void);

/**
 * # Safety
 * `session` and `params` must be valid.
 */
enum SfStatus sf_session_simulate(struct SfSession *session, const struct SfSimulateParams *params);

/**
 * Place a sphere of `radius` meters on the surface under pixel `(u, v)`.
 *
 * # Safety
 * `session` must be valid.
 */
enum SfStatus sf_session_add_sphere(struct SfSession *session, double u, double v, double radius);

/**
 * # Safety
 * `session` must be valid.
 */
enum SfStatus sf_session_remove_object(struct SfSession *session, size_t index);

/**
 * # Safety
 * `session` must be valid or null; null yields 0.
 */
uint64_t sf_session_revision(const struct SfSession *session);

/**
 * Image size and number of available motion fields.
 *
 * # Safety
 * All pointers must be valid.
 */
enum SfStatus sf_session_dims(const struct SfSession *session,
                              size_t *width,
                              size_t *height,
                              size_t *fields);

/**
 * Copy motion field `frame` as interleaved `dx, dy` floats, row-major.
 * `len` is the capacity of `out` in floats and must be `2 * width * height`.
 *
 * # Safety
 * `session` must be valid; `out` must hold `len` floats.
 */
enum SfStatus sf_session_motion(const struct SfSession *session,
                                size_t frame,
                                float *out,
                                size_t len);

/**
 * Session log as JSON, for replay. Free with [`sf_string_free`].
 *
 * # Safety
 * `session` must be valid; `out` must be writable.
 */
enum SfStatus sf_session_log_json(const struct SfSession *session, char **out);

/**
 * # Safety
 * `s` must come from this library and not be used afterwards.
 */
void sf_string_free(char *s);

/**
 * Render frames `0..=n` from motion field `field`.
 *
 * # Safety
 * `session` must be valid; `out` must be writable.
 */
enum SfStatus sf_session_render(const struct SfSession *session,
                                size_t field,
                                size_t n,
                                bool cyclic,
                                struct SfFrames **out);

/**
 * # Safety
 * `frames` must be valid or null; null yields 0.
 */
size_t sf_frames_count(const struct SfFrames *frames);

/**
 * Copy frame `index` as 8-bit RGB, row-major. `len` must be at least
 * `3 * width * height`.
 *
 * # Safety
 * `frames` must be valid; `out` must hold `len` bytes.
 */
enum SfStatus sf_frames_copy_rgb8(const struct SfFrames *frames,
                                  size_t index,
                                  uint8_t *out,
                                  size_t len);

/**
 * # Safety
 * `frames` must come from this library and not be used afterwards.
 */
void sf_frames_free(struct SfFrames *frames);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SURFLUID_H */
