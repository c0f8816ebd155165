/* ffcl: deterministic two-class training pipelines behind a C interface.
 *
 * Every entry point returns an ffcl_status; on failure ffcl_last_error()
 * holds a message for the calling thread. Handles are opaque and must be
 * released with their matching *_close call. Output-parameter objects are
 * only valid when the call returned FFCL_OK (or FFCL_E_PARTIAL, which
 * still produces a result describing the completed portion).
 */
#ifndef FFCL_H
#define FFCL_H

#include <stdint.h>

#if defined(_WIN32)
#if defined(FFCL_BUILD_SHARED)
#define FFCL_API __declspec(dllexport)
#else
#define FFCL_API __declspec(dllimport)
#endif
#else
#define FFCL_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum ffcl_status {
  FFCL_OK = 0,
  FFCL_E_CONFIG = 2,  /* bad config file, flags, or values */
  FFCL_E_RUNTIME = 3, /* training/validation failure */
  FFCL_E_IO = 4,      /* file system, checkpoint, or output-dir failure */
  FFCL_E_PARTIAL = 5  /* grid finished but some rows failed */
} ffcl_status;

/* A parsed run description: config file plus pending overrides. */
typedef struct ffcl_config ffcl_config;

/* The outcome of one operation: a human-readable summary plus, when the
 * operation produces one, a machine-readable document (manifest, metric,
 * or report payload). */
typedef struct ffcl_result ffcl_result;

FFCL_API const char* ffcl_version(void);

/* Message for the most recent failed call on this thread ("" if none). */
FFCL_API const char* ffcl_last_error(void);

/* Parses and validates the config file. */
FFCL_API ffcl_status ffcl_config_open(const char* path, ffcl_config** out);

/* Overrides one run parameter before ffcl_run/ffcl_ablate. Keys:
 *   "mode"    pipeline mode name (RBP, LocalThenGlobal, GlobalThenLocal,
 *             GlobalOnly, LocalOnly)
 *   "seed"    non-negative integer
 *   "out_dir" output directory path
 */
FFCL_API ffcl_status ffcl_config_set(ffcl_config* cfg, const char* key, const char* value);

FFCL_API void ffcl_config_close(ffcl_config* cfg);

/* Executes the configured stage chain into a fresh output directory. */
FFCL_API ffcl_status ffcl_run(ffcl_config* cfg, ffcl_result** out);

/* Runs the five-mode grid for every initialization in `inits`, a comma list
 * of "random" and "warm:<checkpoint path>" entries (NULL or "" means
 * "random"). `jobs` worker threads (< 1 behaves as 1). Returns
 * FFCL_E_PARTIAL when some rows failed but the grid was still written. */
FFCL_API ffcl_status ffcl_ablate(ffcl_config* cfg, const char* inits, int jobs,
                                 ffcl_result** out);

/* Finite-difference verification of the gradient engine. `inject_fault`
 * (optional, may be NULL) scales one named check's analytic gradient to
 * prove the harness can fail. FFCL_E_RUNTIME when any check fails. */
FFCL_API ffcl_status ffcl_gradcheck(uint64_t seed, const char* inject_fault, ffcl_result** out);

/* Generates a synthetic two-class image set described by the JSON spec file
 * and writes images.idx, labels.idx, and digest.json into out_dir. */
FFCL_API ffcl_status ffcl_datagen(const char* spec_path, const char* out_dir, ffcl_result** out);

/* Pretty-prints a produced artifact (metrics.json, manifest.json, or
 * grid.csv) as terminal text. */
FFCL_API ffcl_status ffcl_render(const char* path, ffcl_result** out);

/* Both strings live until ffcl_result_close. */
FFCL_API const char* ffcl_result_summary(const ffcl_result* res);
FFCL_API const char* ffcl_result_json(const ffcl_result* res);
FFCL_API ffcl_status ffcl_result_status(const ffcl_result* res);
FFCL_API void ffcl_result_close(ffcl_result* res);

#ifdef __cplusplus
}
#endif

#endif /* FFCL_H */
