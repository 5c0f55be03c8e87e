/* C interface to the cloud tomography pipeline.
 *
 * All entry points return a ctomo_status; CTOMO_OK is 0 and the nonzero
 * codes identify the error class (they double as CLI exit codes). Handles
 * are opaque; a failed call leaves an explanatory message retrievable via
 * ctomo_last_error() (thread-local) until the next call on that thread.
 */
#ifndef CLOUDTOMO_C_API_H
#define CLOUDTOMO_C_API_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define CTOMO_API __declspec(dllexport)
#else
#define CTOMO_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum ctomo_status {
  CTOMO_OK = 0,
  CTOMO_ERR_INVALID_ARGUMENT = 1,
  CTOMO_ERR_CONFIG = 2,
  CTOMO_ERR_IO = 3,
  CTOMO_ERR_CORRUPT_FILE = 4,
  CTOMO_ERR_FORMAT = 5,
  CTOMO_ERR_DEPENDENCY = 6,
  CTOMO_ERR_GEOMETRY = 7,
  CTOMO_ERR_GENERATION = 8,
  CTOMO_ERR_BUDGET = 9,
  CTOMO_ERR_RUNTIME = 10
} ctomo_status;

/* Pipeline handle: resolved configuration plus command dispatch. */
typedef struct ctomo_pipeline ctomo_pipeline;

/* Density grid handle (read-only view of a grid file). */
typedef struct ctomo_grid ctomo_grid;

CTOMO_API const char* ctomo_version(void);

/* Message for the most recent failure on this thread ("" if none). */
CTOMO_API const char* ctomo_last_error(void);

/* Default configuration as a JSON document (caller must not free). */
CTOMO_API const char* ctomo_default_config_json(void);

/* Overrides applied on top of the defaults for the reduced demo setup. */
CTOMO_API const char* ctomo_demo_overrides_json(void);

enum { CTOMO_CREATE_DEMO_BASE = 1 };

/* config_path and overrides_json may be NULL. flags: CTOMO_CREATE_* bits. */
CTOMO_API ctomo_status ctomo_pipeline_create(const char* config_path,
                                             const char* overrides_json, int flags,
                                             ctomo_pipeline** out);
CTOMO_API void ctomo_pipeline_destroy(ctomo_pipeline* pipeline);

/* Resolved configuration of this pipeline as JSON (owned by the handle). */
CTOMO_API const char* ctomo_pipeline_config_json(const ctomo_pipeline* pipeline);

/* command: gen | render | train-layer | train-refine | infer | wind | eval
 * | demo. Commands are idempotent for a fixed (config, seed). */
CTOMO_API ctomo_status ctomo_pipeline_run(ctomo_pipeline* pipeline, const char* command);

CTOMO_API ctomo_status ctomo_grid_read(const char* path, ctomo_grid** out);
CTOMO_API void ctomo_grid_destroy(ctomo_grid* grid);
CTOMO_API ctomo_status ctomo_grid_dims(const ctomo_grid* grid, int32_t dims[3]);
CTOMO_API ctomo_status ctomo_grid_voxel_size(const ctomo_grid* grid, double voxel[3]);
/* Pointer to dims[0]*dims[1]*dims[2] float32 values, x-fastest. Valid until
 * the grid handle is destroyed. */
CTOMO_API const float* ctomo_grid_data(const ctomo_grid* grid);

#ifdef __cplusplus
}
#endif

#endif /* CLOUDTOMO_C_API_H */
