#ifndef SATSTEREO_H
#define SATSTEREO_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SsStatus {
  SS_STATUS_OK = 0,
  SS_STATUS_NULL_POINTER = 1,
  SS_STATUS_INVALID_INPUT = 2,
  SS_STATUS_DEGENERATE = 3,
  SS_STATUS_NO_CONVERGENCE = 4,
  SS_STATUS_OUT_OF_BOUNDS = 5,
  SS_STATUS_INSUFFICIENT_DATA = 6,
  SS_STATUS_FORMAT = 7,
  SS_STATUS_MISSING_FILE = 8,
  SS_STATUS_IO = 9,
  SS_STATUS_PANIC = 10,
} SsStatus;

// Pinhole camera in an ENU frame.
typedef struct SsPinhole SsPinhole;

// Loaded pipeline configuration.
typedef struct SsPipeline SsPipeline;

// RPC camera.
typedef struct SsRpc SsRpc;

// Outcome of a pipeline run. Metric fields are NaN when no ground truth was
// configured.
typedef struct SsPipelineResult {
  double valid_fraction;
  double completeness_pct;
  double median_error_m;
  double seconds;
} SsPipelineResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. Valid until the
// next call into the library from the same thread.
const char *ss_last_error(void);

// Library version as a static NUL-terminated string.
const char *ss_version(void);

// Loads an RPC JSON sidecar.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a writable pointer.
enum SsStatus ss_rpc_load(const char *path, struct SsRpc **out);

// Projects a geodetic point (degrees, meters) to pixel `(u, v)`.
//
// # Safety
// `rpc` must come from [`ss_rpc_load`]; `u` and `v` must be writable.
enum SsStatus ss_rpc_project(const struct SsRpc *rpc,
                             double lat,
                             double lon,
                             double alt,
                             double *u,
                             double *v);

// Geodetic position of pixel `(u, v)` at altitude `alt`.
//
// # Safety
// `rpc` must come from [`ss_rpc_load`]; `lat` and `lon` must be writable.
enum SsStatus ss_rpc_localize(const struct SsRpc *rpc,
                              double u,
                              double v,
                              double alt,
                              double *lat,
                              double *lon);

// # Safety
// `rpc` must come from [`ss_rpc_load`] or be null, and not be used afterwards.
void ss_rpc_free(struct SsRpc *rpc);

// Fits a pinhole camera to `rpc` over the AOI `[lat_min, lat_max, lon_min,
// lon_max]` and altitudes `[alt_min, alt_max]`, sampled on a `samples^3`
// grid. `observer` is `[lat, lon, alt]` of the ENU origin, or null for the
// AOI center at the lower altitude. `max_error_px` may be null.
//
// # Safety
// `aoi` must point to 4 doubles, `alt` to 2, `observer` to 3 or be null;
// `out` must be writable.
enum SsStatus ss_pinhole_approximate(const struct SsRpc *rpc,
                                     const double *aoi,
                                     const double *alt,
                                     const double *observer,
                                     size_t samples,
                                     struct SsPinhole **out,
                                     double *max_error_px);

// Projects an ENU point to pixel `(u, v)`.
//
// # Safety
// `cam` must be a live pinhole handle; `u` and `v` must be writable.
enum SsStatus ss_pinhole_project(const struct SsPinhole *cam,
                                 double x,
                                 double y,
                                 double z,
                                 double *u,
                                 double *v);

// Converts a geodetic point to the camera's ENU frame.
//
// # Safety
// `cam` must be a live pinhole handle; `enu` must point to 3 writable doubles.
enum SsStatus ss_pinhole_geodetic_to_enu(const struct SsPinhole *cam,
                                         double lat,
                                         double lon,
                                         double alt,
                                         double *enu);

// Row-major 3x4 projection matrix.
//
// # Safety
// `cam` must be a live pinhole handle; `out` must point to 12 writable doubles.
enum SsStatus ss_pinhole_matrix(const struct SsPinhole *cam, double *out);

// Writes the camera as JSON.
//
// # Safety
// `cam` must be a live pinhole handle and `path` a NUL-terminated string.
enum SsStatus ss_pinhole_save(const struct SsPinhole *cam, const char *path);

// # Safety
// `cam` must be a pinhole handle or null, and not be used afterwards.
void ss_pinhole_free(struct SsPinhole *cam);

// Loads and validates a pipeline configuration.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a writable pointer.
enum SsStatus ss_pipeline_load(const char *path, struct SsPipeline **out);

// Runs every stage, writing artifacts to the configured output directory.
//
// # Safety
// `pipeline` must come from [`ss_pipeline_load`]; `result` must be writable.
enum SsStatus ss_pipeline_run(const struct SsPipeline *pipeline, struct SsPipelineResult *result);

// # Safety
// `pipeline` must come from [`ss_pipeline_load`] or be null, and not be used
// afterwards.
void ss_pipeline_free(struct SsPipeline *pipeline);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SATSTEREO_H */
