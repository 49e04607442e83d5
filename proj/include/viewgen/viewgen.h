#ifndef VIEWGEN_VIEWGEN_H
#define VIEWGEN_VIEWGEN_H

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define VG_API __declspec(dllexport)
#else
#define VG_API __attribute__((visibility("default")))
#endif

/* Status codes returned by every vg_* call that can fail. */
enum {
  VG_OK = 0,
  VG_ERR_INVALID_SHAPE = 1,
  VG_ERR_INVALID_ARGUMENT = 2,
  VG_ERR_INVALID_BATCH = 3,
  VG_ERR_CONFIG = 4,
  VG_ERR_IO = 5,
  VG_ERR_FORMAT = 6,
  VG_ERR_VERSION = 7,
  VG_ERR_TRUNCATED = 8,
  VG_ERR_CHECKSUM = 9,
  VG_ERR_UNKNOWN_CLASS = 10,
  VG_ERR_INVALID_CAMERA = 11,
  VG_ERR_INVALID_CROP = 12,
  VG_ERR_NO_MODEL = 13,
  VG_ERR_EMPTY_CLASS = 14,
  VG_ERR_EMPTY_HOLDOUT = 15,
  VG_ERR_DIVERGENCE = 16,
  VG_ERR_OUTPUT_EXISTS = 17,
  VG_ERR_USAGE = 18,
  VG_ERR_VERIFICATION = 19,
  VG_ERR_INTERNAL = 20
};

enum { VG_LOG_INFO = 0, VG_LOG_WARNING = 1 };

typedef struct vg_model vg_model;
typedef struct vg_registry vg_registry;

typedef void (*vg_log_fn)(int level, const char* message, void* user);

VG_API const char* vg_version(void);
/* Short name of a status code, e.g. "no_model". */
VG_API const char* vg_status_name(int status);

/* Message of the last failed call on this thread; "" after a success. */
VG_API const char* vg_last_error_message(void);
/* Text result of the last vg_run_* call on this thread (report, summary). */
VG_API const char* vg_last_output(void);

/* Progress messages of long runs; NULL silences them. Not thread-safe. */
VG_API void vg_set_log_handler(vg_log_fn fn, void* user);

/*
 * Runners take flat "key=value" lines. Unknown keys fail with
 * VG_ERR_USAGE. Keys are documented by the viewgen tool's --help.
 */
VG_API int vg_run_render_dataset(const char* config);
VG_API int vg_run_train(const char* config);
VG_API int vg_run_generate(const char* config);
VG_API int vg_run_evaluate(const char* config);
/* VG_ERR_VERIFICATION when the largest relative error exceeds the tolerance. */
VG_API int vg_run_gradcheck(const char* config, double* max_relative_error);
VG_API int vg_run_info(const char* config);

/* Checkpoints. */
VG_API int vg_model_load(const char* path, vg_model** out);
VG_API void vg_model_free(vg_model* model);
VG_API int vg_model_input_size(const vg_model* model, int* size);
VG_API int vg_model_save(const vg_model* model, const char* path);
/*
 * input: planar RGB + mask, 4 x S x S floats in [0,1].
 * rgb_out: count x 3 x S x S, depth_out: count x 1 x S x S.
 */
VG_API int vg_model_generate(const vg_model* model, const float* input, const double* delta_yaw,
                             const double* delta_pitch, size_t count, float* rgb_out,
                             float* depth_out);

/* Class-to-checkpoint registry file ("class=path" lines). */
VG_API int vg_registry_load(const char* path, vg_registry** out);
VG_API void vg_registry_free(vg_registry* registry);
VG_API size_t vg_registry_size(const vg_registry* registry);
/* Borrowed model for `label`, or for `override_class` when not NULL. */
VG_API int vg_registry_route(const vg_registry* registry, const char* label,
                             const char* override_class, const vg_model** out);

#ifdef __cplusplus
}
#endif

#endif
