#ifndef VOXELCTX_H
#define VOXELCTX_H

/* Generated by cbindgen from crates/ffi/src. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum VcnStatus {
  VCN_STATUS_OK = 0,
  VCN_STATUS_NULL_POINTER = 1,
  VCN_STATUS_INVALID_ARGUMENT = 2,
  VCN_STATUS_IO = 3,
  VCN_STATUS_FORMAT = 4,
  VCN_STATUS_MODEL_MISMATCH = 5,
  VCN_STATUS_TRUNCATED = 6,
  VCN_STATUS_EMPTY_CLOUD = 7,
  VCN_STATUS_PANIC = 8,
} VcnStatus;

// Owned byte buffer.
typedef struct VcnBuffer VcnBuffer;

// Owned decoded cloud.
typedef struct VcnCloud VcnCloud;

// Entropy model handle.
typedef struct VcnModel VcnModel;

// Refinement model handle.
typedef struct VcnRefiner VcnRefiner;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *vcn_version(void);

// Message of the last failed call on this thread, empty after a success.
// Valid until the next call on the same thread.
const char *vcn_last_error(void);

// # Safety
// `out` must be a valid pointer to writable storage.
enum VcnStatus vcn_model_uniform(struct VcnModel **out);

// # Safety
// `out` must be a valid pointer to writable storage.
enum VcnStatus vcn_model_adaptive(uint8_t context_bits, struct VcnModel **out);

// Parses a model file image.
//
// # Safety
// `data` must point to `len` readable bytes; `out` must be writable.
enum VcnStatus vcn_model_from_bytes(const uint8_t *data, size_t len, struct VcnModel **out);

// # Safety
// `file` must be a NUL-terminated string; `out` must be writable.
enum VcnStatus vcn_model_load(const char *file, struct VcnModel **out);

// Model kind tag: 0 uniform, 1 adaptive, 2 static, 3 dynamic.
//
// # Safety
// `model` must be a live handle; `out` must be writable.
enum VcnStatus vcn_model_kind(const struct VcnModel *model, uint8_t *out);

// Hash that bitstreams record to bind themselves to a model.
//
// # Safety
// `model` must be a live handle; `out` must be writable.
enum VcnStatus vcn_model_fingerprint(const struct VcnModel *model, uint64_t *out);

// # Safety
// `model` must be null or a handle not yet freed.
void vcn_model_free(struct VcnModel *model);

// # Safety
// `data` must point to `len` readable bytes; `out` must be writable.
enum VcnStatus vcn_refiner_from_bytes(const uint8_t *data, size_t len, struct VcnRefiner **out);

// # Safety
// `refiner` must be null or a handle not yet freed.
void vcn_refiner_free(struct VcnRefiner *refiner);

// Encodes `count` points (`3 * count` doubles) at depth `trunc` of a
// `depth`-level octree.
//
// # Safety
// `xyz` must point to `3 * count` doubles; `model` must be a live handle;
// `out` must be writable.
enum VcnStatus vcn_encode(const double *xyz,
                          size_t count,
                          uint8_t depth,
                          uint8_t trunc,
                          const struct VcnModel *model,
                          struct VcnBuffer **out);

// Decodes a static bitstream; `refiner` may be null.
//
// # Safety
// `data` must point to `len` readable bytes; `model` must be a live handle;
// `refiner` must be null or a live handle; `out` must be writable.
enum VcnStatus vcn_decode(const uint8_t *data,
                          size_t len,
                          const struct VcnModel *model,
                          const struct VcnRefiner *refiner,
                          struct VcnCloud **out);

// # Safety
// `buffer` must be a live handle.
const uint8_t *vcn_buffer_data(const struct VcnBuffer *buffer);

// # Safety
// `buffer` must be null or a live handle.
size_t vcn_buffer_len(const struct VcnBuffer *buffer);

// # Safety
// `buffer` must be null or a handle not yet freed.
void vcn_buffer_free(struct VcnBuffer *buffer);

// Number of points.
//
// # Safety
// `cloud` must be null or a live handle.
size_t vcn_cloud_len(const struct VcnCloud *cloud);

// Interleaved coordinates, `3 * vcn_cloud_len` doubles.
//
// # Safety
// `cloud` must be a live handle.
const double *vcn_cloud_points(const struct VcnCloud *cloud);

// # Safety
// `cloud` must be null or a handle not yet freed.
void vcn_cloud_free(struct VcnCloud *cloud);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VOXELCTX_H */
