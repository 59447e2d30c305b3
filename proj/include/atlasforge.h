#ifndef ATLASFORGE_H
#define ATLASFORGE_H

/* C interface to the multi-atlas segmentation pipeline. All functions
 * return AF_OK on success; on failure af_last_error() carries a
 * thread-local description of what went wrong. */

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum af_status {
  AF_OK = 0,
  AF_ERR_IO = 1,
  AF_ERR_BAD_MAGIC = 2,
  AF_ERR_TRUNCATED = 3,
  AF_ERR_PAYLOAD_SIZE = 4,
  AF_ERR_DIMS_MISMATCH = 5,
  AF_ERR_INVALID_ARGUMENT = 6,
  AF_ERR_DEGENERATE_REFERENCE = 7,
  AF_ERR_EMPTY_MASK = 8,
  AF_ERR_INSUFFICIENT_TEMPLATES = 9,
  AF_ERR_MANIFEST = 10,
  AF_ERR_MISSING_MODEL = 11,
  AF_ERR_VERSION_MISMATCH = 12,
  AF_ERR_DIVERGENCE = 13,
  AF_ERR_UNKNOWN = 14
} af_status;

const char* af_status_name(af_status status);
const char* af_last_error(void);

/* --- volumes -------------------------------------------------------------- */

typedef struct af_volume af_volume;

af_status af_volume_load(const char* path, af_volume** out);
af_status af_volume_save(const af_volume* volume, const char* path);
af_status af_volume_create_f32(const uint32_t dims[3], const float* data, af_volume** out);
af_status af_volume_create_u16(const uint32_t dims[3], const uint16_t* data, af_volume** out);
void af_volume_free(af_volume* volume);

void af_volume_dims(const af_volume* volume, uint32_t dims[3]);
/* 0 = float32, 1 = label16, -1 on null input */
int af_volume_dtype(const af_volume* volume);
/* Borrowed pointers, valid while the volume lives; NULL on dtype mismatch. */
const float* af_volume_f32(const af_volume* volume);
const uint16_t* af_volume_u16(const af_volume* volume);

af_status af_histogram_match(const af_volume* source, const af_volume* reference,
                             af_volume** out);
/* Dice overlap of label==roi between two label volumes (both empty -> 1). */
af_status af_dsc(const af_volume* a, const af_volume* b, uint16_t roi, double* out);

/* --- pipeline stages -------------------------------------------------------
 * Option structs must be initialised with their _init function before any
 * fields are overridden, so that newly added fields keep sane defaults. */

typedef struct af_prep_options {
  const char* manifest_path;
  const char* out_dir;
  const char* reference_id; /* NULL: first template */
  int verbose;
} af_prep_options;
void af_prep_options_init(af_prep_options* opt);
af_status af_prep(const af_prep_options* opt);

typedef struct af_geometry_options {
  const char* prep_manifest_path;
  int dilation_radius; /* default 3 */
  const char* out_path;
  int verbose;
} af_geometry_options;
void af_geometry_options_init(af_geometry_options* opt);
af_status af_geometry(const af_geometry_options* opt);

typedef struct af_sample_options {
  const char* prep_manifest_path;
  const char* geometry_path;
  int roi;
  int count; /* default 1000 */
  int k;     /* default 3 */
  uint64_t seed;
  double search_radius_factor; /* default 0.75 */
  const char* out_dir;
  int verbose;
} af_sample_options;
void af_sample_options_init(af_sample_options* opt);
af_status af_sample(const af_sample_options* opt);

typedef struct af_train_options {
  const char* samples_dir;
  const char* geometry_path;
  const char* out_dir;
  int roi;
  int members;          /* default 3 */
  double learning_rate; /* default 0.01 */
  uint64_t seed;
  const double* width_multipliers; /* NULL: 1.0, 0.75, 1.25 */
  int width_multiplier_count;
  int batch_size;    /* default 2 */
  int warmup_epochs; /* default 5 */
  int max_epochs;    /* default 15 */
  int verbose;
} af_train_options;
void af_train_options_init(af_train_options* opt);
af_status af_train(const af_train_options* opt);

typedef struct af_segment_options {
  const char* prep_manifest_path;
  const char* geometry_path;
  const char* image; /* test id or prepped image path */
  const char* models_dir;
  const char* out_path;
  const char* confidence_path; /* NULL: skip */
  int verbose;
} af_segment_options;
void af_segment_options_init(af_segment_options* opt);
af_status af_segment(const af_segment_options* opt);

typedef struct af_evaluate_options {
  const char* const* pred_paths;
  const char* const* truth_paths;
  int pair_count;
  const uint16_t* rois;
  int roi_count;
  const char* out_path; /* NULL: skip writing the report */
  int verbose;
} af_evaluate_options;
void af_evaluate_options_init(af_evaluate_options* opt);
af_status af_evaluate(const af_evaluate_options* opt);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* ATLASFORGE_H */
