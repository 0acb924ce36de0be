/* Copyright 2026 The imgt Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#ifndef IMGT_IMGT_H_
#define IMGT_IMGT_H_

#include <stddef.h>
#include <stdint.h>

#if defined(IMGT_BUILDING_LIBRARY)
#define IMGT_API __attribute__((visibility("default")))
#else
#define IMGT_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Status codes double as CLI exit codes. */
typedef enum imgt_status {
  IMGT_OK = 0,
  IMGT_ERR_INTERNAL = 1,
  IMGT_ERR_USAGE = 2,
  IMGT_ERR_IO = 3,
  IMGT_ERR_FORMAT = 4,
  IMGT_ERR_NUMERIC = 5
} imgt_status;

typedef struct imgt_model imgt_model;

typedef struct imgt_model_info {
  size_t height;
  size_t width;
  size_t source_height; /* 0 for decoder-only models */
  size_t source_width;
  size_t classes;       /* 0 when unconditioned */
  size_t positions;
  size_t param_count;
  int encoder_decoder;
} imgt_model_info;

typedef void (*imgt_log_fn)(const char* line, void* user);

/* Message for the last failure on this thread; never NULL. */
IMGT_API const char* imgt_last_error(void);

/* Releases buffers returned by this library. */
IMGT_API void imgt_free(void* buffer);

/* Builds a freshly initialized model; seed < 0 uses the configured seed. */
IMGT_API imgt_status imgt_model_create(const char* config_text, int64_t seed, imgt_model** out);
IMGT_API imgt_status imgt_model_create_from_file(const char* config_path, int64_t seed,
                                                 imgt_model** out);
IMGT_API imgt_status imgt_model_load(const char* checkpoint_path, imgt_model** out);
IMGT_API imgt_status imgt_model_save(const imgt_model* model, const char* checkpoint_path);
IMGT_API void imgt_model_free(imgt_model* model);
IMGT_API imgt_status imgt_model_info_get(const imgt_model* model, imgt_model_info* out);

/* Trains on a packed dataset or a directory of PPMs. labels_path may be
   NULL. steps/seed < 0 keep the configured values. */
IMGT_API imgt_status imgt_train(imgt_model* model, const char* data_path, const char* labels_path,
                                int64_t steps, int64_t seed, imgt_log_fn log, void* user);

IMGT_API imgt_status imgt_eval(const imgt_model* model, const char* data_path,
                               const char* labels_path, double* bits_per_dim);

/* Pixel buffers are height * width * 3 bytes, row-major, RGB.
   class_id < 0 means none. */
IMGT_API imgt_status imgt_sample(const imgt_model* model, double temperature, uint64_t seed,
                                 int64_t class_id, uint8_t* out_pixels);
IMGT_API imgt_status imgt_complete(const imgt_model* model, const uint8_t* partial,
                                   size_t prefix_ranks, double temperature, uint64_t seed,
                                   int64_t class_id, uint8_t* out_pixels);
IMGT_API imgt_status imgt_superres(const imgt_model* model, const uint8_t* low,
                                   double temperature, uint64_t seed, uint8_t* out_pixels);

/* Permission matrix of one query block, 255 = permitted, 0 = masked.
   *out must be released with imgt_free. */
IMGT_API imgt_status imgt_inspect_mask(const char* config_text, size_t block, uint8_t** out,
                                       size_t* rows, size_t* cols);

IMGT_API imgt_status imgt_gradcheck(const char* config_text, uint64_t seed,
                                    double* max_rel_error, size_t* coordinates,
                                    size_t* unresolved);

IMGT_API imgt_status imgt_read_ppm(const char* path, uint8_t** pixels, size_t* height,
                                   size_t* width);
IMGT_API imgt_status imgt_write_ppm(const char* path, const uint8_t* pixels, size_t height,
                                    size_t width);
IMGT_API imgt_status imgt_write_pgm(const char* path, const uint8_t* gray, size_t height,
                                    size_t width);
IMGT_API imgt_status imgt_pack_dataset(const char* dir, const char* out_path, size_t* count);
IMGT_API imgt_status imgt_read_file(const char* path, char** text, size_t* length);

#ifdef __cplusplus
}
#endif

#endif /* IMGT_IMGT_H_ */
