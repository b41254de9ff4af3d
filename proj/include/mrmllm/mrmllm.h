// Copyright 2026 The mrmllm Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


/* C interface to the mrmllm library.
 *
 * Every function returns an mrml_status. On failure a description of the
 * most recent error on the calling thread is available from
 * mrml_last_error(). Strings returned through char** out-parameters are
 * owned by the caller and released with mrml_string_free(). */

#ifndef MRMLLM_MRMLLM_H_
#define MRMLLM_MRMLLM_H_

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define MRML_API __declspec(dllexport)
#else
#define MRML_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum mrml_status {
  MRML_OK = 0,
  MRML_ERROR_RUNTIME = 1,
  MRML_ERROR_INVALID_ARGUMENT = 2,
  MRML_ERROR_IO = 3,
  MRML_ERROR_FORMAT = 4
} mrml_status;

typedef struct mrml_config mrml_config;
typedef struct mrml_model mrml_model;

MRML_API const char* mrml_version(void);
/* Message of the last failed call on this thread, "" if none. */
MRML_API const char* mrml_last_error(void);
MRML_API void mrml_string_free(char* s);

/* Run configuration: defaults, file loading, key=value overrides. */
MRML_API mrml_status mrml_config_new(mrml_config** out);
MRML_API mrml_status mrml_config_load(const char* path, mrml_config** out);
MRML_API mrml_status mrml_config_set(mrml_config* cfg, const char* key, const char* value);
MRML_API mrml_status mrml_config_get(const mrml_config* cfg, const char* key, char** value);
/* Current values, one "key = value" line per key. */
MRML_API mrml_status mrml_config_to_text(const mrml_config* cfg, char** text);
/* Every key with its default and description, as commented lines. */
MRML_API mrml_status mrml_config_describe(char** text);
MRML_API void mrml_config_free(mrml_config* cfg);

/* Writes the training split to out_path and the held-out split next to it
 * (<stem>.heldout.json). summary receives "refine: R, yesno: Y". */
MRML_API mrml_status mrml_gen_data(const mrml_config* cfg, size_t n, uint64_t seed, double noise,
                                   const char* out_path, char** summary);

typedef void (*mrml_progress_fn)(size_t step, double loss, void* user);

/* Trains on a dataset file and writes the checkpoint to out_path together
 * with <out>.config, <out>.vocab.txt and <out>.loss.csv. progress may be
 * NULL. final_loss (may be NULL) receives the loss of the last step. */
MRML_API mrml_status mrml_train(const mrml_config* cfg, const char* data_path,
                                const char* out_path, mrml_progress_fn progress, void* user,
                                double* final_loss);

/* Loads a checkpoint and its sidecar files. */
MRML_API mrml_status mrml_model_load(const char* checkpoint_path, mrml_model** out);
MRML_API void mrml_model_free(mrml_model* model);

/* task: "refine" or "vqa_yesno". Either output pointer may be NULL. */
MRML_API mrml_status mrml_evaluate(const mrml_model* model, const char* data_path,
                                   const char* task, char** report_json, char** report_table);

/* Answers question about one image of a detections file. image_id NULL or
 * empty selects the first image. */
MRML_API mrml_status mrml_infer(const mrml_model* model, const char* detections_path,
                                const char* image_id, const char* question, char** text);

/* Runs the gradient check suite over `seeds` seeds. passed receives 1 when
 * every check is below tolerance. */
MRML_API mrml_status mrml_gradcheck(size_t seeds, int* passed, double* worst, char** report);

#ifdef __cplusplus
}
#endif

#endif  /* MRMLLM_MRMLLM_H_ */
