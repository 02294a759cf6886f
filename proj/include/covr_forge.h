// Copyright 2026 The covr-forge Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

/* C interface to covr-forge. All handles are opaque; every call that can fail
 * returns a covr_status and leaves a message for covr_last_error(). */
#ifndef COVR_FORGE_H
#define COVR_FORGE_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define COVR_API __declspec(dllexport)
#else
#define COVR_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum covr_status {
    COVR_OK = 0,
    COVR_ERR_INTERNAL = 1,
    COVR_ERR_CONFIG = 2,
    COVR_ERR_MISSING_ARTIFACT = 3,
    COVR_ERR_SERVICE = 4,
    COVR_ERR_PARSE = 5,
    COVR_ERR_VALIDATION = 6,
    COVR_ERR_IO = 7,
    COVR_ERR_INVALID_ARGUMENT = 8
} covr_status;

typedef struct covr_pipeline covr_pipeline;
typedef struct covr_embeddings covr_embeddings;
typedef struct covr_annotate_server covr_annotate_server;
typedef struct covr_mtg_stub covr_mtg_stub;

/* Message of the last failed call on this thread; empty after a success. */
COVR_API const char* covr_last_error(void);
COVR_API const char* covr_status_name(covr_status status);
COVR_API const char* covr_version(void);

/* Releases strings returned through char** out-parameters. */
COVR_API void covr_string_free(char* s);

/* ---- pipeline ---- */

/* Loads a JSON config; COVR_FORGE_MTG_URL overrides mtg.url. */
COVR_API covr_status covr_pipeline_open(const char* config_path, covr_pipeline** out);
/* Dotted-key override such as ("mtg.mode", "llm"); values parse as JSON when possible. */
COVR_API covr_status covr_pipeline_set(covr_pipeline* p, const char* key, const char* value);
/* Runs one stage, or every batch stage for "all". Writes the stage counts as a
 * JSON object to *result_json when result_json is not NULL. */
COVR_API covr_status covr_pipeline_run_stage(covr_pipeline* p, const char* stage, int force, int strict,
                                             char** result_json);
/* Effective configuration as JSON. */
COVR_API covr_status covr_pipeline_config_json(const covr_pipeline* p, char** out_json);
COVR_API void covr_pipeline_free(covr_pipeline* p);

/* Synthetic dataset plus config.json in dir. seed picks the draw. */
COVR_API covr_status covr_make_toy_dataset(const char* dir, uint64_t seed);

/* ---- primitives ---- */

/* Normalized tokens joined by single spaces. */
COVR_API covr_status covr_normalize_caption(const char* raw, char** out);
COVR_API covr_status covr_format_llm_prompt(const char* caption_a, const char* caption_b, char** out);
/* Summed two-sided HN-NCE loss over a row-major n x n cosine matrix. */
COVR_API covr_status covr_hn_nce_loss(const double* s, size_t n, double tau, double alpha, double beta, double* out);

COVR_API covr_status covr_embeddings_load(const char* path, covr_embeddings** out);
COVR_API size_t covr_embeddings_dim(const covr_embeddings* e);
COVR_API size_t covr_embeddings_count(const covr_embeddings* e);
/* Copies dim floats of the vector for id into out. */
COVR_API covr_status covr_embeddings_get(const covr_embeddings* e, const char* id, float* out, size_t out_len);
COVR_API void covr_embeddings_free(covr_embeddings* e);

/* ---- annotation service ---- */

COVR_API covr_status covr_annotate_server_create(const char* pool_path, const char* log_path, const char* frames_dir,
                                                 int lease_seconds, covr_annotate_server** out);
/* Serves on a background thread; port 0 picks a free port, written to *bound_port. */
COVR_API covr_status covr_annotate_server_start(covr_annotate_server* s, const char* host, int port, int* bound_port);
/* Blocks until covr_annotate_server_stop is called from another thread. */
COVR_API covr_status covr_annotate_server_listen(covr_annotate_server* s, const char* host, int port);
COVR_API void covr_annotate_server_stop(covr_annotate_server* s);
COVR_API void covr_annotate_server_free(covr_annotate_server* s);

/* ---- deterministic generation-service stub ---- */

COVR_API covr_status covr_mtg_stub_create(covr_mtg_stub** out);
COVR_API covr_status covr_mtg_stub_start(covr_mtg_stub* s, const char* host, int port, int* bound_port);
COVR_API covr_status covr_mtg_stub_listen(covr_mtg_stub* s, const char* host, int port);
COVR_API void covr_mtg_stub_stop(covr_mtg_stub* s);
COVR_API size_t covr_mtg_stub_requests(const covr_mtg_stub* s);
COVR_API void covr_mtg_stub_free(covr_mtg_stub* s);

#ifdef __cplusplus
}
#endif

#endif /* COVR_FORGE_H */
