/* Copyright 2026 The ctxmt Authors. All Rights Reserved.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef CTXMT_CTXMT_H_
#define CTXMT_CTXMT_H_

#include <stddef.h>

#if defined(_WIN32)
#define CTXMT_API __declspec(dllexport)
#else
#define CTXMT_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Status codes; the CLI uses them as exit codes. */
typedef enum ctxmt_status {
  CTXMT_OK = 0,
  CTXMT_USAGE_ERROR = 1,
  CTXMT_DATA_ERROR = 2,
  CTXMT_NUMERIC_ERROR = 3
} ctxmt_status;

typedef struct ctxmt_model ctxmt_model;

/* Called once per training step with the metrics line (JSON). */
typedef void (*ctxmt_step_callback)(const char* metrics_json, void* user);

CTXMT_API const char* ctxmt_version(void);

/* Message of the last failed call on this thread; "" if none. */
CTXMT_API const char* ctxmt_last_error(void);

/* Frees strings returned through char** out-parameters. NULL is ignored. */
CTXMT_API void ctxmt_string_free(char* s);

/* Merges a JSON config file (may be NULL) with "section.key=value"
 * overrides and returns the full effective config as JSON. Unknown keys
 * are rejected. */
CTXMT_API ctxmt_status ctxmt_config_resolve(const char* config_path, const char* const* overrides,
                                            size_t override_count, char** effective_json);

/* Trains on a JSONL corpus with an effective config (as returned by
 * ctxmt_config_resolve). resume_path, callback and summary_json may be NULL.
 * The summary holds last_step, stopped_early, final_checkpoint and metrics. */
CTXMT_API ctxmt_status ctxmt_train(const char* corpus_path, const char* config_json,
                                   const char* out_dir, const char* resume_path,
                                   ctxmt_step_callback callback, void* user, char** summary_json);

CTXMT_API ctxmt_status ctxmt_model_load(const char* checkpoint_path, ctxmt_model** model);
CTXMT_API void ctxmt_model_free(ctxmt_model* model);

/* Checkpoint metadata: configs, step and vocabulary size. */
CTXMT_API ctxmt_status ctxmt_model_info(const ctxmt_model* model, char** info_json);

/* options_json (may be NULL) accepts "mode" ("mono"|"bi"), "window" ("P,N")
 * and "beam" (a beam config object). Absent fields come from the checkpoint.
 * Writes a header line, then one {doc_id, src, [tgt,] hyp} line per document. */
CTXMT_API ctxmt_status ctxmt_translate_file(const ctxmt_model* model, const char* corpus_path,
                                            const char* options_json, const char* out_path);

/* Writes the selection trace of example `index` (corpus order, every
 * sentence of every document) to out_path. Same options as translation. */
CTXMT_API ctxmt_status ctxmt_inspect(const ctxmt_model* model, const char* corpus_path, size_t index,
                                     const char* options_json, const char* out_path);

/* Corpus BLEU between two files. Each file is either JSONL (a "hyp" or
 * "tgt" array per document; header lines skipped) or plain text with one
 * sentence per line. */
CTXMT_API ctxmt_status ctxmt_bleu_files(const char* hyp_path, const char* ref_path, int smooth,
                                        double* bleu);

#ifdef __cplusplus
}
#endif

#endif /* CTXMT_CTXMT_H_ */
