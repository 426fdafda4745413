/*
 * snnzip — quantize-and-prune compression for spiking neural networks.
 *
 * C ABI over the toolkit: load or build a JSON run configuration, drive the
 * pipeline stages (train / prune / finetune / full run), and query stored
 * models.  Every function returns SNNZIP_OK or a status code; the message for
 * the most recent failure on the calling thread is snnzip_last_error().
 *
 * Ownership: any char* an out-parameter hands back belongs to the caller and
 * must be released with snnzip_string_free.  The pointers returned by
 * snnzip_version and snnzip_last_error are library-owned; do not free them.
 * The last-error buffer stays valid until the next failing call on the same
 * thread.
 */

#ifndef SNNZIP_H
#define SNNZIP_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum snnzip_status {
    SNNZIP_OK = 0,
    SNNZIP_ERR_INVALID_ARGUMENT = 1, /* bad value or shape */
    SNNZIP_ERR_PARSE = 2,            /* malformed config / dataset / checkpoint */
    SNNZIP_ERR_IO = 3,               /* filesystem trouble */
    SNNZIP_ERR_DEGENERATE_INPUT = 4, /* statistic undefined on this input */
    SNNZIP_ERR_UNSUPPORTED_LAYER = 5,
    SNNZIP_ERR_INVALID_STATE = 6, /* object used out of order */
    SNNZIP_ERR_TRAINING_FAILURE = 7,
    SNNZIP_ERR_UNKNOWN = 8,
} snnzip_status;

typedef struct snnzip_config snnzip_config; /* opaque run configuration */
typedef struct snnzip_model snnzip_model;   /* opaque stored model */

const char* snnzip_version(void);
const char* snnzip_last_error(void);
void snnzip_string_free(char* s);

/* ---- configuration ------------------------------------------------- */

snnzip_status snnzip_config_load(const char* path, snnzip_config** out);
snnzip_status snnzip_config_parse(const char* json_text, const char* source_name, snnzip_config** out);

/* Overrides one key by dotted path ("seed", "prune.criterion",
 * "quantizer.bits", "layers.2.prune_ratio", ...).  value_text is parsed as
 * JSON; when that fails it is taken as a bare string.  The document is
 * re-validated; on failure the config is left unchanged. */
snnzip_status snnzip_config_set(snnzip_config* cfg, const char* dotted_key, const char* value_text);

/* The resolved value at a dotted path, as JSON text (bare text for strings);
 * an empty key returns the whole resolved document. */
snnzip_status snnzip_config_get(const snnzip_config* cfg, const char* dotted_key, char** text_out);

void snnzip_config_free(snnzip_config* cfg);

/* ---- pipeline stages ------------------------------------------------ */
/* Each stage writes its artifacts under the config's output_dir.  Where a
 * checkpoint_dir parameter is NULL, <output_dir>/checkpoint is used. */

/* Full flow: train, score, prune, fine-tune, evaluate, checkpoint, reports.
 * summary_json_out (optional) receives the headline numbers. */
snnzip_status snnzip_run(const snnzip_config* cfg, char** summary_json_out);

snnzip_status snnzip_train(const snnzip_config* cfg);
snnzip_status snnzip_prune(const snnzip_config* cfg, const char* checkpoint_dir);
snnzip_status snnzip_finetune(const snnzip_config* cfg, const char* checkpoint_dir);

/* Bit-width utilization + channel importance (+ robustness when the config
 * scores two or more batches) from a stored model and the config's dataset. */
snnzip_status snnzip_analyze(const snnzip_config* cfg, const char* checkpoint_dir, char** json_out);

/* Storage and synaptic-operation accounting from a stored model. */
snnzip_status snnzip_report(const snnzip_config* cfg, const char* checkpoint_dir, char** json_out);

/* ---- stored models -------------------------------------------------- */

snnzip_status snnzip_model_load(const char* checkpoint_dir, snnzip_model** out);
void snnzip_model_free(snnzip_model* model);
snnzip_status snnzip_model_layer_count(const snnzip_model* model, size_t* out);
snnzip_status snnzip_model_parameter_count(const snnzip_model* model, size_t* out);
snnzip_status snnzip_model_size_json(const snnzip_model* model, char** json_out);

/* Manifest text of a stored model, verbatim. */
snnzip_status snnzip_manifest(const char* checkpoint_dir, char** text_out);

#ifdef __cplusplus
}
#endif

#endif /* SNNZIP_H */
