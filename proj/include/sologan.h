/*
 * sologan.h — C API of the sologan shared library.
 *
 * A single pair of conditional encoder/generator networks plus one
 * projection-with-classification discriminator translates images among
 * multiple domains with unpaired data. This header exposes dataset
 * generation, training, inference, and evaluation behind opaque handles and
 * status codes; all functions are safe to call from C.
 *
 * Error handling: every fallible call returns a sologan_status. On failure,
 * sologan_last_error() returns a thread-local human-readable message valid
 * until the next failing call on the same thread.
 */

#ifndef SOLOGAN_H_
#define SOLOGAN_H_

#include <stdint.h>

#if defined(_WIN32)
#define SOLOGAN_API __declspec(dllexport)
#else
#define SOLOGAN_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum sologan_status {
  SOLOGAN_OK = 0,
  /* bad arguments, bad configuration, unknown domain names */
  SOLOGAN_ERR_CONFIG = 1,
  /* dataset layout, undecodable images, protocol violations */
  SOLOGAN_ERR_DATA = 2,
  /* filesystem failures */
  SOLOGAN_ERR_IO = 3,
  /* divergence, corrupt or mismatched checkpoints, internal failures */
  SOLOGAN_ERR_RUNTIME = 4,
} sologan_status;

SOLOGAN_API const char* sologan_version(void);

/* Thread-local message describing the most recent failure on this thread. */
SOLOGAN_API const char* sologan_last_error(void);

/* ------------------------------------------------------------------------ */
/* Synthetic datasets                                                        */
/* ------------------------------------------------------------------------ */

/*
 * Writes a synthetic multi-domain dataset under out_dir in the
 * root/{train,test}/<domain>/*.png layout. spec_json holds a SyntheticSpec
 * document, or may be NULL/empty for the built-in two-domain default.
 * Generation is deterministic in the spec's seed.
 */
SOLOGAN_API sologan_status sologan_make_synthetic(const char* spec_json, const char* out_dir);

/* ------------------------------------------------------------------------ */
/* Training                                                                  */
/* ------------------------------------------------------------------------ */

/* Receives each JSONL training-log record as it is written. */
typedef void (*sologan_log_fn)(const char* jsonl_record, void* user);

/*
 * Runs the full training schedule described by run_config_json (see the
 * project README for the document format). Checkpoints and the training log
 * are written under output_dir; the effective configuration is echoed to
 * output_dir/effective_config.json. Pass resume_checkpoint to continue an
 * interrupted run.
 */
SOLOGAN_API sologan_status sologan_train(const char* run_config_json, const char* output_dir,
                                         const char* resume_checkpoint, sologan_log_fn log_fn,
                                         void* user);

/* ------------------------------------------------------------------------ */
/* Inference sessions                                                        */
/* ------------------------------------------------------------------------ */

typedef struct sologan_session sologan_session;

SOLOGAN_API sologan_status sologan_session_open(const char* checkpoint_path,
                                                sologan_session** out_session);
SOLOGAN_API void sologan_session_close(sologan_session* session);

SOLOGAN_API int64_t sologan_session_domain_count(const sologan_session* session);
/* Returns NULL for an out-of-range index. The string lives with the session. */
SOLOGAN_API const char* sologan_session_domain_name(const sologan_session* session, int64_t index);
SOLOGAN_API int64_t sologan_session_image_size(const sologan_session* session);

/*
 * Multimodal translation: every input image is translated into num_samples
 * outputs of target_domain using independent style draws (deterministic in
 * seed). Individual PNGs are written under output_dir; when write_grid is
 * non-zero, one grid image per run is written with inputs in the first
 * column.
 */
SOLOGAN_API sologan_status sologan_translate(sologan_session* session,
                                             const char* const* input_paths, int64_t n_inputs,
                                             const char* target_domain, int64_t num_samples,
                                             uint64_t seed, const char* output_dir,
                                             int write_grid);

/*
 * Example-guided translation: recombines the content of content_path with the
 * style extracted from style_path (a style_domain image).
 */
SOLOGAN_API sologan_status sologan_guide(sologan_session* session, const char* content_path,
                                         const char* style_path, const char* style_domain,
                                         const char* output_path);

/*
 * Grid form: rows are contents, columns are styles; header row/column hold
 * the style and content images.
 */
SOLOGAN_API sologan_status sologan_guide_grid(sologan_session* session,
                                              const char* const* content_paths, int64_t n_contents,
                                              const char* const* style_paths, int64_t n_styles,
                                              const char* style_domain, const char* output_path);

/*
 * Runs the quantitative metric suite (FID, IS, CIS, LPIPS diversity,
 * classification error) over the dataset's test split and writes a JSON
 * report to report_path. protocol_json may be NULL for defaults. The feature
 * extractor is loaded from extractor_path when that file exists; otherwise a
 * probe classifier is trained on the dataset's train split (and saved to
 * extractor_path when a path is given).
 */
SOLOGAN_API sologan_status sologan_evaluate(sologan_session* session, const char* dataset_root,
                                            const char* protocol_json, const char* extractor_path,
                                            const char* report_path);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* SOLOGAN_H_ */
