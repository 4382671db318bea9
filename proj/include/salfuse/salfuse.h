/* salfuse — RGB-D salient object detection via cross-modal distillation and
 * complementarity-aware fusion.
 *
 * C interface of the shared library. All state lives behind opaque handles;
 * every entry point returns a status code and leaves a human-readable
 * message retrievable through sf_last_error() on failure.
 */
#ifndef SALFUSE_H
#define SALFUSE_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define SF_API __declspec(dllexport)
#else
#define SF_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum sf_status {
    SF_OK = 0,
    SF_ERROR_CONFIG = 1,   /* bad shapes, hyperparameters, incompatible checkpoints */
    SF_ERROR_DATA = 2,     /* broken datasets, missing ids, unreadable samples */
    SF_ERROR_USAGE = 3,    /* API misuse */
    SF_ERROR_TRAINING = 4, /* non-finite gradients and friends */
    SF_ERROR_IO = 5,       /* filesystem / serialization failures */
    SF_ERROR_INTERNAL = 6
} sf_status;

/* Opaque pipeline configuration. */
typedef struct sf_config sf_config;

/* Last error message of the calling thread; empty string when none. */
SF_API const char* sf_last_error(void);

/* Build a configuration from a named preset ("toy" | "table1"). */
SF_API sf_status sf_config_preset(const char* name, sf_config** out);

/* Load a configuration from a JSON file. */
SF_API sf_status sf_config_load(const char* path, sf_config** out);

/* Override one key with a dotted path, e.g. "train.epochs_teacher". Values
 * are parsed as bool/int/float when possible, else kept as strings. */
SF_API sf_status sf_config_set(sf_config* cfg, const char* dotted_key, const char* value);

SF_API void sf_config_free(sf_config* cfg);

/* Synthesize an RGB-D dataset (rgb/, depth/, gt/, meta.json + manifest). */
SF_API sf_status sf_generate(const sf_config* cfg, const char* out_dir, int count,
                             uint64_t seed);

/* Stage 1: train the teacher on a labeled dataset. */
SF_API sf_status sf_train_teacher(const sf_config* cfg, const char* data_dir,
                                  const char* out_checkpoint, uint64_t seed);

/* Stage 2: hierarchical cross-modal distillation onto the depth stream. */
SF_API sf_status sf_distill(const sf_config* cfg, const char* data_dir,
                            const char* teacher_checkpoint, const char* out_checkpoint,
                            uint64_t seed);

/* Stage 3: train the fusion network. init_mode: "rd-a" | "rd-b" | "rd-c";
 * pass NULL for checkpoints the mode does not need. */
SF_API sf_status sf_train_fusion(const sf_config* cfg, const char* data_dir,
                                 const char* init_mode, const char* teacher_checkpoint,
                                 const char* student_checkpoint, const char* out_checkpoint,
                                 uint64_t seed);

/* Export per-sample saliency maps as 8-bit grayscale PNGs.
 * mode: "teacher" (rgb input) | "student" (depth encoding) | "fusion". */
SF_API sf_status sf_predict(const sf_config* cfg, const char* checkpoint,
                            const char* data_dir, const char* out_dir, const char* mode);

/* PR curve over 256 thresholds, max F-measure and MAE. Writes the report and
 * a PR table; optionally returns the headline numbers. */
SF_API sf_status sf_evaluate(const char* pred_dir, const char* gt_dir, double beta2,
                             const char* out_report, double* mean_max_f, double* mean_mae);

/* Train/predict/evaluate the four CA-Fuse ablation variants and write a
 * comparison table. Checkpoints may be NULL (random initialization). */
SF_API sf_status sf_ablate(const sf_config* cfg, const char* train_dir, const char* test_dir,
                           const char* out_dir, uint64_t seed, const char* teacher_checkpoint,
                           const char* student_checkpoint);

#ifdef __cplusplus
}
#endif

#endif /* SALFUSE_H */
