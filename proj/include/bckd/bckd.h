/* Copyright 2026 The bckd Authors
 * SPDX-License-Identifier: Apache-2.0
 *
 * C interface to the bckd library. Every call returns a bckd_status; on
 * failure bckd_last_error() describes the problem (thread-local, valid until
 * the next call on the same thread). Handles are opaque and owned by the
 * caller once created.
 */

#ifndef BCKD_BCKD_H
#define BCKD_BCKD_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define BCKD_API __declspec(dllexport)
#else
#define BCKD_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum bckd_status {
  BCKD_OK = 0,
  BCKD_ERR_INTERNAL = 1,
  BCKD_ERR_CONFIG = 2,
  BCKD_ERR_NUMERIC = 3, /* non-finite loss; training aborted */
  BCKD_ERR_IO = 4,
  BCKD_ERR_DOMAIN = 5,
  BCKD_ERR_DATA = 6,
} bckd_status;

typedef struct bckd_experiment bckd_experiment;
typedef struct bckd_model bckd_model;

typedef void (*bckd_log_fn)(const char* line, void* user);

typedef struct bckd_report {
  int epoch;
  double miou;
  int has_mfs;
  double mfs_rho_mean;
  int has_lhd;
  double lhd;
  double loss_ss;
  double loss_bd;
  double loss_cd;
  double r_t;
  double tau;
  uint64_t params;
  uint64_t macs;
} bckd_report;

BCKD_API const char* bckd_version(void);
BCKD_API const char* bckd_last_error(void);

/* Progress lines from long-running calls; pass NULL to silence. Process-wide. */
BCKD_API void bckd_set_log(bckd_log_fn fn, void* user);

BCKD_API bckd_status bckd_experiment_load(const char* path, bckd_experiment** out);
BCKD_API bckd_status bckd_experiment_parse(const char* json_text, bckd_experiment** out);
BCKD_API void bckd_experiment_free(bckd_experiment* exp);

/* Path outputs are NUL-terminated and truncated to buf_len; buf may be NULL. */
BCKD_API bckd_status bckd_teacher_train(const bckd_experiment* exp, const char* out_dir, char* ckpt_buf,
                                        size_t buf_len);
BCKD_API bckd_status bckd_distill_run(const bckd_experiment* exp, const char* teacher_ckpt, const char* out_dir,
                                      char* ckpt_buf, size_t buf_len);

/* teacher_ckpt may be NULL when skip_mfs is nonzero. */
BCKD_API bckd_status bckd_evaluate(const bckd_experiment* exp, const char* ckpt, const char* teacher_ckpt,
                                   const char* out_dir, int skip_mfs, bckd_report* report);

BCKD_API bckd_status bckd_ablation_run(const bckd_experiment* exp, const char* out_dir);

/* hard != 0 thresholds similarities; otherwise the soft map is written. */
BCKD_API bckd_status bckd_boundary_dump(const char* ckpt, uint64_t seed, const char* png_path, int hard);

/* scene_<seed>.png and scene_<seed>_mask.png under dir. */
BCKD_API bckd_status bckd_scene_export(const bckd_experiment* exp, uint64_t seed, const char* dir);

BCKD_API bckd_status bckd_model_load(const char* ckpt, bckd_model** out);
BCKD_API void bckd_model_free(bckd_model* model);
/* Inference-time counts; the training-only distillation branch is excluded. */
BCKD_API bckd_status bckd_model_params(const bckd_model* model, uint64_t* out);
BCKD_API bckd_status bckd_model_macs(const bckd_model* model, int image_size, uint64_t* out);

#ifdef __cplusplus
}
#endif

#endif /* BCKD_BCKD_H */
