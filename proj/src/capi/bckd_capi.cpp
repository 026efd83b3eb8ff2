// Copyright 2026 The bckd Authors
// SPDX-License-Identifier: Apache-2.0

#include "bckd/bckd.h"

#include "data.hpp"
#include "errors.hpp"
#include "harness.hpp"
#include "models.hpp"

#include <cstring>
#include <exception>
#include <mutex>
#include <new>
#include <string>

struct bckd_experiment {
  bckd::ExperimentConfig cfg;
};

struct bckd_model {
  bckd::Model model;
};

namespace {

thread_local std::string last_error;

std::mutex log_mutex;
bckd_log_fn log_fn = nullptr;
void* log_user = nullptr;

bckd::RunOptions run_options() {
  bckd::RunOptions opt;
  opt.log = [](const std::string& line) {
    std::lock_guard<std::mutex> lock(log_mutex);
    if (log_fn) log_fn(line.c_str(), log_user);
  };
  return opt;
}

bckd_status status_of(bckd::ErrorKind kind) {
  switch (kind) {
    case bckd::ErrorKind::config:
      return BCKD_ERR_CONFIG;
    case bckd::ErrorKind::domain:
      return BCKD_ERR_DOMAIN;
    case bckd::ErrorKind::data_integrity:
      return BCKD_ERR_DATA;
    case bckd::ErrorKind::numeric:
      return BCKD_ERR_NUMERIC;
    case bckd::ErrorKind::io:
      return BCKD_ERR_IO;
  }
  return BCKD_ERR_INTERNAL;
}

template <typename F>
bckd_status guarded(F&& body) {
  last_error.clear();
  try {
    body();
    return BCKD_OK;
  } catch (const bckd::Error& e) {
    last_error = e.what();
    return status_of(e.kind());
  } catch (const std::bad_alloc&) {
    last_error = "out of memory";
    return BCKD_ERR_INTERNAL;
  } catch (const std::exception& e) {
    last_error = e.what();
    return BCKD_ERR_INTERNAL;
  } catch (...) {
    last_error = "unknown error";
    return BCKD_ERR_INTERNAL;
  }
}

bckd_status null_arg(const char* what) {
  last_error = std::string(what) + " must not be NULL";
  return BCKD_ERR_DOMAIN;
}

void copy_out(const std::string& s, char* buf, size_t len) {
  if (!buf || len == 0) return;
  const size_t n = std::min(len - 1, s.size());
  std::memcpy(buf, s.data(), n);
  buf[n] = '\0';
}

}  // namespace

extern "C" {

const char* bckd_version(void) { return "0.1.0"; }

const char* bckd_last_error(void) { return last_error.c_str(); }

void bckd_set_log(bckd_log_fn fn, void* user) {
  std::lock_guard<std::mutex> lock(log_mutex);
  log_fn = fn;
  log_user = user;
}

bckd_status bckd_experiment_load(const char* path, bckd_experiment** out) {
  if (!path) return null_arg("path");
  if (!out) return null_arg("out");
  return guarded([&] { *out = new bckd_experiment{bckd::load_config(path)}; });
}

bckd_status bckd_experiment_parse(const char* json_text, bckd_experiment** out) {
  if (!json_text) return null_arg("json_text");
  if (!out) return null_arg("out");
  return guarded([&] {
    bckd::json j;
    try {
      j = bckd::json::parse(json_text, nullptr, true, true);
    } catch (const bckd::json::exception& e) {
      bckd::fail(bckd::ErrorKind::config, e.what());
    }
    *out = new bckd_experiment{bckd::parse_config(j)};
  });
}

void bckd_experiment_free(bckd_experiment* exp) { delete exp; }

bckd_status bckd_teacher_train(const bckd_experiment* exp, const char* out_dir, char* ckpt_buf, size_t buf_len) {
  if (!exp) return null_arg("exp");
  if (!out_dir) return null_arg("out_dir");
  return guarded([&] { copy_out(bckd::train_teacher(exp->cfg, out_dir, run_options()).checkpoint, ckpt_buf, buf_len); });
}

bckd_status bckd_distill_run(const bckd_experiment* exp, const char* teacher_ckpt, const char* out_dir, char* ckpt_buf,
                             size_t buf_len) {
  if (!exp) return null_arg("exp");
  if (!teacher_ckpt) return null_arg("teacher_ckpt");
  if (!out_dir) return null_arg("out_dir");
  return guarded([&] {
    copy_out(bckd::distill_student(exp->cfg, teacher_ckpt, out_dir, run_options()).checkpoint, ckpt_buf, buf_len);
  });
}

bckd_status bckd_evaluate(const bckd_experiment* exp, const char* ckpt, const char* teacher_ckpt, const char* out_dir,
                          int skip_mfs, bckd_report* report) {
  if (!exp) return null_arg("exp");
  if (!ckpt) return null_arg("ckpt");
  if (!out_dir) return null_arg("out_dir");
  return guarded([&] {
    const bckd::EvalReport r =
        bckd::evaluate(exp->cfg, ckpt, teacher_ckpt ? teacher_ckpt : "", out_dir, skip_mfs != 0, run_options());
    if (!report) return;
    report->epoch = r.record.epoch;
    report->miou = r.record.miou;
    report->has_mfs = r.record.mfs_rho_mean.has_value();
    report->mfs_rho_mean = r.record.mfs_rho_mean.value_or(0.0);
    report->has_lhd = r.record.lhd.has_value();
    report->lhd = r.record.lhd.value_or(0.0);
    report->loss_ss = r.record.losses.l_ss;
    report->loss_bd = r.record.losses.l_bd;
    report->loss_cd = r.record.losses.l_cd;
    report->r_t = r.record.losses.r_t;
    report->tau = r.record.tau;
    report->params = r.params;
    report->macs = r.macs;
  });
}

bckd_status bckd_ablation_run(const bckd_experiment* exp, const char* out_dir) {
  if (!exp) return null_arg("exp");
  if (!out_dir) return null_arg("out_dir");
  return guarded([&] { bckd::run_ablation(exp->cfg, out_dir, run_options()); });
}

bckd_status bckd_boundary_dump(const char* ckpt, uint64_t seed, const char* png_path, int hard) {
  if (!ckpt) return null_arg("ckpt");
  if (!png_path) return null_arg("png_path");
  return guarded([&] {
    bckd::boundary_dump(ckpt, seed, png_path, hard ? bckd::BoundaryMode::hard : bckd::BoundaryMode::soft);
  });
}

bckd_status bckd_scene_export(const bckd_experiment* exp, uint64_t seed, const char* dir) {
  if (!exp) return null_arg("exp");
  if (!dir) return null_arg("dir");
  return guarded([&] {
    bckd::export_scene(bckd::generate_scene(bckd::scene_for(exp->cfg.dataset, seed)), seed, dir);
  });
}

bckd_status bckd_model_load(const char* ckpt, bckd_model** out) {
  if (!ckpt) return null_arg("ckpt");
  if (!out) return null_arg("out");
  return guarded([&] { *out = new bckd_model{bckd::load_checkpoint(ckpt).model}; });
}

void bckd_model_free(bckd_model* model) { delete model; }

bckd_status bckd_model_params(const bckd_model* model, uint64_t* out) {
  if (!model) return null_arg("model");
  if (!out) return null_arg("out");
  return guarded([&] { *out = bckd::inference_params(model->model); });
}

bckd_status bckd_model_macs(const bckd_model* model, int image_size, uint64_t* out) {
  if (!model) return null_arg("model");
  if (!out) return null_arg("out");
  return guarded([&] { *out = bckd::inference_macs(model->model, image_size); });
}

}  // extern "C"
