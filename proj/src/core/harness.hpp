// Copyright 2026 The bckd Authors
// SPDX-License-Identifier: Apache-2.0
//
// Experiment orchestration: teacher training, distillation, evaluation,
// ablation sweeps and artifact dumps, all driven by one JSON config.

#pragma once

#include "boundary.hpp"
#include "data.hpp"
#include "distill.hpp"
#include "fusion.hpp"
#include "json_util.hpp"
#include "metrics.hpp"
#include "models.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace bckd {

struct DatasetConfig {
  SceneSpec scene;  // template; seed and (when vary_shapes) num_shapes are per scene
  bool vary_shapes = true;  // num_shapes drawn from [1, scene.num_shapes]
  std::uint64_t train_begin = 0;
  int train_count = 512;
  std::uint64_t val_begin = 100000;
  int val_count = 128;
  bool augment = true;
};

struct OptimizerConfig {
  double lr0 = 0.01;
  double poly_power = 0.9;
  double momentum = 0.9;
  double weight_decay = 0.0;
};

struct Components {
  bool use_bd = true;
  bool use_cd = true;
  bool use_wd = true;
};

struct EvalConfig {
  int mfs_images = 2;     // val images used by evaluate()
  MfsConfig mfs;          // evaluate()
  int epoch_mfs_images = 1;
  MfsConfig epoch_mfs{0.1, 0.01, 4, 2, 0};  // per-epoch records
  double lhd_radius = 5.0;
  int panels = 4;
};

struct ExperimentConfig {
  DatasetConfig dataset;
  NetConfig teacher = teacher_preset();
  NetConfig student = student_preset();
  FusionConfig fusion;
  DistillSchedule sched;
  BoundaryConfig boundary;
  Components components;
  OptimizerConfig optimizer;
  OptimizerConfig branch_optimizer{0.01, 0.9, 0.9, 0.0};
  int epochs = 40;  // distillation t_max
  int teacher_epochs = 60;
  int branch_epochs = 20;
  int batch_size = 8;
  std::uint64_t global_seed = 0;
  EvalConfig eval;
  std::vector<std::uint64_t> ablation_seeds{0, 1, 2};
};

ExperimentConfig parse_config(const json& j);
ExperimentConfig load_config(const std::string& path);
json config_to_json(const ExperimentConfig& cfg);
void validate(const ExperimentConfig& cfg);

// Scene spec for one dataset seed.
SceneSpec scene_for(const DatasetConfig& data, std::uint64_t seed);

struct RunRecord {
  int epoch = 0;
  LossBreakdown losses;
  double miou = 0.0;
  std::optional<double> mfs_rho_mean;
  std::optional<double> lhd;
  double tau = 1.0;
  double wall_time = 0.0;  // seconds; logged, not written to records.jsonl
};

// Exactly {epoch, miou, mfs_rho_mean, lhd, loss_ss, loss_bd, loss_cd, r_t, tau}.
json record_to_json(const RunRecord& r);

using LogFn = std::function<void(const std::string&)>;

struct RunOptions {
  LogFn log;  // may be empty
};

struct TrainResult {
  std::string checkpoint;
  std::vector<RunRecord> records;
};

// Segmentation training followed by the boundary-branch phase; writes
// ckpt_teacher.bin and records.jsonl under out_dir.
TrainResult train_teacher(const ExperimentConfig& cfg, const std::string& out_dir, const RunOptions& opt = {});

// Writes ckpt_student.bin and records.jsonl under out_dir.
TrainResult distill_student(const ExperimentConfig& cfg, const std::string& teacher_ckpt, const std::string& out_dir,
                            const RunOptions& opt = {});

struct EvalReport {
  RunRecord record;
  std::vector<double> class_iou;
  std::uint64_t params = 0;
  std::uint64_t macs = 0;  // inference, one image
};

// teacher_ckpt may be empty; MFS then raises a config error unless skip_mfs.
EvalReport evaluate(const ExperimentConfig& cfg, const std::string& ckpt, const std::string& teacher_ckpt,
                    const std::string& out_dir, bool skip_mfs = false, const RunOptions& opt = {});

// Inference parameter and multiply-accumulate counts for one image of the
// configured size. The training-only distillation branch is excluded.
std::uint64_t inference_params(const Model& model);
std::uint64_t inference_macs(const Model& model, int image_size);

struct AblationRow {
  std::string row;
  Components components;
  std::uint64_t seed = 0;
  double miou = 0.0;
  double delta_vs_baseline = 0.0;
  std::uint64_t params = 0;
  std::uint64_t macs = 0;
  std::string teacher_hash;
};

inline constexpr const char* kAblationHeader =
    "row,use_bd,use_cd,use_wd,seed,miou,delta_vs_baseline,params,macs,teacher_hash";

// Rows baseline, BD, CD, BD+CD, BD+CD+WD for every ablation seed, all sharing
// one teacher (reused from out_dir/teacher when its config digest matches).
std::vector<AblationRow> run_ablation(const ExperimentConfig& cfg, const std::string& out_dir,
                                      const RunOptions& opt = {});
std::string ablation_csv_line(const AblationRow& row);

// Hard (default) or soft boundary map of a checkpoint's distillation branch on
// one generated scene, written as an 8-bit grayscale PNG at grid resolution.
BoundaryMap boundary_dump(const std::string& ckpt, std::uint64_t seed, const std::string& png_path,
                          BoundaryMode mode = BoundaryMode::hard);

// Digest of the parts of a config that determine the trained teacher.
std::string teacher_config_digest(const ExperimentConfig& cfg);

// Teacher-branch affinity loss on 4-neighbour grid pairs: binary cross-entropy
// between pair_similarity of the scalar field and same-label targets from the
// grid mask. Pairs touching ignore cells are skipped. d_field receives the
// gradient when non-null.
double affinity_loss(const Grid& field, const LabelMask& grid_mask, const BoundaryConfig& cfg, Grid* d_field);

}  // namespace bckd
