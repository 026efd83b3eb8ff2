// Copyright 2026 The bckd Authors
// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end. Links only the C interface.
//
// Exit codes: 0 success, 2 configuration error, 3 numeric failure (NaN abort),
// 4 I/O error, 1 anything else.

#include "bckd/bckd.h"

#include "CLI11.hpp"

#include <cstdint>
#include <cstdio>
#include <memory>
#include <string>

namespace {

int exit_code(bckd_status s) {
  switch (s) {
    case BCKD_OK:
      return 0;
    case BCKD_ERR_CONFIG:
    case BCKD_ERR_DOMAIN:
      return 2;
    case BCKD_ERR_NUMERIC:
    case BCKD_ERR_DATA:
      return 3;
    case BCKD_ERR_IO:
      return 4;
    default:
      return 1;
  }
}

int report(bckd_status s) {
  if (s != BCKD_OK) std::fprintf(stderr, "bckd: %s\n", bckd_last_error());
  return exit_code(s);
}

using Experiment = std::unique_ptr<bckd_experiment, decltype(&bckd_experiment_free)>;

bckd_status load(const std::string& path, Experiment& out) {
  bckd_experiment* raw = nullptr;
  const bckd_status s = bckd_experiment_load(path.c_str(), &raw);
  out.reset(raw);
  return s;
}

void log_line(const char* line, void*) {
  std::fprintf(stderr, "%s\n", line);
  std::fflush(stderr);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Boundary and context distillation for dense prediction"};
  app.require_subcommand(1);
  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "Suppress progress output");

  std::string config, out, teacher, ckpt;
  std::uint64_t seed = 0;

  auto* teacher_cmd = app.add_subcommand("teacher", "Teacher network");
  teacher_cmd->require_subcommand(1);
  auto* teacher_train = teacher_cmd->add_subcommand("train", "Train the teacher and its boundary branch");
  teacher_train->add_option("--config", config, "Experiment config (JSON)")->required();
  teacher_train->add_option("--out", out, "Output directory")->required();

  auto* distill_cmd = app.add_subcommand("distill", "Student distillation");
  distill_cmd->require_subcommand(1);
  auto* distill_run = distill_cmd->add_subcommand("run", "Distill a student from a trained teacher");
  distill_run->add_option("--config", config, "Experiment config (JSON)")->required();
  distill_run->add_option("--teacher", teacher, "Teacher checkpoint")->required();
  distill_run->add_option("--out", out, "Output directory")->required();

  bool skip_mfs = false;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on the validation scenes");
  eval_cmd->add_option("--config", config, "Experiment config (JSON)")->required();
  eval_cmd->add_option("--ckpt", ckpt, "Checkpoint to evaluate")->required();
  eval_cmd->add_option("--teacher", teacher, "Teacher checkpoint (required for MFS)");
  eval_cmd->add_option("--out", out, "Output directory")->required();
  eval_cmd->add_flag("--no-mfs", skip_mfs, "Skip manifold stability");

  auto* ablation_cmd = app.add_subcommand("ablation", "Run the component ablation table");
  ablation_cmd->add_option("--config", config, "Experiment config (JSON)")->required();
  ablation_cmd->add_option("--out", out, "Output directory")->required();

  bool soft = false;
  auto* boundary_cmd = app.add_subcommand("boundary", "Boundary maps");
  boundary_cmd->require_subcommand(1);
  auto* boundary_dump = boundary_cmd->add_subcommand("dump", "Write the boundary map of one scene as PNG");
  boundary_dump->add_option("--ckpt", ckpt, "Checkpoint")->required();
  boundary_dump->add_option("--seed", seed, "Scene seed")->required();
  boundary_dump->add_option("--out", out, "Output PNG path")->required();
  boundary_dump->add_flag("--soft", soft, "Write the soft map instead of the hard one");

  auto* scene_cmd = app.add_subcommand("scene", "Synthetic scenes");
  scene_cmd->require_subcommand(1);
  auto* scene_export = scene_cmd->add_subcommand("export", "Write scene_<seed>.png and scene_<seed>_mask.png");
  scene_export->add_option("--config", config, "Experiment config (JSON)")->required();
  scene_export->add_option("--seed", seed, "Scene seed")->required();
  scene_export->add_option("--out", out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (!quiet) bckd_set_log(log_line, nullptr);

  Experiment exp(nullptr, bckd_experiment_free);
  char path[4096] = {0};

  if (teacher_train->parsed()) {
    if (const auto s = load(config, exp); s != BCKD_OK) return report(s);
    const auto s = bckd_teacher_train(exp.get(), out.c_str(), path, sizeof(path));
    if (s == BCKD_OK) std::printf("%s\n", path);
    return report(s);
  }
  if (distill_run->parsed()) {
    if (const auto s = load(config, exp); s != BCKD_OK) return report(s);
    const auto s = bckd_distill_run(exp.get(), teacher.c_str(), out.c_str(), path, sizeof(path));
    if (s == BCKD_OK) std::printf("%s\n", path);
    return report(s);
  }
  if (eval_cmd->parsed()) {
    if (const auto s = load(config, exp); s != BCKD_OK) return report(s);
    bckd_report r{};
    const auto s = bckd_evaluate(exp.get(), ckpt.c_str(), teacher.empty() ? nullptr : teacher.c_str(), out.c_str(),
                                 skip_mfs ? 1 : 0, &r);
    if (s == BCKD_OK) {
      std::printf("miou %.6f\n", r.miou);
      if (r.has_mfs) std::printf("mfs_rho_mean %.6f\n", r.mfs_rho_mean);
      if (r.has_lhd) std::printf("lhd %.6f\n", r.lhd);
      std::printf("params %llu\nmacs %llu\n", static_cast<unsigned long long>(r.params),
                  static_cast<unsigned long long>(r.macs));
    }
    return report(s);
  }
  if (ablation_cmd->parsed()) {
    if (const auto s = load(config, exp); s != BCKD_OK) return report(s);
    const auto s = bckd_ablation_run(exp.get(), out.c_str());
    if (s == BCKD_OK) std::printf("%s/ablation.csv\n", out.c_str());
    return report(s);
  }
  if (boundary_dump->parsed()) {
    return report(bckd_boundary_dump(ckpt.c_str(), seed, out.c_str(), soft ? 0 : 1));
  }
  if (scene_export->parsed()) {
    if (const auto s = load(config, exp); s != BCKD_OK) return report(s);
    return report(bckd_scene_export(exp.get(), seed, out.c_str()));
  }
  return 2;
}
