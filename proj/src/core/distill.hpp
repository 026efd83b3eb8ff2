// Copyright 2026 The bckd Authors
// SPDX-License-Identifier: Apache-2.0
//
// Baseline logit distillation loss, the linear weight-decay schedule, the
// composite training objective and the adaptive temperature policy.

#pragma once

#include "tensor.hpp"

#include <span>

namespace bckd {

struct DistillSchedule {
  double alpha = 10.0;
  double beta = 50.0;
  int t = 1;  // current epoch, 1-based
  int t_max = 1;
  double tau = 1.0;
  double tau_growth = 1.05;
  double tau_trigger_range = 0.5;
  bool use_weight_decay = true;  // false pins r(t) to 1
};

void validate(const DistillSchedule& sched);

struct LossBreakdown {
  double l_ss = 0.0;
  double l_bd = 0.0;
  double l_cd = 0.0;
  double r_t = 1.0;
  double total = 0.0;
};

// Logits are [C x N]: softmax runs over the C channels at each of the N
// positions. Returns tau^2 times the mean cross-entropy over positions.
double kd_loss(const RowMatrix& teacher_logits, const RowMatrix& student_logits, double tau,
               RowMatrix* d_student_logits = nullptr);

// 1 - (t - 1) / t_max for 1 <= t <= t_max.
double schedule_r(int t, int t_max);

LossBreakdown total_loss(double l_ss, double l_bd, double l_cd, const DistillSchedule& sched);

// Multiplies tau by tau_growth when range exceeds tau_trigger_range.
DistillSchedule temperature_step(DistillSchedule sched, double minibatch_feature_range);

// max - min over all values; 0 for an empty span.
double value_range(std::span<const double> values);

}  // namespace bckd
