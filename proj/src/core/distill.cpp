// Copyright 2026 The bckd Authors
// SPDX-License-Identifier: Apache-2.0

#include "distill.hpp"

#include "errors.hpp"
#include "softmax.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace bckd {

void validate(const DistillSchedule& sched) {
  require(sched.alpha >= 0.0 && sched.beta >= 0.0, ErrorKind::config, "schedule: alpha and beta must be >= 0");
  require(sched.t_max >= 1 && sched.t >= 1 && sched.t <= sched.t_max, ErrorKind::config,
          "schedule: require 1 <= t <= t_max");
  require(sched.tau > 0.0 && std::isfinite(sched.tau), ErrorKind::config, "schedule: tau must be > 0");
  require(sched.tau_growth >= 1.0, ErrorKind::config, "schedule: tau_growth must be >= 1");
  require(sched.tau_trigger_range >= 0.0, ErrorKind::config, "schedule: tau_trigger_range must be >= 0");
}

double kd_loss(const RowMatrix& teacher_logits, const RowMatrix& student_logits, double tau,
               RowMatrix* d_student_logits) {
  require(tau > 0.0 && std::isfinite(tau), ErrorKind::domain, "kd_loss: tau must be > 0");
  require(teacher_logits.rows() == student_logits.rows() && teacher_logits.cols() == student_logits.cols(),
          ErrorKind::domain, "kd_loss: shape mismatch");
  require(teacher_logits.size() > 0, ErrorKind::domain, "kd_loss: empty logits");
  const Eigen::Index channels = teacher_logits.rows(), positions = teacher_logits.cols();
  if (d_student_logits) d_student_logits->resize(channels, positions);

  std::vector<double> t(channels), s(channels), lp(channels), lq(channels), gap(channels);
  double ce = 0.0;
  for (Eigen::Index n = 0; n < positions; ++n) {
    for (Eigen::Index c = 0; c < channels; ++c) {
      t[c] = teacher_logits(c, n);
      s[c] = student_logits(c, n);
    }
    log_softmax(t.data(), t.size(), tau, lp.data());
    log_softmax(s.data(), s.size(), tau, lq.data());
    for (Eigen::Index c = 0; c < channels; ++c) {
      const double p = std::exp(lp[c]);
      if (p > 0.0) ce -= p * lq[c];
    }
    if (d_student_logits) {
      softmax_gap(t.data(), s.data(), lp.data(), gap.size(), tau, gap.data());
      for (Eigen::Index c = 0; c < channels; ++c)
        (*d_student_logits)(c, n) = tau * gap[c] / static_cast<double>(positions);
    }
  }
  return tau * tau * ce / static_cast<double>(positions);
}

double schedule_r(int t, int t_max) {
  require(t_max >= 1 && t >= 1 && t <= t_max, ErrorKind::domain,
          "schedule_r: t=" + std::to_string(t) + " outside [1, " + std::to_string(t_max) + "]");
  // Same as 1 - (t - 1) / t_max, arranged so r(t_max) is exactly 1 / t_max.
  return static_cast<double>(t_max - t + 1) / static_cast<double>(t_max);
}

LossBreakdown total_loss(double l_ss, double l_bd, double l_cd, const DistillSchedule& sched) {
  LossBreakdown out;
  out.l_ss = l_ss;
  out.l_bd = l_bd;
  out.l_cd = l_cd;
  out.r_t = sched.use_weight_decay ? schedule_r(sched.t, sched.t_max) : 1.0;
  out.total = l_ss + out.r_t * sched.alpha * l_bd + out.r_t * sched.beta * l_cd;
  return out;
}

DistillSchedule temperature_step(DistillSchedule sched, double minibatch_feature_range) {
  require(minibatch_feature_range >= 0.0, ErrorKind::domain, "temperature_step: range must be >= 0");
  if (minibatch_feature_range > sched.tau_trigger_range) sched.tau *= sched.tau_growth;
  return sched;
}

double value_range(std::span<const double> values) {
  if (values.empty()) return 0.0;
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  return *hi - *lo;
}

}  // namespace bckd
