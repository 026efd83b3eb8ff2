// Copyright 2026 The bckd Authors
// SPDX-License-Identifier: Apache-2.0
//
// Tempered softmax helpers shared by the distillation losses.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>

namespace bckd {

// out[i] = z[i] / tau - logsumexp(z / tau)
inline void log_softmax(const double* z, std::size_t n, double tau, double* out) {
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) m = std::max(m, z[i] / tau);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) sum += std::exp(z[i] / tau - m);
  const double lz = m + std::log(sum);
  for (std::size_t i = 0; i < n; ++i) out[i] = z[i] / tau - lz;
}

// out[i] = softmax(s / tau)[i] - softmax(t / tau)[i], given lp = log_softmax(t).
// At large tau both distributions approach uniform and a plain difference
// cancels catastrophically; writing q = p * exp(d - c) with d = (s - t) / tau
// keeps full relative precision.
inline void softmax_gap(const double* t, const double* s, const double* lp, std::size_t n, double tau, double* out) {
  bool small = true;
  for (std::size_t i = 0; i < n && small; ++i) small = std::abs((s[i] - t[i]) / tau) < 0.5;
  double c = 0.0;
  if (small) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += std::exp(lp[i]) * std::expm1((s[i] - t[i]) / tau);
    c = std::log1p(acc);
  } else {
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) m = std::max(m, lp[i] + (s[i] - t[i]) / tau);
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) sum += std::exp(lp[i] + (s[i] - t[i]) / tau - m);
    c = m + std::log(sum);
  }
  for (std::size_t i = 0; i < n; ++i) {
    const double e = (s[i] - t[i]) / tau - c;
    const double p = std::exp(lp[i]);
    out[i] = std::abs(e) < 0.5 ? p * std::expm1(e) : std::exp(lp[i] + e) - p;
  }
}

}  // namespace bckd
