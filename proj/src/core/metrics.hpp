// Copyright 2026 The bckd Authors
// SPDX-License-Identifier: Apache-2.0
//
// Segmentation and distillation diagnostics: mIoU, Lipschitz-ratio manifold
// stability, local Hausdorff distance, Jacobian gap and the Weyl eigenvalue
// check for relation matrices.

#pragma once

#include "tensor.hpp"

#include <cstdint>
#include <functional>
#include <vector>

namespace bckd {

inline constexpr std::uint8_t kIgnoreLabel = 255;

struct LabelMask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> labels;

  LabelMask() = default;
  LabelMask(int h, int w, std::uint8_t fill = 0) : height(h), width(w), labels(static_cast<std::size_t>(h) * w, fill) {}

  std::uint8_t& at(int y, int x) { return labels[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t at(int y, int x) const { return labels[static_cast<std::size_t>(y) * width + x]; }
  bool in_bounds(int y, int x) const { return y >= 0 && y < height && x >= 0 && x < width; }
};

// Accumulates pixel counts over many masks; miou() uses the pooled counts.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int num_classes);

  void add(const LabelMask& pred, const LabelMask& gt);
  int num_classes() const { return classes_; }
  std::uint64_t evaluated_pixels() const { return evaluated_; }

  // NaN for classes absent from both prediction and ground truth.
  std::vector<double> class_iou() const;
  double miou() const;

 private:
  int classes_;
  std::vector<std::uint64_t> counts_;  // [gt][pred]
  std::uint64_t evaluated_ = 0;
};

double miou(const LabelMask& pred, const LabelMask& gt, int num_classes);

struct MfsConfig {
  double epsilon = 0.1;
  double floor_threshold = 0.01;
  int num_directions = 64;
  int num_probes = 16;
  std::uint64_t seed = 0;
};

using TensorFn = std::function<Tensor(const Tensor&)>;

// Monte-Carlo estimate of sup ||f(x+d) - f(x)|| / ||d|| over ||d|| <= epsilon.
// Probe 0 is x itself; further probes are random points within epsilon of x.
// Direction k of probe p depends only on (seed, p, k), so raising
// num_directions never lowers the estimate.
double lipschitz_estimate(const TensorFn& f, const Tensor& x, const MfsConfig& cfg);

double mfs_rho(double l_teacher, double l_student, const MfsConfig& cfg);

// Sorted, duplicate-free pixel coordinates.
struct BoundaryPointSet {
  std::vector<Pixel> points;

  BoundaryPointSet() = default;
  explicit BoundaryPointSet(std::vector<Pixel> pts);
  bool empty() const { return points.empty(); }
  std::size_t size() const { return points.size(); }
};

BoundaryPointSet translate(const BoundaryPointSet& set, int dy, int dx);

// Local Hausdorff distance at p. With N the ground-truth points within r of p,
// an empty N scores 2r. Otherwise every predicted point within r of p
// (p included) contributes its distance to the nearest ground-truth point, and
// the score is min(max, median) of those distances.
double lhd_point(Pixel p, const BoundaryPointSet& pred, const BoundaryPointSet& gt, double r = 5.0);

// Mean of lhd_point over pred after dropping values above mu + 2 sigma
// (population sigma).
double lhd_aggregate(const BoundaryPointSet& pred, const BoundaryPointSet& gt, double r = 5.0);

struct JacobianConfig {
  int window = 1;      // input half-window, in input pixels, around each output pixel
  double step = 1e-5;  // central-difference step
};

// Frobenius norm of J_teacher - J_student, both Jacobians taken by central
// differences of the feature outputs at the listed output pixels w.r.t. the
// input entries in a window around the pixel's input location.
double jacobian_gap(const TensorFn& teacher, const TensorFn& student, const Tensor& x,
                    const std::vector<Pixel>& boundary_pixels, const JacobianConfig& cfg = {});

struct WeylVerdict {
  bool holds = true;
  double max_gap = 0.0;    // max_i |lambda_i(a) - lambda_i(b)|, eigenvalues sorted
  double frobenius = 0.0;  // ||a - b||_F
};

// Throws a domain error when either input deviates from symmetry by > 1e-9.
WeylVerdict weyl_check(const RowMatrix& a, const RowMatrix& b);

inline RowMatrix symmetrize(const RowMatrix& m) { return (m + m.transpose()) * 0.5; }

}  // namespace bckd
