// Copyright 2026 The bckd Authors
// SPDX-License-Identifier: Apache-2.0
//
// Boundary synthesis from fused features and the boundary distillation loss.
//
// A learned 1x1 projection compresses the fused map to a scalar field. Two
// pixels are similar when the field changes by less than the threshold; the
// affinity of a pixel pair is the weakest link along the discrete line joining
// them, and a pixel's boundary score is the strongest disconnection to any
// neighbour within the configured radius.

#pragma once

#include "fusion.hpp"
#include "layers.hpp"
#include "tensor.hpp"

#include <string>
#include <vector>

namespace bckd {

enum class BoundaryMode { soft, hard };

struct BoundaryConfig {
  int neighborhood_radius = 2;
  double similarity_threshold = 0.5;  // theta
  double softness = 0.1;              // gamma
  BoundaryMode mode = BoundaryMode::soft;
};

void validate(const BoundaryConfig& cfg);

struct BoundaryMap {
  Grid scores;  // in [0, 1]
  BoundaryMode mode = BoundaryMode::soft;
};

// 1x1 convolution from the fused width down to one channel.
class ScalarProjection {
 public:
  ScalarProjection() = default;
  ScalarProjection(const std::string& prefix, int fused_width);

  Conv2d& conv() { return conv_; }
  const Conv2d& conv() const { return conv_; }
  int fused_width() const { return conv_.shape().in; }

  void init(std::mt19937_64& rng);
  std::vector<Param*> params() { return {&conv_.weight(), &conv_.bias()}; }

 private:
  Conv2d conv_;
};

Grid project_scalar(const FusedFeatureMap& fused, const ScalarProjection& proj);
// Accumulates projection gradients; returns d(loss)/d(fused).
Tensor project_scalar_backward(const FusedFeatureMap& fused, ScalarProjection& proj, const Grid& d_field);

// Integer line from a to b, both endpoints included.
std::vector<Pixel> bresenham_line(Pixel a, Pixel b);

// Similarity of two field values: sigmoid((theta - |a - b|) / gamma) in soft
// mode, thresholded at 0.5 in hard mode.
double pair_similarity(double a, double b, const BoundaryConfig& cfg);

// Minimum similarity over consecutive pixel pairs on the line from i to j.
// Returns 1 when i == j. Throws a domain error for out-of-bounds pixels or
// pixels further apart than the neighbourhood radius.
double path_affinity(const Grid& field, Pixel i, Pixel j, const BoundaryConfig& cfg);

// Winning (p, q) pair behind every score, as flat field indices; -1 where the
// pixel has no neighbour.
struct BoundaryTrace {
  std::vector<int> p;
  std::vector<int> q;
};

BoundaryMap boundary_map(const Grid& field, const BoundaryConfig& cfg, BoundaryTrace* trace = nullptr);

// d(loss)/d(field) given d(loss)/d(scores). Soft mode only.
Grid boundary_map_backward(const Grid& field, const BoundaryConfig& cfg, const BoundaryTrace& trace,
                           const Grid& d_scores);

// Temperature-scaled spatial softmax cross-entropy between teacher and student
// boundary maps, averaged over positions and scaled by tau^2. When d_student is
// non-null it receives d(loss)/d(student scores).
double boundary_loss(const BoundaryMap& teacher, const BoundaryMap& student, double tau, Grid* d_student = nullptr);

// Pixels with score >= threshold.
std::vector<Pixel> boundary_pixels(const BoundaryMap& map, double threshold = 0.5);

// 8-bit grayscale PNG, score * 255 rounded to nearest, row-major.
void write_boundary_png(const BoundaryMap& map, const std::string& path);

}  // namespace bckd
