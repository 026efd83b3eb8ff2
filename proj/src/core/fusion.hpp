// Copyright 2026 The bckd Authors
// SPDX-License-Identifier: Apache-2.0
//
// Multi-level feature fusion: five backbone levels are projected to a common
// width, brought onto the 1/8 reference grid, concatenated, and mixed by a 3x3
// convolution into the fused map consumed by the boundary and context losses.

#pragma once

#include "layers.hpp"
#include "tensor.hpp"

#include <array>
#include <random>

namespace bckd {

inline constexpr int kPyramidLevels = 5;

enum class NetRole { teacher, student };

struct FeatureMap {
  Tensor data;
  int stride = 1;  // downsampling factor relative to the input image
};

struct FeaturePyramid {
  std::array<FeatureMap, kPyramidLevels> levels;
  NetRole source = NetRole::student;
};

struct FusedFeatureMap {
  Tensor data;
  int reference_stride = 8;
};

struct FusionConfig {
  int level_width = 64;
  int fused_width = 256;
  int reference_stride = 8;
};

inline int ceil_div(int a, int b) { return (a + b - 1) / b; }

// Bilinear resample of every channel onto a (target_h, target_w) grid.
// Rejects non-finite input with a data-integrity error.
FeatureMap resize_to_reference(const FeatureMap& map, int target_h, int target_w);

// Checks level count, stride ordering and finiteness; throws on violation.
void validate_pyramid(const FeaturePyramid& pyramid);

class FusionParams {
 public:
  FusionParams() = default;
  FusionParams(const std::string& prefix, const FusionConfig& cfg, const std::array<int, kPyramidLevels>& level_channels);

  const FusionConfig& config() const { return cfg_; }
  const std::array<int, kPyramidLevels>& level_channels() const { return level_channels_; }

  std::array<Conv2d, kPyramidLevels>& projections() { return project_; }
  const std::array<Conv2d, kPyramidLevels>& projections() const { return project_; }
  Conv2d& mix() { return mix_; }
  const Conv2d& mix() const { return mix_; }

  void init(std::mt19937_64& rng);
  std::vector<Param*> params();

 private:
  FusionConfig cfg_;
  std::array<int, kPyramidLevels> level_channels_{};
  std::array<Conv2d, kPyramidLevels> project_;
  Conv2d mix_;
};

// Intermediate values retained by fuse() for the backward pass.
struct FusionTrace {
  std::array<Resampler, kPyramidLevels> resamplers;
  std::array<Tensor, kPyramidLevels> resized;
  Tensor concat;
  Buffer mix_cols;
};

// Reference grid size for an image of the given size.
inline std::pair<int, int> reference_grid(int image_h, int image_w, int reference_stride = 8) {
  return {ceil_div(image_h, reference_stride), ceil_div(image_w, reference_stride)};
}

FusedFeatureMap fuse(const FeaturePyramid& pyramid, const FusionParams& params, FusionTrace* trace = nullptr);

// Accumulates parameter gradients and returns d(loss)/d(level) for every level
// when need_input_grad is set (empty tensors otherwise).
std::array<Tensor, kPyramidLevels> fuse_backward(FusionParams& params,
                                                 const FusionTrace& trace, const Tensor& d_fused,
                                                 bool need_input_grad);

}  // namespace bckd
