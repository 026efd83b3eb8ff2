// Copyright 2026 The bckd Authors
// SPDX-License-Identifier: Apache-2.0
//
// Tiny five-stage segmentation networks. The backbone exposes its feature
// pyramid (strides 1, 2, 4, 8, 8); the inference head sums per-level 1x1
// class projections after upsampling them to the input size. The distillation
// branch (fusion, boundary projection, alignment) hangs off the pyramid and is
// used only during training.

#pragma once

#include "boundary.hpp"
#include "context.hpp"
#include "fusion.hpp"
#include "json_util.hpp"
#include "layers.hpp"
#include "metrics.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace bckd {

inline constexpr std::array<int, kPyramidLevels> kStageStrides = {1, 2, 4, 8, 8};
inline constexpr int kMinInputSize = 16;

struct NetConfig {
  std::array<int, kPyramidLevels> widths{};
  int head_classes = 5;
  std::uint64_t seed = 0;
  NetRole role = NetRole::student;
};

NetConfig teacher_preset(int classes = 5, std::uint64_t seed = 1);
NetConfig student_preset(int classes = 5, std::uint64_t seed = 2);
void validate(const NetConfig& cfg);
const char* role_name(NetRole role);
NetRole parse_role(const std::string& s);
json net_config_to_json(const NetConfig& cfg);
// Strict: unknown keys are config errors. Missing keys keep `base` values.
NetConfig net_config_from_json(const json& j, const NetConfig& base, const std::string& where);

// Activations kept by SegNet::forward for the backward pass.
struct NetTrace {
  Tensor input;
  std::array<Tensor, kPyramidLevels> features;  // post-ReLU stage outputs
  std::array<Buffer, kPyramidLevels> cols;
  std::array<Resampler, kPyramidLevels> upsample;
};

struct NetOutput {
  Tensor logits;  // [C x H x W]
  FeaturePyramid pyramid;
};

class SegNet {
 public:
  SegNet() = default;
  explicit SegNet(const NetConfig& cfg);

  const NetConfig& config() const { return cfg_; }

  void init(std::mt19937_64& rng);

  // Throws a domain error for inputs smaller than kMinInputSize. macs, when
  // non-null, is incremented by the multiply-accumulates executed.
  NetOutput forward(const Tensor& image, NetTrace* trace = nullptr, std::uint64_t* macs = nullptr) const;

  // Backbone only; returns the pyramid without evaluating the head.
  FeaturePyramid pyramid(const Tensor& image) const;

  // d_levels entries may be empty (no gradient from that level).
  void backward(const NetTrace& trace, const Tensor& d_logits, const std::array<Tensor, kPyramidLevels>& d_levels);

  std::vector<Param*> params();
  std::vector<const Param*> params() const;
  std::uint64_t parameter_count() const;

 private:
  NetConfig cfg_;
  std::array<Conv2d, kPyramidLevels> stages_;
  std::array<Conv2d, kPyramidLevels> heads_;
};

// Training-only heads built on the feature pyramid.
struct DistillBranch {
  FusionParams fusion;
  ScalarProjection scalar;
  AlignmentParams align;

  std::vector<Param*> params();
};

struct Model {
  SegNet net;
  DistillBranch branch;

  const NetConfig& config() const { return net.config(); }
  std::vector<Param*> all_params();
  std::vector<const Param*> all_params() const;
};

// Deterministic initialisation from cfg.seed.
Model build_model(const NetConfig& cfg, const FusionConfig& fusion = {});

// Fused map of the distillation branch for an image.
FusedFeatureMap fused_features(const Model& model, const Tensor& image);

// Pixel-mean softmax cross-entropy against the mask, skipping ignore pixels.
double segmentation_loss(const Tensor& logits, const LabelMask& mask, Tensor* d_logits = nullptr);
LabelMask predict_labels(const Tensor& logits);

struct CheckpointMeta {
  int epoch = 0;
  std::string rng_state;
  std::string extra_json = "{}";  // free-form metadata object
};

// Archive: "BCKDCKPT", u32 header length, UTF-8 JSON header (schema version,
// NetConfig, fusion config, epoch, RNG state, extra), u32 tensor count, then
// per tensor: u32 name length, name, u32 rank, u32 dims, float32 LE values.
void save_checkpoint(const std::string& path, const Model& model, const CheckpointMeta& meta);

struct LoadedCheckpoint {
  Model model;
  CheckpointMeta meta;
};

// When expected is non-null the stored NetConfig must match its widths, class
// count and role.
LoadedCheckpoint load_checkpoint(const std::string& path, const NetConfig* expected = nullptr);

// FNV-1a 64-bit digest, hex encoded.
std::string digest_bytes(const std::vector<char>& bytes);
std::string digest_file(const std::string& path);
std::string digest_params(const std::vector<const Param*>& params);

}  // namespace bckd
