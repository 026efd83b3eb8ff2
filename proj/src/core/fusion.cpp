// Copyright 2026 The bckd Authors
// SPDX-License-Identifier: Apache-2.0

#include "fusion.hpp"

#include "errors.hpp"

namespace bckd {

FeatureMap resize_to_reference(const FeatureMap& map, int target_h, int target_w) {
  require(target_h >= 1 && target_w >= 1, ErrorKind::domain, "resize_to_reference: target size must be >= 1");
  require(map.data.channels >= 1 && map.data.height >= 1 && map.data.width >= 1, ErrorKind::domain,
          "resize_to_reference: empty feature map");
  require(map.data.all_finite(), ErrorKind::data_integrity, "resize_to_reference: non-finite feature values");
  Resampler r(map.data.height, map.data.width, target_h, target_w);
  const int new_stride = map.stride * map.data.height / target_h;
  return FeatureMap{r.forward(map.data), new_stride > 0 ? new_stride : 1};
}

void validate_pyramid(const FeaturePyramid& pyramid) {
  int prev_stride = 0;
  for (int i = 0; i < kPyramidLevels; ++i) {
    const FeatureMap& lvl = pyramid.levels[i];
    require(lvl.data.channels >= 1 && lvl.data.height >= 1 && lvl.data.width >= 1, ErrorKind::domain,
            "pyramid level " + std::to_string(i) + " is empty");
    require(lvl.stride >= prev_stride, ErrorKind::domain, "pyramid strides must be non-decreasing");
    require(lvl.data.all_finite(), ErrorKind::data_integrity,
            "pyramid level " + std::to_string(i) + " has non-finite entries");
    prev_stride = lvl.stride;
  }
}

FusionParams::FusionParams(const std::string& prefix, const FusionConfig& cfg,
                           const std::array<int, kPyramidLevels>& level_channels)
    : cfg_(cfg), level_channels_(level_channels) {
  require(cfg.level_width >= 1 && cfg.fused_width >= 1 && cfg.reference_stride >= 1, ErrorKind::config,
          "fusion: widths and stride must be positive");
  for (int i = 0; i < kPyramidLevels; ++i) {
    project_[i] = Conv2d(prefix + ".project" + std::to_string(i),
                         ConvShape{level_channels[i], cfg.level_width, 1, 1, 0, 1});
  }
  mix_ = Conv2d(prefix + ".mix", ConvShape{kPyramidLevels * cfg.level_width, cfg.fused_width, 3, 1, 1, 1});
}

void FusionParams::init(std::mt19937_64& rng) {
  for (auto& p : project_) p.init_he(rng);
  mix_.init_he(rng);
}

std::vector<Param*> FusionParams::params() {
  std::vector<Param*> out;
  for (auto& p : project_) {
    out.push_back(&p.weight());
    out.push_back(&p.bias());
  }
  out.push_back(&mix_.weight());
  out.push_back(&mix_.bias());
  return out;
}

FusedFeatureMap fuse(const FeaturePyramid& pyramid, const FusionParams& params, FusionTrace* trace) {
  validate_pyramid(pyramid);
  const FusionConfig& cfg = params.config();
  for (int i = 0; i < kPyramidLevels; ++i) {
    require(pyramid.levels[i].data.channels == params.level_channels()[i], ErrorKind::config,
            "fuse: level " + std::to_string(i) + " channel count does not match projection parameters");
  }
  const FeatureMap& base = pyramid.levels[0];
  const auto [h, w] = reference_grid(base.data.height * base.stride, base.data.width * base.stride,
                                     cfg.reference_stride);

  FusionTrace local;
  FusionTrace& tr = trace ? *trace : local;
  tr.concat = Tensor(kPyramidLevels * cfg.level_width, h, w);
  for (int i = 0; i < kPyramidLevels; ++i) {
    const Tensor& lvl = pyramid.levels[i].data;
    // Resampling weights sum to one, so resample-then-project equals
    // project-then-resample exactly; the cheaper order is used.
    tr.resamplers[i] = Resampler(lvl.height, lvl.width, h, w);
    tr.resized[i] = tr.resamplers[i].forward(lvl);
    Tensor projected = params.projections()[i].forward(tr.resized[i]);
    std::copy(projected.data.begin(), projected.data.end(),
              tr.concat.data.begin() + static_cast<std::ptrdiff_t>(i) * cfg.level_width * h * w);
  }
  FusedFeatureMap out;
  out.reference_stride = cfg.reference_stride;
  out.data = params.mix().forward(tr.concat, &tr.mix_cols);
  return out;
}

std::array<Tensor, kPyramidLevels> fuse_backward(FusionParams& params,
                                                 const FusionTrace& trace, const Tensor& d_fused,
                                                 bool need_input_grad) {
  const FusionConfig& cfg = params.config();
  Tensor d_concat;
  params.mix().backward(trace.concat, trace.mix_cols, d_fused, &d_concat);
  const int h = trace.concat.height, w = trace.concat.width;
  std::array<Tensor, kPyramidLevels> d_levels;
  for (int i = 0; i < kPyramidLevels; ++i) {
    Tensor d_proj(cfg.level_width, h, w);
    std::copy_n(d_concat.data.begin() + static_cast<std::ptrdiff_t>(i) * cfg.level_width * h * w, d_proj.size(),
                d_proj.data.begin());
    Tensor d_resized;
    params.projections()[i].backward(trace.resized[i], {}, d_proj, need_input_grad ? &d_resized : nullptr);
    if (need_input_grad) d_levels[i] = trace.resamplers[i].backward(d_resized);
  }
  return d_levels;
}

}  // namespace bckd
