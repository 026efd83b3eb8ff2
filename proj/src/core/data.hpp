// Copyright 2026 The bckd Authors
// SPDX-License-Identifier: Apache-2.0
//
// Seeded synthetic shapes. A scene is a flat background with up to five
// shapes (rectangles, circles, triangles, thin bars) drawn back to front; the
// label of a pixel is the class of the topmost shape covering its center.

#pragma once

#include "metrics.hpp"
#include "tensor.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace bckd {

enum class ShapeKind : std::uint8_t { rectangle = 1, circle = 2, triangle = 3, bar = 4 };

struct SceneSpec {
  std::uint64_t seed = 0;
  int image_size = 64;
  int num_shapes = 3;  // 0..5
  int classes = 5;     // background + 4 shape classes
  bool occlusion = true;
  double noise_std = 0.03;
};

void validate(const SceneSpec& spec);

struct Shape {
  ShapeKind kind = ShapeKind::rectangle;
  // rectangle: center (cy, cx), half extents (a, b) along y and x
  // circle:    center (cy, cx), radius a
  // bar:       center (cy, cx), half length a, half thickness b, angle
  // triangle:  vertices in tri as (y0, x0, y1, x1, y2, x2)
  double cy = 0.0, cx = 0.0, a = 0.0, b = 0.0, angle = 0.0;
  std::array<double, 6> tri{};
  std::array<double, 3> color{};
};

// Pixel (y, x) is covered when its center (y + 0.5, x + 0.5) lies inside.
bool covers(const Shape& shape, double py, double px);
// Paints label into every covered pixel of mask.
void rasterize(const Shape& shape, std::uint8_t label, LabelMask& mask);

struct Scene {
  Tensor image;  // [3 x H x W] in [0, 1]
  LabelMask mask;
  std::vector<Shape> shapes;  // back to front
};

Scene generate_scene(const SceneSpec& spec);

// 4-neighbour label changes.
BoundaryPointSet boundary_points_from_mask(const LabelMask& mask);

// Majority label of each stride x stride block (ties to the smaller label,
// ignore pixels skipped); output is ceil(H / stride) x ceil(W / stride).
LabelMask downsample_mask(const LabelMask& mask, int stride);

struct AugmentParams {
  bool flip = false;
  double brightness = 1.0;  // [0.75, 1.25]
  double scale = 1.0;       // [0.5, 2]
  double offset_y = 0.0;    // placement of the scaled image, output pixels
  double offset_x = 0.0;
};

AugmentParams draw_augment(std::uint64_t seed, int height, int width);

// Flip, then scale about the placement offset with border replication, then
// brightness. Image samples bilinearly; the mask takes the nearest label.
void apply_augment(Tensor& image, LabelMask& mask, const AugmentParams& params);

void augment(Tensor& image, LabelMask& mask, std::uint64_t seed);

// Writes scene_<seed>.png (RGB) and scene_<seed>_mask.png (label = gray value).
void export_scene(const Scene& scene, std::uint64_t seed, const std::string& dir);

std::vector<std::uint8_t> image_to_rgb8(const Tensor& image);

}  // namespace bckd
