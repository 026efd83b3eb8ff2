// Copyright 2026 The bckd Authors
// SPDX-License-Identifier: Apache-2.0

#include "data.hpp"

#include "errors.hpp"
#include "png_io.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace bckd {

namespace {

// Per-class base colors; fill colors jitter around them.
constexpr std::array<std::array<double, 3>, 4> kPalette = {{
    {0.85, 0.25, 0.20},
    {0.25, 0.75, 0.30},
    {0.25, 0.35, 0.85},
    {0.85, 0.80, 0.20},
}};
constexpr double kColorJitter = 0.12;
constexpr int kMinVisible = 10;
constexpr int kMaxRedraws = 64;

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

Shape draw_shape(std::mt19937_64& rng, ShapeKind kind, double size) {
  const double k = size / 64.0;
  Shape s;
  s.kind = kind;
  s.cy = uniform(rng, 8.0 * k, size - 8.0 * k);
  s.cx = uniform(rng, 8.0 * k, size - 8.0 * k);
  switch (kind) {
    case ShapeKind::rectangle:
      s.a = uniform(rng, 5.0, 14.0) * k;
      s.b = uniform(rng, 5.0, 14.0) * k;
      break;
    case ShapeKind::circle:
      s.a = uniform(rng, 5.0, 13.0) * k;
      break;
    case ShapeKind::bar:
      s.a = uniform(rng, 12.0, 26.0) * k;
      s.b = uniform(rng, 1.2, 2.2) * k;
      s.angle = uniform(rng, 0.0, std::numbers::pi);
      break;
    case ShapeKind::triangle: {
      const double base = uniform(rng, 0.0, 2.0 * std::numbers::pi);
      for (int v = 0; v < 3; ++v) {
        const double ang = base + v * 2.0 * std::numbers::pi / 3.0 + uniform(rng, -0.5, 0.5);
        const double rad = uniform(rng, 8.0, 15.0) * k;
        s.tri[2 * v] = s.cy + rad * std::sin(ang);
        s.tri[2 * v + 1] = s.cx + rad * std::cos(ang);
      }
      break;
    }
  }
  const int palette = static_cast<int>(kind) - 1;
  for (int c = 0; c < 3; ++c) {
    s.color[c] = std::clamp(kPalette[palette][c] + uniform(rng, -kColorJitter, kColorJitter), 0.0, 1.0);
  }
  return s;
}

double edge(double ay, double ax, double by, double bx, double py, double px) {
  return (bx - ax) * (py - ay) - (by - ay) * (px - ax);
}

}  // namespace

void validate(const SceneSpec& spec) {
  require(spec.image_size >= 16, ErrorKind::config, "scene: image_size must be at least 16");
  require(spec.num_shapes >= 0 && spec.num_shapes <= 5, ErrorKind::config, "scene: num_shapes must be in [0, 5]");
  require(spec.classes == 5, ErrorKind::config, "scene: the generator draws exactly 4 shape classes plus background");
  require(spec.noise_std >= 0.0 && std::isfinite(spec.noise_std), ErrorKind::config, "scene: noise_std must be >= 0");
}

bool covers(const Shape& s, double py, double px) {
  switch (s.kind) {
    case ShapeKind::rectangle:
      return std::abs(py - s.cy) <= s.a && std::abs(px - s.cx) <= s.b;
    case ShapeKind::circle: {
      const double dy = py - s.cy, dx = px - s.cx;
      return dy * dy + dx * dx <= s.a * s.a;
    }
    case ShapeKind::bar: {
      // Rotated frame: u along the bar, v across it.
      const double dy = py - s.cy, dx = px - s.cx;
      const double u = dx * std::cos(s.angle) + dy * std::sin(s.angle);
      const double v = -dx * std::sin(s.angle) + dy * std::cos(s.angle);
      return std::abs(u) <= s.a && std::abs(v) <= s.b;
    }
    case ShapeKind::triangle: {
      const auto& t = s.tri;
      const double e0 = edge(t[0], t[1], t[2], t[3], py, px);
      const double e1 = edge(t[2], t[3], t[4], t[5], py, px);
      const double e2 = edge(t[4], t[5], t[0], t[1], py, px);
      return (e0 >= 0 && e1 >= 0 && e2 >= 0) || (e0 <= 0 && e1 <= 0 && e2 <= 0);
    }
  }
  return false;
}

void rasterize(const Shape& shape, std::uint8_t label, LabelMask& mask) {
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x)
      if (covers(shape, y + 0.5, x + 0.5)) mask.at(y, x) = label;
}

Scene generate_scene(const SceneSpec& spec) {
  validate(spec);
  const int n = spec.image_size;
  std::mt19937_64 rng(spec.seed * 0x9E3779B97F4A7C15ULL + 0x51ED270B);

  Scene scene;
  const double background = uniform(rng, 0.35, 0.6);

  // Re-draw the whole layout when some shape would end up (almost) hidden.
  LabelMask owner;
  for (int attempt = 0; attempt < kMaxRedraws; ++attempt) {
    scene.shapes.clear();
    owner = LabelMask(n, n, kIgnoreLabel);
    for (int k = 0; k < spec.num_shapes; ++k) {
      const auto kind = static_cast<ShapeKind>(1 + rng() % 4);
      Shape s = draw_shape(rng, kind, n);
      if (!spec.occlusion) {
        // Retry placement until the new shape does not touch earlier ones.
        for (int tries = 0; tries < kMaxRedraws; ++tries) {
          bool clash = false;
          for (int y = 0; y < n && !clash; ++y)
            for (int x = 0; x < n && !clash; ++x)
              clash = owner.at(y, x) != kIgnoreLabel && covers(s, y + 0.5, x + 0.5);
          if (!clash) break;
          s = draw_shape(rng, kind, n);
        }
      }
      rasterize(s, static_cast<std::uint8_t>(k), owner);
      scene.shapes.push_back(s);
    }
    std::vector<int> visible(scene.shapes.size(), 0);
    for (auto v : owner.labels)
      if (v != kIgnoreLabel) ++visible[v];
    if (std::all_of(visible.begin(), visible.end(), [](int c) { return c >= kMinVisible; })) break;
  }

  scene.mask = LabelMask(n, n, 0);
  scene.image = Tensor(3, n, n, background);
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      const auto k = owner.at(y, x);
      if (k == kIgnoreLabel) continue;
      const Shape& s = scene.shapes[k];
      scene.mask.at(y, x) = static_cast<std::uint8_t>(s.kind);
      for (int c = 0; c < 3; ++c) scene.image.at(c, y, x) = s.color[c];
    }
  }
  if (spec.noise_std > 0.0) {
    std::normal_distribution<double> noise(0.0, spec.noise_std);
    for (double& v : scene.image.data) v = std::clamp(v + noise(rng), 0.0, 1.0);
  }
  return scene;
}

BoundaryPointSet boundary_points_from_mask(const LabelMask& mask) {
  std::vector<Pixel> pts;
  constexpr int dy[4] = {-1, 1, 0, 0};
  constexpr int dx[4] = {0, 0, -1, 1};
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      for (int k = 0; k < 4; ++k) {
        const int ny = y + dy[k], nx = x + dx[k];
        if (mask.in_bounds(ny, nx) && mask.at(ny, nx) != mask.at(y, x)) {
          pts.push_back({y, x});
          break;
        }
      }
    }
  }
  return BoundaryPointSet(std::move(pts));
}

LabelMask downsample_mask(const LabelMask& mask, int stride) {
  require(stride >= 1, ErrorKind::domain, "downsample_mask: stride must be positive");
  const int gh = (mask.height + stride - 1) / stride;
  const int gw = (mask.width + stride - 1) / stride;
  LabelMask out(gh, gw, kIgnoreLabel);
  std::array<int, 256> votes{};
  for (int gy = 0; gy < gh; ++gy) {
    for (int gx = 0; gx < gw; ++gx) {
      votes.fill(0);
      for (int y = gy * stride; y < std::min(mask.height, (gy + 1) * stride); ++y)
        for (int x = gx * stride; x < std::min(mask.width, (gx + 1) * stride); ++x) ++votes[mask.at(y, x)];
      int best = -1;
      for (int l = 0; l < 255; ++l)
        if (votes[l] > 0 && (best < 0 || votes[l] > votes[best])) best = l;
      if (best >= 0) out.at(gy, gx) = static_cast<std::uint8_t>(best);
    }
  }
  return out;
}

AugmentParams draw_augment(std::uint64_t seed, int height, int width) {
  std::mt19937_64 rng(seed * 0xD1B54A32D192ED03ULL + 0xA5A5);
  AugmentParams p;
  p.flip = uniform(rng, 0.0, 1.0) < 0.5;
  p.brightness = uniform(rng, 0.75, 1.25);
  p.scale = uniform(rng, 0.5, 2.0);
  auto offset = [&](int extent) {
    const double slack = extent - extent * p.scale;
    return slack == 0.0 ? 0.0 : uniform(rng, std::min(0.0, slack), std::max(0.0, slack));
  };
  p.offset_y = offset(height);
  p.offset_x = offset(width);
  return p;
}

void apply_augment(Tensor& image, LabelMask& mask, const AugmentParams& p) {
  require(image.height == mask.height && image.width == mask.width, ErrorKind::domain,
          "augment: image and mask sizes differ");
  require(p.scale > 0.0, ErrorKind::domain, "augment: scale must be positive");
  const int h = image.height, w = image.width;
  if (p.flip) {
    for (int c = 0; c < image.channels; ++c)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w / 2; ++x) std::swap(image.at(c, y, x), image.at(c, y, w - 1 - x));
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w / 2; ++x) std::swap(mask.at(y, x), mask.at(y, w - 1 - x));
  }
  if (p.scale != 1.0 || p.offset_y != 0.0 || p.offset_x != 0.0) {
    Tensor img(image.channels, h, w);
    LabelMask lab(h, w);
    for (int y = 0; y < h; ++y) {
      const double u = (y + 0.5 - p.offset_y) / p.scale;
      const int ny = std::clamp(static_cast<int>(std::floor(u)), 0, h - 1);
      const double fy = std::clamp(u - 0.5, 0.0, h - 1.0);
      const int y0 = static_cast<int>(fy);
      const int y1 = std::min(y0 + 1, h - 1);
      const double wy = fy - y0;
      for (int x = 0; x < w; ++x) {
        const double v = (x + 0.5 - p.offset_x) / p.scale;
        const int nx = std::clamp(static_cast<int>(std::floor(v)), 0, w - 1);
        const double fx = std::clamp(v - 0.5, 0.0, w - 1.0);
        const int x0 = static_cast<int>(fx);
        const int x1 = std::min(x0 + 1, w - 1);
        const double wx = fx - x0;
        lab.at(y, x) = mask.at(ny, nx);
        for (int c = 0; c < image.channels; ++c) {
          img.at(c, y, x) = (1 - wy) * ((1 - wx) * image.at(c, y0, x0) + wx * image.at(c, y0, x1)) +
                            wy * ((1 - wx) * image.at(c, y1, x0) + wx * image.at(c, y1, x1));
        }
      }
    }
    image = std::move(img);
    mask = std::move(lab);
  }
  if (p.brightness != 1.0) {
    for (double& v : image.data) v = std::clamp(v * p.brightness, 0.0, 1.0);
  }
}

void augment(Tensor& image, LabelMask& mask, std::uint64_t seed) {
  apply_augment(image, mask, draw_augment(seed, image.height, image.width));
}

std::vector<std::uint8_t> image_to_rgb8(const Tensor& image) {
  require(image.channels == 3, ErrorKind::domain, "image_to_rgb8: expected 3 channels");
  std::vector<std::uint8_t> px(static_cast<std::size_t>(image.plane()) * 3);
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x)
      for (int c = 0; c < 3; ++c)
        px[(static_cast<std::size_t>(y) * image.width + x) * 3 + c] =
            static_cast<std::uint8_t>(std::lround(std::clamp(image.at(c, y, x), 0.0, 1.0) * 255.0));
  return px;
}

void export_scene(const Scene& scene, std::uint64_t seed, const std::string& dir) {
  const std::string stem = dir + "/scene_" + std::to_string(seed);
  write_png(stem + ".png", scene.image.width, scene.image.height, 3, image_to_rgb8(scene.image));
  write_png(stem + "_mask.png", scene.mask.width, scene.mask.height, 1, scene.mask.labels);
}

}  // namespace bckd
