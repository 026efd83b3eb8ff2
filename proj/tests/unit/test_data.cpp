// Copyright 2026 The bckd Authors
// SPDX-License-Identifier: Apache-2.0

#include "doctest.h"

#include "data.hpp"
#include "errors.hpp"
#include "png_io.hpp"

#include <filesystem>
#include <set>

using namespace bckd;

namespace {

LabelMask halves(int n) {
  LabelMask m(n, n, 0);
  for (int y = 0; y < n; ++y)
    for (int x = n / 2; x < n; ++x) m.at(y, x) = 1;
  return m;
}

std::set<std::uint8_t> labels_of(const LabelMask& m) { return {m.labels.begin(), m.labels.end()}; }

}  // namespace

TEST_SUITE("data") {
  TEST_CASE("empty scene is uniform background plus noise") {
    SceneSpec spec;
    spec.num_shapes = 0;
    spec.noise_std = 0.0;
    const Scene s = generate_scene(spec);
    CHECK(s.shapes.empty());
    for (auto v : s.mask.labels) CHECK(v == 0);
    for (double v : s.image.data) CHECK(v == s.image.data[0]);
    spec.noise_std = 0.05;
    const Scene noisy = generate_scene(spec);
    CHECK(noisy.image.data != s.image.data);
    for (double v : noisy.image.data) CHECK((v >= 0.0 && v <= 1.0));
  }

  TEST_CASE("scenes are deterministic in the seed") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      SceneSpec spec;
      spec.seed = seed;
      spec.num_shapes = 1 + seed % 5;
      const Scene a = generate_scene(spec), b = generate_scene(spec);
      CHECK(a.image.data == b.image.data);
      CHECK(a.mask.labels == b.mask.labels);
      spec.seed = seed + 1000;
      CHECK(generate_scene(spec).image.data != a.image.data);
    }
  }

  TEST_CASE("scene validation") {
    SceneSpec spec;
    spec.num_shapes = 6;
    CHECK_THROWS_AS(generate_scene(spec), Error);
    spec = SceneSpec{};
    spec.classes = 4;
    CHECK_THROWS_AS(generate_scene(spec), Error);
    spec = SceneSpec{};
    spec.image_size = 8;
    CHECK_THROWS_AS(generate_scene(spec), Error);
    spec = SceneSpec{};
    spec.noise_std = -0.1;
    CHECK_THROWS_AS(generate_scene(spec), Error);
  }

  TEST_CASE("circle of radius 10 rasterizes to the pixel-centre count") {
    Shape c;
    c.kind = ShapeKind::circle;
    c.cy = c.cx = 32.0;
    c.a = 10.0;
    LabelMask m(64, 64, 0);
    rasterize(c, 2, m);
    int count = 0;
    for (auto v : m.labels) count += v == 2;
    CHECK(count == 316);
    CHECK(std::abs(count - 314.159) <= 40);
  }

  TEST_CASE("rasterized shapes match their geometric definition") {
    Shape r;
    r.kind = ShapeKind::rectangle;
    r.cy = 10;
    r.cx = 20;
    r.a = 3;
    r.b = 5;
    LabelMask m(32, 32, 0);
    rasterize(r, 1, m);
    int count = 0;
    for (auto v : m.labels) count += v == 1;
    CHECK(count == 6 * 10);

    Shape t;
    t.kind = ShapeKind::triangle;
    t.tri = {0, 0, 0, 8, 8, 0};  // right triangle, legs of 8
    CHECK(covers(t, 1, 1));
    CHECK_FALSE(covers(t, 7, 7));

    Shape bar;
    bar.kind = ShapeKind::bar;
    bar.cy = bar.cx = 16;
    bar.a = 10;
    bar.b = 1;
    bar.angle = 0.0;
    CHECK(covers(bar, 16, 25));
    CHECK_FALSE(covers(bar, 18.5, 16));
    bar.angle = std::acos(-1.0) / 2;
    CHECK(covers(bar, 25, 16));
    CHECK_FALSE(covers(bar, 16, 25));
  }

  TEST_CASE("every drawn shape stays visible and labels come from the shape kinds") {
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
      SceneSpec spec;
      spec.seed = seed;
      spec.num_shapes = 5;
      const Scene s = generate_scene(spec);
      for (auto v : s.mask.labels) CHECK(v <= 4);
      for (const Shape& sh : s.shapes) {
        LabelMask alone(64, 64, 0);
        rasterize(sh, 1, alone);
        int own = 0;
        for (auto v : alone.labels) own += v;
        CHECK(own > 0);
      }
    }
  }

  TEST_CASE("without occlusion shapes do not overlap") {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      SceneSpec spec;
      spec.seed = seed;
      spec.num_shapes = 3;
      spec.occlusion = false;
      const Scene s = generate_scene(spec);
      LabelMask count(64, 64, 0);
      for (const Shape& sh : s.shapes)
        for (int y = 0; y < 64; ++y)
          for (int x = 0; x < 64; ++x) count.at(y, x) += covers(sh, y + 0.5, x + 0.5);
      int overlaps = 0;
      for (auto v : count.labels) overlaps += v > 1;
      // Placement retries are bounded, so a rare overlap is tolerated.
      CHECK(overlaps <= 64);
    }
  }

  TEST_CASE("every class appears in at least 5% of 1000 scenes") {
    std::array<int, 5> seen{};
    for (std::uint64_t seed = 0; seed < 1000; ++seed) {
      SceneSpec spec;
      spec.seed = seed;
      for (auto l : labels_of(generate_scene(spec).mask)) ++seen[l];
    }
    for (int c = 0; c < 5; ++c) CHECK(seen[c] >= 50);
  }

  TEST_CASE("boundary points from masks") {
    CHECK(boundary_points_from_mask(LabelMask(5, 5, 3)).empty());
    const BoundaryPointSet h = boundary_points_from_mask(halves(4));
    CHECK(h.size() == 8);
    for (const Pixel& p : h.points) CHECK((p.x == 1 || p.x == 2));
    LabelMask dot(5, 5, 0);
    dot.at(2, 2) = 1;
    const std::vector<Pixel> want = {{1, 2}, {2, 1}, {2, 2}, {2, 3}, {3, 2}};
    CHECK(boundary_points_from_mask(dot).points == want);
  }

  TEST_CASE("downsample mask majority vote") {
    LabelMask m(4, 4, 0);
    m.at(0, 0) = m.at(0, 1) = m.at(1, 0) = 2;  // 3 of 4 in block (0, 0)
    m.at(0, 2) = m.at(1, 3) = 1;               // tie 2 vs 2 in block (0, 1)
    m.at(2, 2) = m.at(2, 3) = m.at(3, 2) = m.at(3, 3) = kIgnoreLabel;
    const LabelMask d = downsample_mask(m, 2);
    CHECK(d.height == 2);
    CHECK(d.at(0, 0) == 2);
    CHECK(d.at(0, 1) == 0);
    CHECK(d.at(1, 0) == 0);
    CHECK(d.at(1, 1) == kIgnoreLabel);
    CHECK(downsample_mask(LabelMask(9, 9, 1), 8).height == 2);
    CHECK(downsample_mask(m, 1).labels == m.labels);
    CHECK_THROWS_AS(downsample_mask(m, 0), Error);
  }

  TEST_CASE("forced flip twice is the identity") {
    SceneSpec spec;
    spec.seed = 5;
    const Scene s = generate_scene(spec);
    Tensor img = s.image;
    LabelMask mask = s.mask;
    AugmentParams p;
    p.flip = true;
    apply_augment(img, mask, p);
    CHECK(img.data != s.image.data);
    CHECK(mask.at(10, 0) == s.mask.at(10, 63));
    apply_augment(img, mask, p);
    CHECK(img.data == s.image.data);
    CHECK(mask.labels == s.mask.labels);
  }

  TEST_CASE("augment draws stay in range") {
    int flips = 0;
    for (std::uint64_t seed = 0; seed < 10000; ++seed) {
      const AugmentParams p = draw_augment(seed, 64, 64);
      REQUIRE(p.scale >= 0.5);
      REQUIRE(p.scale <= 2.0);
      REQUIRE(p.brightness >= 0.75);
      REQUIRE(p.brightness <= 1.25);
      const double slack = 64 - 64 * p.scale;
      REQUIRE(p.offset_y >= std::min(0.0, slack));
      REQUIRE(p.offset_y <= std::max(0.0, slack));
      flips += p.flip;
    }
    CHECK(flips > 4700);
    CHECK(flips < 5300);
  }

  TEST_CASE("augment never invents labels and is deterministic") {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      SceneSpec spec;
      spec.seed = seed;
      const Scene s = generate_scene(spec);
      Tensor a = s.image, b = s.image;
      LabelMask ma = s.mask, mb = s.mask;
      augment(a, ma, seed * 31);
      augment(b, mb, seed * 31);
      CHECK(a.data == b.data);
      CHECK(ma.labels == mb.labels);
      const auto before = labels_of(s.mask);
      for (auto l : labels_of(ma)) CHECK(before.count(l) == 1);
      for (double v : a.data) CHECK((v >= 0.0 && v <= 1.0));
    }
  }

  TEST_CASE("scale 1 with zero offset only flips and rescales brightness") {
    SceneSpec spec;
    spec.seed = 9;
    const Scene s = generate_scene(spec);
    Tensor img = s.image;
    LabelMask mask = s.mask;
    AugmentParams p;
    p.brightness = 0.8;
    apply_augment(img, mask, p);
    CHECK(mask.labels == s.mask.labels);
    for (std::size_t i = 0; i < img.size(); ++i) CHECK(img.data[i] == doctest::Approx(s.image.data[i] * 0.8).epsilon(1e-15));
  }

  TEST_CASE("augmented masks align with re-rendered shapes") {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      SceneSpec spec;
      spec.seed = seed;
      const Scene s = generate_scene(spec);
      const AugmentParams p = draw_augment(seed + 77, 64, 64);
      Tensor img = s.image;
      LabelMask mask = s.mask;
      apply_augment(img, mask, p);
      // Re-render: map each output pixel centre back into scene coordinates.
      int agree = 0;
      for (int y = 0; y < 64; ++y)
        for (int x = 0; x < 64; ++x) {
          double sy = (y + 0.5 - p.offset_y) / p.scale, sx = (x + 0.5 - p.offset_x) / p.scale;
          sy = std::clamp(sy, 0.5, 63.5);
          sx = std::clamp(sx, 0.5, 63.5);
          if (p.flip) sx = 64.0 - sx;
          std::uint8_t label = 0;
          for (const Shape& sh : s.shapes)
            if (covers(sh, sy, sx)) label = static_cast<std::uint8_t>(sh.kind);
          agree += label == mask.at(y, x);
        }
      CHECK(agree >= 0.93 * 64 * 64);
    }
  }

  TEST_CASE("scene export writes the image and label PNGs") {
    SceneSpec spec;
    spec.seed = 3;
    const Scene s = generate_scene(spec);
    const auto dir = std::filesystem::temp_directory_path() / "bckd_export_test";
    std::filesystem::create_directories(dir);
    export_scene(s, 3, dir.string());
    const PngImage rgb = read_png((dir / "scene_3.png").string());
    const PngImage lab = read_png((dir / "scene_3_mask.png").string());
    CHECK(rgb.channels == 3);
    CHECK(rgb.pixels == image_to_rgb8(s.image));
    CHECK(lab.channels == 1);
    CHECK(lab.pixels == s.mask.labels);
    std::filesystem::remove_all(dir);
    CHECK_THROWS_AS(export_scene(s, 3, (dir / "missing" / "deeper").string()), Error);
  }
}
