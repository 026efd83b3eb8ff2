// Copyright 2026 The bckd Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace bckd {

// Storage aligned for the widest packet, so vectorised reductions split their
// work identically on every run.
using Buffer = std::vector<double, Eigen::aligned_allocator<double>>;

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

// Dense [channels x height x width] tensor, channel-major then row-major.
struct Tensor {
  int channels = 0;
  int height = 0;
  int width = 0;
  Buffer data;

  Tensor() = default;
  Tensor(int c, int h, int w, double fill = 0.0)
      : channels(c), height(h), width(w), data(static_cast<std::size_t>(c) * h * w, fill) {}

  std::size_t size() const { return data.size(); }
  int plane() const { return height * width; }
  bool empty() const { return data.empty(); }

  double& at(int c, int y, int x) { return data[(static_cast<std::size_t>(c) * height + y) * width + x]; }
  double at(int c, int y, int x) const { return data[(static_cast<std::size_t>(c) * height + y) * width + x]; }

  std::span<double> channel(int c) { return {data.data() + static_cast<std::size_t>(c) * plane(), static_cast<std::size_t>(plane())}; }
  std::span<const double> channel(int c) const {
    return {data.data() + static_cast<std::size_t>(c) * plane(), static_cast<std::size_t>(plane())};
  }

  // channels x (height*width) view
  MatrixMap matrix() { return MatrixMap(data.data(), channels, plane()); }
  ConstMatrixMap matrix() const { return ConstMatrixMap(data.data(), channels, plane()); }

  bool same_shape(const Tensor& o) const { return channels == o.channels && height == o.height && width == o.width; }

  bool all_finite() const {
    for (double v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }

  void fill(double v) { std::fill(data.begin(), data.end(), v); }
};

// Real-valued [height x width] grid (scalar fields, boundary scores).
struct Grid {
  int height = 0;
  int width = 0;
  Buffer data;

  Grid() = default;
  Grid(int h, int w, double fill = 0.0) : height(h), width(w), data(static_cast<std::size_t>(h) * w, fill) {}

  std::size_t size() const { return data.size(); }
  double& at(int y, int x) { return data[static_cast<std::size_t>(y) * width + x]; }
  double at(int y, int x) const { return data[static_cast<std::size_t>(y) * width + x]; }
  bool in_bounds(int y, int x) const { return y >= 0 && y < height && x >= 0 && x < width; }
};

struct Pixel {
  int y = 0;
  int x = 0;
  friend bool operator==(const Pixel&, const Pixel&) = default;
  friend auto operator<=>(const Pixel&, const Pixel&) = default;
};

}  // namespace bckd
