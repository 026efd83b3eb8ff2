// Copyright 2026 The bckd Authors
// SPDX-License-Identifier: Apache-2.0
//
// Differentiable building blocks shared by the backbone, the fusion branch and
// the heads. Every layer exposes an explicit forward and a backward that
// accumulates parameter gradients.

#pragma once

#include "tensor.hpp"

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace bckd {

struct Param {
  std::string name;
  std::vector<int> shape;
  Buffer value;
  Buffer grad;

  Param() = default;
  Param(std::string n, std::vector<int> s);

  std::size_t size() const { return value.size(); }
  void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }
};

// Bilinear resampling with half-pixel centers and no corner alignment; edge
// samples clamp to the border.
class Resampler {
 public:
  Resampler() = default;
  Resampler(int in_h, int in_w, int out_h, int out_w);

  int in_h() const { return in_h_; }
  int in_w() const { return in_w_; }
  int out_h() const { return out_h_; }
  int out_w() const { return out_w_; }

  Tensor forward(const Tensor& x) const;
  // Adjoint of forward: scatters output gradients back to the input grid.
  Tensor backward(const Tensor& dy) const;

 private:
  struct Axis {
    std::vector<int> lo, hi;
    std::vector<double> w_lo, w_hi;
  };
  static Axis make_axis(int in, int out);

  int in_h_ = 0, in_w_ = 0, out_h_ = 0, out_w_ = 0;
  Axis ay_, ax_;
};

struct ConvShape {
  int in = 1;
  int out = 1;
  int kernel = 3;
  int stride = 1;
  int pad = 1;
  int dilation = 1;
};

class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(const std::string& name, ConvShape shape);

  const ConvShape& shape() const { return shape_; }
  Param& weight() { return weight_; }
  Param& bias() { return bias_; }
  const Param& weight() const { return weight_; }
  const Param& bias() const { return bias_; }

  int out_h(int h) const { return (h + 2 * shape_.pad - shape_.dilation * (shape_.kernel - 1) - 1) / shape_.stride + 1; }
  int out_w(int w) const { return (w + 2 * shape_.pad - shape_.dilation * (shape_.kernel - 1) - 1) / shape_.stride + 1; }

  // cols receives the unfolded input when non-null; backward needs it.
  Tensor forward(const Tensor& x, Buffer* cols = nullptr) const;
  // Accumulates weight/bias gradients; writes the input gradient when dx is non-null.
  void backward(const Tensor& x, const Buffer& cols, const Tensor& dy, Tensor* dx);

  std::uint64_t macs(int h, int w) const {
    return static_cast<std::uint64_t>(out_h(h)) * out_w(w) * shape_.out * shape_.in * shape_.kernel * shape_.kernel;
  }

  void init_he(std::mt19937_64& rng);

 private:
  bool pointwise() const { return shape_.kernel == 1 && shape_.stride == 1 && shape_.pad == 0; }
  void unfold(const Tensor& x, Buffer& cols) const;
  void fold(const Buffer& cols, Tensor& dx) const;

  ConvShape shape_;
  Param weight_;
  Param bias_;
};

inline void relu_inplace(Tensor& t) {
  for (double& v : t.data) v = v > 0.0 ? v : 0.0;
}

// dy <- dy * [y > 0], y being the post-activation output.
inline void relu_backward_inplace(const Tensor& y, Tensor& dy) {
  for (std::size_t i = 0; i < dy.data.size(); ++i)
    if (y.data[i] <= 0.0) dy.data[i] = 0.0;
}

}  // namespace bckd
