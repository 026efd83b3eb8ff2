// Copyright 2026 The bckd Authors
// SPDX-License-Identifier: Apache-2.0

#include "layers.hpp"

#include "errors.hpp"

#include <cmath>
#include <numeric>

namespace bckd {

Param::Param(std::string n, std::vector<int> s) : name(std::move(n)), shape(std::move(s)) {
  std::size_t count = std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                                      [](std::size_t a, int b) { return a * static_cast<std::size_t>(b); });
  value.assign(count, 0.0);
  grad.assign(count, 0.0);
}

Resampler::Axis Resampler::make_axis(int in, int out) {
  Axis a;
  a.lo.resize(out);
  a.hi.resize(out);
  a.w_lo.resize(out);
  a.w_hi.resize(out);
  const double scale = static_cast<double>(in) / out;
  for (int o = 0; o < out; ++o) {
    double src = (o + 0.5) * scale - 0.5;
    if (src < 0.0) src = 0.0;
    int lo = static_cast<int>(src);
    if (lo > in - 1) lo = in - 1;
    int hi = lo < in - 1 ? lo + 1 : lo;
    double frac = src - lo;
    a.lo[o] = lo;
    a.hi[o] = hi;
    a.w_hi[o] = frac;
    a.w_lo[o] = 1.0 - frac;
  }
  return a;
}

Resampler::Resampler(int in_h, int in_w, int out_h, int out_w)
    : in_h_(in_h), in_w_(in_w), out_h_(out_h), out_w_(out_w) {
  require(in_h >= 1 && in_w >= 1 && out_h >= 1 && out_w >= 1, ErrorKind::domain, "resample: sizes must be >= 1");
  ay_ = make_axis(in_h, out_h);
  ax_ = make_axis(in_w, out_w);
}

Tensor Resampler::forward(const Tensor& x) const {
  Tensor y(x.channels, out_h_, out_w_);
  for (int c = 0; c < x.channels; ++c) {
    const double* src = x.data.data() + static_cast<std::size_t>(c) * in_h_ * in_w_;
    double* dst = y.data.data() + static_cast<std::size_t>(c) * out_h_ * out_w_;
    for (int oy = 0; oy < out_h_; ++oy) {
      const double* r0 = src + static_cast<std::size_t>(ay_.lo[oy]) * in_w_;
      const double* r1 = src + static_cast<std::size_t>(ay_.hi[oy]) * in_w_;
      const double wy0 = ay_.w_lo[oy], wy1 = ay_.w_hi[oy];
      for (int ox = 0; ox < out_w_; ++ox) {
        const int x0 = ax_.lo[ox], x1 = ax_.hi[ox];
        const double wx0 = ax_.w_lo[ox], wx1 = ax_.w_hi[ox];
        dst[oy * out_w_ + ox] = wy0 * (wx0 * r0[x0] + wx1 * r0[x1]) + wy1 * (wx0 * r1[x0] + wx1 * r1[x1]);
      }
    }
  }
  return y;
}

Tensor Resampler::backward(const Tensor& dy) const {
  Tensor dx(dy.channels, in_h_, in_w_);
  for (int c = 0; c < dy.channels; ++c) {
    double* dsrc = dx.data.data() + static_cast<std::size_t>(c) * in_h_ * in_w_;
    const double* g = dy.data.data() + static_cast<std::size_t>(c) * out_h_ * out_w_;
    for (int oy = 0; oy < out_h_; ++oy) {
      double* r0 = dsrc + static_cast<std::size_t>(ay_.lo[oy]) * in_w_;
      double* r1 = dsrc + static_cast<std::size_t>(ay_.hi[oy]) * in_w_;
      const double wy0 = ay_.w_lo[oy], wy1 = ay_.w_hi[oy];
      for (int ox = 0; ox < out_w_; ++ox) {
        const double v = g[oy * out_w_ + ox];
        const int x0 = ax_.lo[ox], x1 = ax_.hi[ox];
        const double wx0 = ax_.w_lo[ox], wx1 = ax_.w_hi[ox];
        r0[x0] += wy0 * wx0 * v;
        r0[x1] += wy0 * wx1 * v;
        r1[x0] += wy1 * wx0 * v;
        r1[x1] += wy1 * wx1 * v;
      }
    }
  }
  return dx;
}

Conv2d::Conv2d(const std::string& name, ConvShape shape)
    : shape_(shape),
      weight_(name + ".weight", {shape.out, shape.in, shape.kernel, shape.kernel}),
      bias_(name + ".bias", {shape.out}) {
  require(shape.in >= 1 && shape.out >= 1 && shape.kernel >= 1 && shape.stride >= 1 && shape.dilation >= 1,
          ErrorKind::config, "conv " + name + ": invalid shape");
}

void Conv2d::init_he(std::mt19937_64& rng) {
  const double fan_in = static_cast<double>(shape_.in) * shape_.kernel * shape_.kernel;
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
  for (double& w : weight_.value) w = dist(rng);
  std::fill(bias_.value.begin(), bias_.value.end(), 0.0);
}

void Conv2d::unfold(const Tensor& x, Buffer& cols) const {
  const int k = shape_.kernel;
  const int oh = out_h(x.height), ow = out_w(x.width);
  const std::size_t n = static_cast<std::size_t>(oh) * ow;
  cols.assign(static_cast<std::size_t>(shape_.in) * k * k * n, 0.0);
  for (int c = 0; c < shape_.in; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        double* row = cols.data() + ((static_cast<std::size_t>(c) * k + ky) * k + kx) * n;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * shape_.stride - shape_.pad + ky * shape_.dilation;
          if (iy < 0 || iy >= x.height) continue;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * shape_.stride - shape_.pad + kx * shape_.dilation;
            if (ix < 0 || ix >= x.width) continue;
            row[oy * ow + ox] = x.at(c, iy, ix);
          }
        }
      }
    }
  }
}

void Conv2d::fold(const Buffer& cols, Tensor& dx) const {
  const int k = shape_.kernel;
  const int oh = out_h(dx.height), ow = out_w(dx.width);
  const std::size_t n = static_cast<std::size_t>(oh) * ow;
  for (int c = 0; c < shape_.in; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const double* row = cols.data() + ((static_cast<std::size_t>(c) * k + ky) * k + kx) * n;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * shape_.stride - shape_.pad + ky * shape_.dilation;
          if (iy < 0 || iy >= dx.height) continue;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * shape_.stride - shape_.pad + kx * shape_.dilation;
            if (ix < 0 || ix >= dx.width) continue;
            dx.at(c, iy, ix) += row[oy * ow + ox];
          }
        }
      }
    }
  }
}

Tensor Conv2d::forward(const Tensor& x, Buffer* cols) const {
  require(x.channels == shape_.in, ErrorKind::domain, "conv " + weight_.name + ": input channel mismatch");
  const int oh = out_h(x.height), ow = out_w(x.width);
  require(oh >= 1 && ow >= 1, ErrorKind::domain, "conv " + weight_.name + ": input too small");
  Tensor y(shape_.out, oh, ow);
  const int kk = shape_.in * shape_.kernel * shape_.kernel;
  ConstMatrixMap w(weight_.value.data(), shape_.out, kk);
  auto out = y.matrix();
  if (pointwise()) {
    out.noalias() = w * x.matrix();
  } else {
    Buffer local;
    Buffer& buf = cols ? *cols : local;
    unfold(x, buf);
    out.noalias() = w * ConstMatrixMap(buf.data(), kk, static_cast<Eigen::Index>(oh) * ow);
  }
  for (int c = 0; c < shape_.out; ++c) out.row(c).array() += bias_.value[c];
  return y;
}

void Conv2d::backward(const Tensor& x, const Buffer& cols, const Tensor& dy, Tensor* dx) {
  const int kk = shape_.in * shape_.kernel * shape_.kernel;
  const Eigen::Index n = static_cast<Eigen::Index>(dy.plane());
  ConstMatrixMap w(weight_.value.data(), shape_.out, kk);
  MatrixMap dw(weight_.grad.data(), shape_.out, kk);
  auto g = dy.matrix();
  if (pointwise()) {
    dw.noalias() += g * x.matrix().transpose();
  } else {
    dw.noalias() += g * ConstMatrixMap(cols.data(), kk, n).transpose();
  }
  for (int c = 0; c < shape_.out; ++c) bias_.grad[c] += g.row(c).sum();
  if (!dx) return;
  if (dx->empty()) *dx = Tensor(x.channels, x.height, x.width);
  if (pointwise()) {
    dx->matrix().noalias() += w.transpose() * g;
  } else {
    Buffer dcols(static_cast<std::size_t>(kk) * n);
    MatrixMap(dcols.data(), kk, n).noalias() = w.transpose() * g;
    fold(dcols, *dx);
  }
}

}  // namespace bckd
