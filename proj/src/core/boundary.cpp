// Copyright 2026 The bckd Authors
// SPDX-License-Identifier: Apache-2.0

#include "boundary.hpp"

#include "errors.hpp"
#include "png_io.hpp"
#include "softmax.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace bckd {

namespace {

double sigmoid(double z) {
  if (z >= 0.0) {
    const double e = std::exp(-z);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(z);
  return e / (1.0 + e);
}

struct Offset {
  int dy, dx;
  std::vector<Pixel> path;  // relative line from (0,0) to (dy,dx)
};

std::vector<Offset> neighbour_offsets(int radius) {
  std::vector<Offset> out;
  const int r2 = radius * radius;
  for (int dy = -radius; dy <= radius; ++dy) {
    for (int dx = -radius; dx <= radius; ++dx) {
      const int d2 = dy * dy + dx * dx;
      if (d2 == 0 || d2 > r2) continue;
      out.push_back({dy, dx, bresenham_line({0, 0}, {dy, dx})});
    }
  }
  return out;
}

}  // namespace

void validate(const BoundaryConfig& cfg) {
  require(cfg.neighborhood_radius >= 1, ErrorKind::config, "boundary: neighborhood_radius must be >= 1");
  require(cfg.softness > 0.0 && std::isfinite(cfg.softness), ErrorKind::config, "boundary: softness must be > 0");
  require(std::isfinite(cfg.similarity_threshold), ErrorKind::config, "boundary: threshold must be finite");
}

ScalarProjection::ScalarProjection(const std::string& prefix, int fused_width)
    : conv_(prefix + ".scalar", ConvShape{fused_width, 1, 1, 1, 0, 1}) {}

void ScalarProjection::init(std::mt19937_64& rng) { conv_.init_he(rng); }

Grid project_scalar(const FusedFeatureMap& fused, const ScalarProjection& proj) {
  require(fused.data.channels == proj.fused_width(), ErrorKind::domain,
          "project_scalar: fused width does not match projection");
  Tensor out = proj.conv().forward(fused.data);
  Grid g(out.height, out.width);
  g.data = std::move(out.data);
  return g;
}

Tensor project_scalar_backward(const FusedFeatureMap& fused, ScalarProjection& proj, const Grid& d_field) {
  Tensor dy(1, d_field.height, d_field.width);
  dy.data = d_field.data;
  Tensor dx;
  proj.conv().backward(fused.data, {}, dy, &dx);
  return dx;
}

std::vector<Pixel> bresenham_line(Pixel a, Pixel b) {
  std::vector<Pixel> out;
  int x0 = a.x, y0 = a.y;
  const int dx = std::abs(b.x - a.x), sx = a.x < b.x ? 1 : -1;
  const int dy = -std::abs(b.y - a.y), sy = a.y < b.y ? 1 : -1;
  int err = dx + dy;
  while (true) {
    out.push_back({y0, x0});
    if (x0 == b.x && y0 == b.y) break;
    const int e2 = 2 * err;
    if (e2 >= dy) {
      err += dy;
      x0 += sx;
    }
    if (e2 <= dx) {
      err += dx;
      y0 += sy;
    }
  }
  return out;
}

double pair_similarity(double a, double b, const BoundaryConfig& cfg) {
  const double s = sigmoid((cfg.similarity_threshold - std::abs(a - b)) / cfg.softness);
  if (cfg.mode == BoundaryMode::hard) return s >= 0.5 ? 1.0 : 0.0;
  return s;
}

double path_affinity(const Grid& field, Pixel i, Pixel j, const BoundaryConfig& cfg) {
  validate(cfg);
  require(field.in_bounds(i.y, i.x) && field.in_bounds(j.y, j.x), ErrorKind::domain,
          "path_affinity: pixel out of bounds");
  const int d2 = (i.y - j.y) * (i.y - j.y) + (i.x - j.x) * (i.x - j.x);
  require(d2 <= cfg.neighborhood_radius * cfg.neighborhood_radius, ErrorKind::domain,
          "path_affinity: pixels further apart than the neighbourhood radius");
  if (i == j) return 1.0;
  const auto line = bresenham_line(i, j);
  double aff = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k + 1 < line.size(); ++k) {
    aff = std::min(aff, pair_similarity(field.at(line[k].y, line[k].x), field.at(line[k + 1].y, line[k + 1].x), cfg));
  }
  return aff;
}

BoundaryMap boundary_map(const Grid& field, const BoundaryConfig& cfg, BoundaryTrace* trace) {
  validate(cfg);
  for (double v : field.data)
    require(std::isfinite(v), ErrorKind::data_integrity, "boundary_map: non-finite field value");
  const auto offsets = neighbour_offsets(cfg.neighborhood_radius);
  BoundaryMap out{Grid(field.height, field.width), cfg.mode};
  if (trace) {
    trace->p.assign(field.size(), -1);
    trace->q.assign(field.size(), -1);
  }
  for (int y = 0; y < field.height; ++y) {
    for (int x = 0; x < field.width; ++x) {
      double best = -1.0;
      int best_p = -1, best_q = -1;
      for (const Offset& off : offsets) {
        if (!field.in_bounds(y + off.dy, x + off.dx)) continue;
        double aff = std::numeric_limits<double>::infinity();
        int arg_p = -1, arg_q = -1;
        for (std::size_t k = 0; k + 1 < off.path.size(); ++k) {
          const int pi = (y + off.path[k].y) * field.width + (x + off.path[k].x);
          const int qi = (y + off.path[k + 1].y) * field.width + (x + off.path[k + 1].x);
          const double s = pair_similarity(field.data[pi], field.data[qi], cfg);
          if (s < aff) {
            aff = s;
            arg_p = pi;
            arg_q = qi;
          }
        }
        const double score = 1.0 - aff;
        if (score > best) {
          best = score;
          best_p = arg_p;
          best_q = arg_q;
        }
      }
      const int idx = y * field.width + x;
      out.scores.data[idx] = best < 0.0 ? 0.0 : best;
      if (trace) {
        trace->p[idx] = best_p;
        trace->q[idx] = best_q;
      }
    }
  }
  return out;
}

Grid boundary_map_backward(const Grid& field, const BoundaryConfig& cfg, const BoundaryTrace& trace,
                           const Grid& d_scores) {
  require(cfg.mode == BoundaryMode::soft, ErrorKind::domain, "boundary_map_backward: hard mode has no gradient");
  Grid d_field(field.height, field.width);
  for (std::size_t i = 0; i < d_scores.size(); ++i) {
    const int p = trace.p[i], q = trace.q[i];
    if (p < 0) continue;
    const double delta = field.data[p] - field.data[q];
    const double s = sigmoid((cfg.similarity_threshold - std::abs(delta)) / cfg.softness);
    const double sign = delta > 0.0 ? 1.0 : (delta < 0.0 ? -1.0 : 0.0);
    // score = 1 - s, ds/d(delta) = -s(1-s) sign / gamma
    const double g = d_scores.data[i] * s * (1.0 - s) * sign / cfg.softness;
    d_field.data[p] += g;
    d_field.data[q] -= g;
  }
  return d_field;
}

double boundary_loss(const BoundaryMap& teacher, const BoundaryMap& student, double tau, Grid* d_student) {
  require(tau > 0.0 && std::isfinite(tau), ErrorKind::domain, "boundary_loss: tau must be > 0");
  require(teacher.scores.height == student.scores.height && teacher.scores.width == student.scores.width,
          ErrorKind::domain, "boundary_loss: shape mismatch");
  require(teacher.mode == BoundaryMode::soft && student.mode == BoundaryMode::soft, ErrorKind::domain,
          "boundary_loss: both maps must be soft");
  const std::size_t n = teacher.scores.size();
  require(n > 0, ErrorKind::domain, "boundary_loss: empty maps");

  const auto& t = teacher.scores.data;
  const auto& s = student.scores.data;
  std::vector<double> lp(n), lq(n);
  log_softmax(t.data(), n, tau, lp.data());
  log_softmax(s.data(), n, tau, lq.data());
  double ce = 0.0;
  for (std::size_t i = 0; i < n; ++i) ce -= std::exp(lp[i]) * lq[i];
  const double loss = tau * tau * ce / static_cast<double>(n);
  if (d_student) {
    *d_student = Grid(student.scores.height, student.scores.width);
    softmax_gap(t.data(), s.data(), lp.data(), n, tau, d_student->data.data());
    for (double& g : d_student->data) g *= tau / static_cast<double>(n);
  }
  return loss;
}

std::vector<Pixel> boundary_pixels(const BoundaryMap& map, double threshold) {
  std::vector<Pixel> out;
  for (int y = 0; y < map.scores.height; ++y)
    for (int x = 0; x < map.scores.width; ++x)
      if (map.scores.at(y, x) >= threshold) out.push_back({y, x});
  return out;
}

void write_boundary_png(const BoundaryMap& map, const std::string& path) {
  std::vector<std::uint8_t> px(map.scores.size());
  for (std::size_t i = 0; i < px.size(); ++i) {
    const double v = std::clamp(map.scores.data[i], 0.0, 1.0);
    px[i] = static_cast<std::uint8_t>(std::lround(v * 255.0));
  }
  write_png(path, map.scores.width, map.scores.height, 1, px);
}

}  // namespace bckd
