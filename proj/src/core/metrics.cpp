// Copyright 2026 The bckd Authors
// SPDX-License-Identifier: Apache-2.0

#include "metrics.hpp"

#include "errors.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace bckd {

ConfusionMatrix::ConfusionMatrix(int num_classes)
    : classes_(num_classes), counts_(static_cast<std::size_t>(num_classes) * num_classes, 0) {
  require(num_classes >= 1 && num_classes < kIgnoreLabel, ErrorKind::domain, "miou: invalid class count");
}

void ConfusionMatrix::add(const LabelMask& pred, const LabelMask& gt) {
  require(pred.height == gt.height && pred.width == gt.width && pred.labels.size() == gt.labels.size(),
          ErrorKind::domain, "miou: prediction and ground truth shapes differ");
  for (std::size_t i = 0; i < gt.labels.size(); ++i) {
    const int g = gt.labels[i], p = pred.labels[i];
    if (g == kIgnoreLabel || p == kIgnoreLabel) continue;
    require(g < classes_ && p < classes_, ErrorKind::domain, "miou: label outside [0, num_classes)");
    ++counts_[static_cast<std::size_t>(g) * classes_ + p];
    ++evaluated_;
  }
}

std::vector<double> ConfusionMatrix::class_iou() const {
  std::vector<double> iou(classes_, std::numeric_limits<double>::quiet_NaN());
  for (int c = 0; c < classes_; ++c) {
    std::uint64_t inter = counts_[static_cast<std::size_t>(c) * classes_ + c];
    std::uint64_t gt_total = 0, pred_total = 0;
    for (int k = 0; k < classes_; ++k) {
      gt_total += counts_[static_cast<std::size_t>(c) * classes_ + k];
      pred_total += counts_[static_cast<std::size_t>(k) * classes_ + c];
    }
    const std::uint64_t uni = gt_total + pred_total - inter;
    if (uni > 0) iou[c] = static_cast<double>(inter) / static_cast<double>(uni);
  }
  return iou;
}

double ConfusionMatrix::miou() const {
  require(evaluated_ > 0, ErrorKind::domain, "miou: no evaluable pixels");
  double sum = 0.0;
  int present = 0;
  for (double v : class_iou()) {
    if (std::isnan(v)) continue;
    sum += v;
    ++present;
  }
  return sum / present;
}

double miou(const LabelMask& pred, const LabelMask& gt, int num_classes) {
  ConfusionMatrix cm(num_classes);
  cm.add(pred, gt);
  return cm.miou();
}

double lipschitz_estimate(const TensorFn& f, const Tensor& x, const MfsConfig& cfg) {
  require(cfg.epsilon > 0.0 && cfg.num_directions >= 1 && cfg.num_probes >= 1, ErrorKind::domain,
          "lipschitz_estimate: invalid sampling configuration");
  const std::size_t n = x.size();
  auto checked = [&f](const Tensor& in) {
    Tensor out = f(in);
    require(out.all_finite(), ErrorKind::data_integrity, "lipschitz_estimate: feature function returned non-finite values");
    return out;
  };
  // Random vector with norm uniform in (0, epsilon].
  auto draw = [&](std::uint64_t probe, std::uint64_t k) {
    std::seed_seq seq{cfg.seed, probe, k};
    std::mt19937_64 rng(seq);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    std::vector<double> v(n);
    double norm2 = 0.0;
    for (double& e : v) {
      e = normal(rng);
      norm2 += e * e;
    }
    const double scale = cfg.epsilon * (1.0 - uni(rng)) / std::sqrt(norm2);
    for (double& e : v) e *= scale;
    return v;
  };

  double best = 0.0;
  for (int p = 0; p < cfg.num_probes; ++p) {
    Tensor base = x;
    if (p > 0) {
      const auto offset = draw(static_cast<std::uint64_t>(p), std::numeric_limits<std::uint64_t>::max());
      for (std::size_t i = 0; i < n; ++i) base.data[i] += offset[i];
    }
    const Tensor f0 = checked(base);
    for (int k = 0; k < cfg.num_directions; ++k) {
      const auto delta = draw(static_cast<std::uint64_t>(p), static_cast<std::uint64_t>(k));
      Tensor moved = base;
      double dnorm2 = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        moved.data[i] += delta[i];
        dnorm2 += delta[i] * delta[i];
      }
      const Tensor f1 = checked(moved);
      require(f1.size() == f0.size(), ErrorKind::data_integrity, "lipschitz_estimate: output size changed");
      double num2 = 0.0;
      for (std::size_t i = 0; i < f0.size(); ++i) num2 += (f1.data[i] - f0.data[i]) * (f1.data[i] - f0.data[i]);
      best = std::max(best, std::sqrt(num2) / std::sqrt(dnorm2));
    }
  }
  return best;
}

double mfs_rho(double l_teacher, double l_student, const MfsConfig& cfg) {
  require(l_teacher >= 0.0 && l_student >= 0.0, ErrorKind::domain, "mfs_rho: Lipschitz constants must be >= 0");
  if (l_teacher > cfg.floor_threshold) return l_student / l_teacher;
  return 1.0;
}

BoundaryPointSet::BoundaryPointSet(std::vector<Pixel> pts) : points(std::move(pts)) {
  std::sort(points.begin(), points.end());
  points.erase(std::unique(points.begin(), points.end()), points.end());
}

BoundaryPointSet translate(const BoundaryPointSet& set, int dy, int dx) {
  std::vector<Pixel> out;
  out.reserve(set.size());
  for (const Pixel& p : set.points) out.push_back({p.y + dy, p.x + dx});
  return BoundaryPointSet(std::move(out));
}

namespace {

double dist(Pixel a, Pixel b) {
  const double dy = a.y - b.y, dx = a.x - b.x;
  return std::sqrt(dy * dy + dx * dx);
}

double nearest(Pixel p, const BoundaryPointSet& set) {
  double best = std::numeric_limits<double>::infinity();
  for (const Pixel& q : set.points) best = std::min(best, dist(p, q));
  return best;
}

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

double lhd_point_impl(Pixel p, const BoundaryPointSet& pred, const BoundaryPointSet& gt, double r,
                      const std::vector<double>* pred_nearest) {
  bool has_neighbour = false;
  for (const Pixel& q : gt.points) {
    if (dist(p, q) <= r) {
      has_neighbour = true;
      break;
    }
  }
  if (!has_neighbour) return 2.0 * r;

  std::vector<double> local;
  bool saw_p = false;
  for (std::size_t i = 0; i < pred.points.size(); ++i) {
    const Pixel& o = pred.points[i];
    if (dist(p, o) > r) continue;
    saw_p = saw_p || o == p;
    local.push_back(pred_nearest ? (*pred_nearest)[i] : nearest(o, gt));
  }
  if (!saw_p) local.push_back(nearest(p, gt));
  const double mx = *std::max_element(local.begin(), local.end());
  return std::min(mx, median_of(std::move(local)));
}

}  // namespace

double lhd_point(Pixel p, const BoundaryPointSet& pred, const BoundaryPointSet& gt, double r) {
  require(!gt.empty(), ErrorKind::domain, "lhd_point: empty ground-truth set");
  require(r > 0.0, ErrorKind::domain, "lhd_point: radius must be > 0");
  return lhd_point_impl(p, pred, gt, r, nullptr);
}

double lhd_aggregate(const BoundaryPointSet& pred, const BoundaryPointSet& gt, double r) {
  require(!pred.empty() && !gt.empty(), ErrorKind::domain, "lhd_aggregate: empty point set");
  require(r > 0.0, ErrorKind::domain, "lhd_aggregate: radius must be > 0");
  std::vector<double> pred_nearest(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) pred_nearest[i] = nearest(pred.points[i], gt);

  std::vector<double> values(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i)
    values[i] = lhd_point_impl(pred.points[i], pred, gt, r, &pred_nearest);

  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  const double sigma = std::sqrt(var / static_cast<double>(values.size()));
  const double cut = mean + 2.0 * sigma + 1e-12 * (1.0 + std::abs(mean));

  double kept = 0.0;
  std::size_t count = 0;
  for (double v : values) {
    if (v <= cut) {
      kept += v;
      ++count;
    }
  }
  return kept / static_cast<double>(count);
}

double jacobian_gap(const TensorFn& teacher, const TensorFn& student, const Tensor& x,
                    const std::vector<Pixel>& boundary_pixels, const JacobianConfig& cfg) {
  require(cfg.step > 0.0 && cfg.window >= 0, ErrorKind::domain, "jacobian_gap: invalid configuration");
  if (boundary_pixels.empty()) return 0.0;
  const Tensor t0 = teacher(x);
  const Tensor s0 = student(x);
  require(t0.same_shape(s0), ErrorKind::domain, "jacobian_gap: teacher and student outputs differ in shape");
  const int out_h = t0.height, out_w = t0.width;

  double sum2 = 0.0;
  Tensor probe = x;
  for (const Pixel& px : boundary_pixels) {
    require(px.y >= 0 && px.y < out_h && px.x >= 0 && px.x < out_w, ErrorKind::domain,
            "jacobian_gap: pixel outside the feature grid");
    const int cy = std::clamp(static_cast<int>(std::lround((px.y + 0.5) * x.height / out_h - 0.5)), 0, x.height - 1);
    const int cx = std::clamp(static_cast<int>(std::lround((px.x + 0.5) * x.width / out_w - 0.5)), 0, x.width - 1);
    for (int c = 0; c < x.channels; ++c) {
      for (int y = std::max(0, cy - cfg.window); y <= std::min(x.height - 1, cy + cfg.window); ++y) {
        for (int xx = std::max(0, cx - cfg.window); xx <= std::min(x.width - 1, cx + cfg.window); ++xx) {
          double& entry = probe.at(c, y, xx);
          const double orig = entry;
          entry = orig + cfg.step;
          const Tensor tp = teacher(probe), sp = student(probe);
          entry = orig - cfg.step;
          const Tensor tm = teacher(probe), sm = student(probe);
          entry = orig;
          for (int k = 0; k < t0.channels; ++k) {
            const double jt = (tp.at(k, px.y, px.x) - tm.at(k, px.y, px.x)) / (2.0 * cfg.step);
            const double js = (sp.at(k, px.y, px.x) - sm.at(k, px.y, px.x)) / (2.0 * cfg.step);
            sum2 += (jt - js) * (jt - js);
          }
        }
      }
    }
  }
  return std::sqrt(sum2);
}

WeylVerdict weyl_check(const RowMatrix& a, const RowMatrix& b) {
  require(a.rows() == a.cols() && b.rows() == b.cols() && a.rows() == b.rows(), ErrorKind::domain,
          "weyl_check: matrices must be square and of equal size");
  require((a - a.transpose()).cwiseAbs().maxCoeff() <= 1e-9 && (b - b.transpose()).cwiseAbs().maxCoeff() <= 1e-9,
          ErrorKind::domain, "weyl_check: input is not symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ea(Eigen::MatrixXd(a), Eigen::EigenvaluesOnly);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eb(Eigen::MatrixXd(b), Eigen::EigenvaluesOnly);
  require(ea.info() == Eigen::Success && eb.info() == Eigen::Success, ErrorKind::data_integrity,
          "weyl_check: eigensolver failed");
  WeylVerdict v;
  v.max_gap = (ea.eigenvalues() - eb.eigenvalues()).cwiseAbs().maxCoeff();
  v.frobenius = (a - b).norm();
  // Eigenvalues carry O(n * eps * ||M||) rounding; the slack keeps a == b exact.
  const double slack = 64.0 * std::numeric_limits<double>::epsilon() * static_cast<double>(a.rows()) *
                       std::max({1.0, a.norm(), b.norm()});
  v.holds = v.max_gap <= v.frobenius + slack;
  return v;
}

}  // namespace bckd
