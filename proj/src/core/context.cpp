// Copyright 2026 The bckd Authors
// SPDX-License-Identifier: Apache-2.0

#include "context.hpp"

#include "binary_io.hpp"
#include "errors.hpp"
#include "softmax.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

namespace bckd {

namespace {

constexpr char kRelationMagic[7] = {'B', 'C', 'K', 'D', 'R', 'E', 'L'};
constexpr std::uint32_t kRelationVersion = 1;

RowMatrix row_log_softmax(const RowMatrix& logits, double tau) {
  RowMatrix out(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r)
    log_softmax(logits.row(r).data(), static_cast<std::size_t>(logits.cols()), tau, out.row(r).data());
  return out;
}

}  // namespace

AlignmentParams::AlignmentParams(const std::string& prefix, int width, bool normalize)
    : weight_(prefix + ".align", {width, width}), normalize_(normalize) {
  require(width >= 1, ErrorKind::config, "alignment width must be >= 1");
  init_identity();
}

void AlignmentParams::init_identity() {
  const int d = width();
  std::fill(weight_.value.begin(), weight_.value.end(), 0.0);
  for (int i = 0; i < d; ++i) weight_.value[static_cast<std::size_t>(i) * d + i] = 1.0;
}

RowMatrix align_features(const FusedFeatureMap& fused, const AlignmentParams& params, AlignTrace* trace) {
  const int d = params.width();
  require(fused.data.channels == d, ErrorKind::domain, "align_features: fused width does not match alignment map");
  ConstMatrixMap w(params.weight().value.data(), d, d);
  RowMatrix projected = w * fused.data.matrix();
  RowMatrix aligned = projected;
  Eigen::VectorXd norms = Eigen::VectorXd::Zero(projected.cols());
  if (params.normalize()) {
    for (Eigen::Index c = 0; c < projected.cols(); ++c) {
      norms(c) = projected.col(c).norm();
      if (norms(c) > 0.0) aligned.col(c) /= norms(c);
    }
  }
  if (trace) {
    trace->projected = projected;
    trace->norms = norms;
    trace->aligned = aligned;
  }
  return aligned;
}

Tensor align_features_backward(const FusedFeatureMap& fused, AlignmentParams& params, const AlignTrace& trace,
                               const RowMatrix& d_aligned) {
  const int d = params.width();
  RowMatrix d_projected = d_aligned;
  if (params.normalize()) {
    for (Eigen::Index c = 0; c < d_aligned.cols(); ++c) {
      const double n = trace.norms(c);
      if (n > 0.0) {
        const auto y = trace.aligned.col(c);
        d_projected.col(c) = (d_aligned.col(c) - y * y.dot(d_aligned.col(c))) / n;
      } else {
        d_projected.col(c).setZero();
      }
    }
  }
  MatrixMap dw(params.weight().grad.data(), d, d);
  dw.noalias() += d_projected * fused.data.matrix().transpose();
  ConstMatrixMap w(params.weight().value.data(), d, d);
  Tensor dx(fused.data.channels, fused.data.height, fused.data.width);
  dx.matrix().noalias() = w.transpose() * d_projected;
  return dx;
}

RowMatrix scaled_gram(const RowMatrix& aligned) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(aligned.rows()));
  RowMatrix g = aligned.transpose() * aligned;
  g *= scale;
  return g;
}

RowMatrix scaled_gram_backward(const RowMatrix& aligned, const RowMatrix& d_gram) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(aligned.rows()));
  RowMatrix sym = d_gram + d_gram.transpose();
  RowMatrix d_aligned = aligned * sym;
  d_aligned *= scale;
  return d_aligned;
}

RelationMatrix self_relation(const RowMatrix& aligned, double tau) {
  require(tau > 0.0 && std::isfinite(tau), ErrorKind::domain, "self_relation: tau must be > 0");
  require(aligned.rows() >= 1 && aligned.cols() >= 1, ErrorKind::domain, "self_relation: empty feature matrix");
  const RowMatrix logp = row_log_softmax(scaled_gram(aligned), 1.0);
  RelationMatrix rel;
  rel.tau_at_build = tau;
  rel.values = logp.array().exp() / tau;
  return rel;
}

double tempered_row_cross_entropy(const RowMatrix& teacher_logits, const RowMatrix& student_logits, double tau,
                                  RowMatrix* d_student_logits) {
  require(tau > 0.0 && std::isfinite(tau), ErrorKind::domain, "context loss: tau must be > 0");
  require(teacher_logits.rows() == student_logits.rows() && teacher_logits.cols() == student_logits.cols(),
          ErrorKind::domain, "context loss: shape mismatch");
  require(teacher_logits.size() > 0, ErrorKind::domain, "context loss: empty matrices");
  const RowMatrix lp = row_log_softmax(teacher_logits, tau);
  const RowMatrix lq = row_log_softmax(student_logits, tau);
  const double entries = static_cast<double>(teacher_logits.size());
  double ce = 0.0;
  for (Eigen::Index i = 0; i < lp.size(); ++i) {
    const double p = std::exp(lp.data()[i]);
    if (p > 0.0) ce -= p * lq.data()[i];
  }
  if (d_student_logits) {
    // Rows of P sum to one, so d/dz of -sum P log softmax(z/tau) is (Q - P)/tau.
    d_student_logits->resize(lp.rows(), lp.cols());
    const auto cols = static_cast<std::size_t>(lp.cols());
    for (Eigen::Index r = 0; r < lp.rows(); ++r) {
      softmax_gap(teacher_logits.row(r).data(), student_logits.row(r).data(), lp.row(r).data(), cols, tau,
                  d_student_logits->row(r).data());
    }
    *d_student_logits *= tau / entries;
  }
  return tau * tau * ce / entries;
}

double context_loss(const RelationMatrix& teacher, const RelationMatrix& student, double tau) {
  require(teacher.tau_at_build > 0.0 && student.tau_at_build > 0.0, ErrorKind::domain,
          "context_loss: relation matrices carry an invalid build temperature");
  const RowMatrix t_logits = (teacher.values * teacher.tau_at_build).array().log();
  const RowMatrix s_logits = (student.values * student.tau_at_build).array().log();
  return tempered_row_cross_entropy(t_logits, s_logits, tau);
}

double context_loss_from_gram(const RowMatrix& teacher_gram, const RowMatrix& student_gram, double tau,
                              RowMatrix* d_student_gram) {
  return tempered_row_cross_entropy(teacher_gram, student_gram, tau, d_student_gram);
}

void write_relation(const RelationMatrix& rel, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorKind::io, "cannot open " + path + " for writing");
  out.write(kRelationMagic, sizeof(kRelationMagic));
  write_le<std::uint32_t>(out, kRelationVersion);
  const auto hw = static_cast<std::uint32_t>(rel.values.rows());
  write_le<std::uint32_t>(out, hw);
  for (Eigen::Index i = 0; i < rel.values.size(); ++i) write_le<double>(out, rel.values.data()[i]);
  require(out.good(), ErrorKind::io, "failed writing " + path);
}

RelationMatrix read_relation(const std::string& path, double tau_at_build) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorKind::io, "cannot open " + path);
  char magic[sizeof(kRelationMagic)];
  in.read(magic, sizeof(magic));
  require(in.good() && std::memcmp(magic, kRelationMagic, sizeof(magic)) == 0, ErrorKind::io,
          path + ": not a relation dump");
  const auto version = read_le<std::uint32_t>(in);
  require(version == kRelationVersion, ErrorKind::io, path + ": unsupported relation dump version");
  const auto hw = read_le<std::uint32_t>(in);
  RelationMatrix rel;
  rel.tau_at_build = tau_at_build;
  rel.values.resize(hw, hw);
  for (Eigen::Index i = 0; i < rel.values.size(); ++i) rel.values.data()[i] = read_le<double>(in);
  require(in.good(), ErrorKind::io, path + ": truncated relation dump");
  return rel;
}

}  // namespace bckd
