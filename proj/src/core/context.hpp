// Copyright 2026 The bckd Authors
// SPDX-License-Identifier: Apache-2.0
//
// Pixel-level self-relation matrices and the context distillation loss.

#pragma once

#include "fusion.hpp"
#include "layers.hpp"
#include "tensor.hpp"

#include <string>

namespace bckd {

// Row-softmax of the scaled Gram matrix, divided by tau_at_build. Rows of
// values * tau_at_build sum to one.
struct RelationMatrix {
  RowMatrix values;
  double tau_at_build = 1.0;

  int positions() const { return static_cast<int>(values.rows()); }
};

// Learned d x d channel map applied before the Gram product, optionally
// followed by unit-L2 normalisation of every position's feature column.
class AlignmentParams {
 public:
  AlignmentParams() = default;
  AlignmentParams(const std::string& prefix, int width, bool normalize = true);

  Param& weight() { return weight_; }
  const Param& weight() const { return weight_; }
  bool normalize() const { return normalize_; }
  void set_normalize(bool on) { normalize_ = on; }
  int width() const { return weight_.shape.empty() ? 0 : weight_.shape[0]; }

  void init_identity();
  std::vector<Param*> params() { return {&weight_}; }

 private:
  Param weight_;
  bool normalize_ = true;
};

struct AlignTrace {
  RowMatrix projected;  // before normalisation
  Eigen::VectorXd norms;
  RowMatrix aligned;
};

// Returns the d x hw aligned feature matrix.
RowMatrix align_features(const FusedFeatureMap& fused, const AlignmentParams& params, AlignTrace* trace = nullptr);

// Accumulates the weight gradient; returns d(loss)/d(fused) with the fused map's shape.
Tensor align_features_backward(const FusedFeatureMap& fused, AlignmentParams& params, const AlignTrace& trace,
                               const RowMatrix& d_aligned);

// aligned^T aligned / sqrt(d)
RowMatrix scaled_gram(const RowMatrix& aligned);
RowMatrix scaled_gram_backward(const RowMatrix& aligned, const RowMatrix& d_gram);

RelationMatrix self_relation(const RowMatrix& aligned, double tau);

// tau^2 * mean over all hw*hw entries of -P log Q, where P and Q are the row
// softmaxes of the teacher/student logits divided by tau. d_student_logits,
// when non-null, receives the gradient w.r.t. the student logits.
double tempered_row_cross_entropy(const RowMatrix& teacher_logits, const RowMatrix& student_logits, double tau,
                                  RowMatrix* d_student_logits = nullptr);

// Context loss between two relation matrices. Each matrix is first mapped back
// to its row-softmax (values * tau_at_build) and re-tempered at tau.
double context_loss(const RelationMatrix& teacher, const RelationMatrix& student, double tau);

// Same loss evaluated directly from pre-softmax Gram matrices; this is the
// training path and equals context_loss on the corresponding relations.
double context_loss_from_gram(const RowMatrix& teacher_gram, const RowMatrix& student_gram, double tau,
                              RowMatrix* d_student_gram = nullptr);

// Binary dump: magic "BCKDREL", u32 version, u32 hw, then hw*hw little-endian
// float64 values, row-major.
void write_relation(const RelationMatrix& rel, const std::string& path);
RelationMatrix read_relation(const std::string& path, double tau_at_build = 1.0);

}  // namespace bckd
