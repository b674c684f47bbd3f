/*
 * Copyright 2026 The CSST Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Gain-aware losses for cost-sensitive self-training.
//
// With G = M D (D the diagonal of G):
//
//   hybrid loss        l_hyb(y, p)  = -sum_i M_yi log( (p_i/D_ii) / sum_j p_j/D_jj )
//   weighted consist.  l_wt(q, p)   = -sum_i (G^T q)_i log p_i
//   logit-adjusted     l_la(t, z)   = -sum_i t_i log softmax(z - log D)_i
//
// l_hyb(y, softmax(z)) == l_la(M^T e_y, z), and l_la with t = M^T q is the
// form used for training. Its minimizer over softmax(z) is norm(G^T q), the
// same as that of l_wt.
//
// Pseudo-label targets are constants: no gradient flows through them or
// through the normalizer of the KL threshold.

#pragma once

#include <span>
#include <vector>

#include "csst/common.hpp"
#include "csst/gain.hpp"

namespace csst {

inline constexpr double kProbFloor = 1e-12;

// A point on the probability simplex (sum 1 +- 1e-9, entries >= 0).
class ProbVector {
 public:
  explicit ProbVector(Vector values);

  static ProbVector one_hot(int k, int cls);
  static ProbVector uniform(int k);

  const Vector& values() const { return values_; }
  int size() const { return static_cast<int>(values_.size()); }
  double operator[](int i) const { return values_[i]; }
  int argmax() const { return csst::argmax(values_); }

 private:
  Vector values_;
};

// Finite pre-softmax scores.
class LogitVector {
 public:
  explicit LogitVector(Vector values);

  const Vector& values() const { return values_; }
  int size() const { return static_cast<int>(values_.size()); }
  double operator[](int i) const { return values_[i]; }

 private:
  Vector values_;
};

enum class ThresholdMode { kKl, kConfidence };

ProbVector softmax(const LogitVector& z);
Vector log_softmax(const Vector& z);

double hybrid_loss(int y, const ProbVector& p, const GainMatrix& g);

// Hybrid loss evaluated directly on logits (p = softmax(z)) and its gradient.
double hybrid_loss_logits(int y, const LogitVector& z, const GainMatrix& g);
Vector hybrid_loss_logits_grad(int y, const LogitVector& z, const GainMatrix& g);

// -sum_i t_i log softmax(z - log d)_i with t = M^T pseudo.
double la_weighted_consistency(const Vector& target_weights, const LogitVector& z,
                               const Vector& d_diag);
// d/dz: (sum_i t_i) softmax(z - log d) - t.
Vector la_weighted_consistency_grad(const Vector& target_weights,
                                    const LogitVector& z, const Vector& d_diag);

double weighted_consistency_loss(const ProbVector& pseudo, const ProbVector& p_aug,
                                 const GainMatrix& g);

// M^T pseudo, the target weights of the logit-adjusted consistency loss.
Vector consistency_target_weights(const GainMatrix& g, const ProbVector& pseudo);

// norm(G^T pseudo).
ProbVector normalize_gain_target(const GainMatrix& g, const ProbVector& pseudo);

// sum_i p_i log(p_i / q_i), zero-mass entries of p contribute nothing.
double kl_divergence(const ProbVector& p, const ProbVector& q);

// KL(norm(G^T pseudo) || p_weak) <= tau.
bool kl_threshold_mask(const ProbVector& pseudo, const ProbVector& p_weak,
                       const GainMatrix& g, double tau);

// max_i p_weak_i >= exp(-tau).
bool confidence_mask(const ProbVector& p_weak, double tau);

struct LabeledPrediction {
  ProbVector probs;
  int label;
};

// Mean hybrid loss over the batch.
double batch_supervised_loss(std::span<const LabeledPrediction> batch,
                             const GainMatrix& g);

struct UnlabeledPrediction {
  ProbVector pseudo;         // from the weak view
  ProbVector p_weak;         // model distribution on the weak view
  LogitVector strong_logits;  // model logits on the strong view
};

// (1/|B_u|) sum mask * l_la(M^T pseudo, strong_logits). Masked-out samples
// still count in the divisor.
double batch_consistency_loss(std::span<const UnlabeledPrediction> batch,
                              const GainMatrix& g, double tau,
                              ThresholdMode mode = ThresholdMode::kKl);

}  // namespace csst
