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

#include "csst/losses.hpp"

#include <cmath>
#include <string>

#include "csst/error.hpp"

namespace csst {
namespace {

void check_same_size(int a, int b, const char* what) {
  if (a != b) {
    throw ShapeError(std::string(what) + ": sizes " + std::to_string(a) +
                     " and " + std::to_string(b) + " differ");
  }
}

double floored_log(double p) { return std::log(std::max(p, kProbFloor)); }

}  // namespace

ProbVector::ProbVector(Vector values) : values_(std::move(values)) {
  if (values_.size() == 0) throw ShapeError("empty probability vector");
  if (!values_.allFinite() || (values_.array() < 0.0).any()) {
    throw DomainError("probabilities must be finite and nonnegative");
  }
  if (std::abs(values_.sum() - 1.0) > 1e-9) {
    throw DomainError("probabilities must sum to one");
  }
}

ProbVector ProbVector::one_hot(int k, int cls) {
  if (cls < 0 || cls >= k) throw DomainError("one-hot class out of range");
  Vector v = Vector::Zero(k);
  v[cls] = 1.0;
  return ProbVector(std::move(v));
}

ProbVector ProbVector::uniform(int k) {
  return ProbVector(Vector::Constant(k, 1.0 / k));
}

LogitVector::LogitVector(Vector values) : values_(std::move(values)) {
  if (values_.size() == 0) throw ShapeError("empty logit vector");
  if (!values_.allFinite()) throw DomainError("logits must be finite");
}

Vector log_softmax(const Vector& z) {
  const double top = z.maxCoeff();
  const double lse = top + std::log((z.array() - top).exp().sum());
  return z.array() - lse;
}

ProbVector softmax(const LogitVector& z) {
  Vector e = (z.values().array() - z.values().maxCoeff()).exp();
  e /= e.sum();
  return ProbVector(std::move(e));
}

double hybrid_loss(int y, const ProbVector& p, const GainMatrix& g) {
  check_same_size(p.size(), g.k(), "hybrid_loss");
  if (y < 0 || y >= g.k()) throw DomainError("label out of range");
  const auto& parts = g.decomposition();
  Vector adjusted(p.size());
  for (int i = 0; i < p.size(); ++i) {
    adjusted[i] = std::max(p[i], kProbFloor) / parts.d[i];
  }
  const double log_norm = std::log(adjusted.sum());
  double loss = 0.0;
  for (int i = 0; i < p.size(); ++i) {
    const double weight = parts.m(y, i);
    if (weight != 0.0) loss -= weight * (std::log(adjusted[i]) - log_norm);
  }
  return loss;
}

double hybrid_loss_logits(int y, const LogitVector& z, const GainMatrix& g) {
  if (y < 0 || y >= g.k()) throw DomainError("label out of range");
  const auto& parts = g.decomposition();
  return la_weighted_consistency(parts.m.row(y).transpose(), z, parts.d);
}

Vector hybrid_loss_logits_grad(int y, const LogitVector& z, const GainMatrix& g) {
  if (y < 0 || y >= g.k()) throw DomainError("label out of range");
  const auto& parts = g.decomposition();
  return la_weighted_consistency_grad(parts.m.row(y).transpose(), z, parts.d);
}

double la_weighted_consistency(const Vector& target_weights, const LogitVector& z,
                               const Vector& d_diag) {
  check_same_size(static_cast<int>(target_weights.size()), z.size(),
                  "la_weighted_consistency");
  check_same_size(static_cast<int>(d_diag.size()), z.size(),
                  "la_weighted_consistency");
  if ((d_diag.array() <= 0.0).any()) {
    throw DomainError("logit adjustment needs a positive diagonal");
  }
  const Vector log_q = log_softmax(z.values() - d_diag.array().log().matrix());
  double loss = 0.0;
  for (int i = 0; i < z.size(); ++i) {
    if (target_weights[i] != 0.0) loss -= target_weights[i] * log_q[i];
  }
  return loss;
}

Vector la_weighted_consistency_grad(const Vector& target_weights,
                                    const LogitVector& z, const Vector& d_diag) {
  check_same_size(static_cast<int>(target_weights.size()), z.size(),
                  "la_weighted_consistency_grad");
  check_same_size(static_cast<int>(d_diag.size()), z.size(),
                  "la_weighted_consistency_grad");
  if ((d_diag.array() <= 0.0).any()) {
    throw DomainError("logit adjustment needs a positive diagonal");
  }
  const Vector q =
      log_softmax(z.values() - d_diag.array().log().matrix()).array().exp();
  return target_weights.sum() * q - target_weights;
}

double weighted_consistency_loss(const ProbVector& pseudo, const ProbVector& p_aug,
                                 const GainMatrix& g) {
  check_same_size(pseudo.size(), g.k(), "weighted_consistency_loss");
  check_same_size(p_aug.size(), g.k(), "weighted_consistency_loss");
  const Vector weights = g.entries().transpose() * pseudo.values();
  double loss = 0.0;
  for (int i = 0; i < g.k(); ++i) {
    if (weights[i] != 0.0) loss -= weights[i] * floored_log(p_aug[i]);
  }
  return loss;
}

Vector consistency_target_weights(const GainMatrix& g, const ProbVector& pseudo) {
  check_same_size(pseudo.size(), g.k(), "consistency_target_weights");
  if (!g.is_nonnegative()) {
    throw DomainError("consistency losses need a nonnegative gain matrix");
  }
  return g.decomposition().m.transpose() * pseudo.values();
}

ProbVector normalize_gain_target(const GainMatrix& g, const ProbVector& pseudo) {
  check_same_size(pseudo.size(), g.k(), "normalize_gain_target");
  const Vector target = g.entries().transpose() * pseudo.values();
  if ((target.array() < 0.0).any()) {
    throw DomainError("G^T pseudo has negative entries");
  }
  const double total = target.sum();
  if (!(total > 0.0)) throw DomainError("G^T pseudo has no mass to normalize");
  Vector normalized = target / total;
  // Re-normalize against rounding so the simplex check is exact.
  normalized /= normalized.sum();
  return ProbVector(std::move(normalized));
}

double kl_divergence(const ProbVector& p, const ProbVector& q) {
  check_same_size(p.size(), q.size(), "kl_divergence");
  double kl = 0.0;
  for (int i = 0; i < p.size(); ++i) {
    if (p[i] > 0.0) kl += p[i] * (std::log(p[i]) - floored_log(q[i]));
  }
  // Rounding can leave tiny negative values when p == q.
  return std::max(kl, 0.0);
}

bool kl_threshold_mask(const ProbVector& pseudo, const ProbVector& p_weak,
                       const GainMatrix& g, double tau) {
  if (!(tau >= 0.0)) throw DomainError("tau must be nonnegative");
  return kl_divergence(normalize_gain_target(g, pseudo), p_weak) <= tau;
}

bool confidence_mask(const ProbVector& p_weak, double tau) {
  if (!(tau >= 0.0)) throw DomainError("tau must be nonnegative");
  return p_weak.values().maxCoeff() >= std::exp(-tau);
}

double batch_supervised_loss(std::span<const LabeledPrediction> batch,
                             const GainMatrix& g) {
  if (batch.empty()) throw ShapeError("empty supervised batch");
  double total = 0.0;
  for (const auto& item : batch) total += hybrid_loss(item.label, item.probs, g);
  return total / static_cast<double>(batch.size());
}

double batch_consistency_loss(std::span<const UnlabeledPrediction> batch,
                              const GainMatrix& g, double tau,
                              ThresholdMode mode) {
  if (batch.empty()) throw ShapeError("empty unlabeled batch");
  const Vector& d = g.decomposition().d;
  double total = 0.0;
  for (const auto& item : batch) {
    const bool selected = mode == ThresholdMode::kKl
                              ? kl_threshold_mask(item.pseudo, item.p_weak, g, tau)
                              : confidence_mask(item.p_weak, tau);
    if (!selected) continue;
    total += la_weighted_consistency(consistency_target_weights(g, item.pseudo),
                                     item.strong_logits, d);
  }
  return total / static_cast<double>(batch.size());
}

}  // namespace csst
