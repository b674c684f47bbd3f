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

// Gain matrices for linear confusion-matrix objectives and the Lagrange
// multiplier updates that turn worst-case recall and coverage-constrained
// mean recall into a sequence of cost-sensitive problems.

#pragma once

#include <iosfwd>
#include <optional>
#include <vector>

#include "csst/common.hpp"

namespace csst {

// Positive-diagonal factorization G = M * D with D = diag(G_11..G_KK).
struct GainDecomposition {
  Matrix m;  // G * D^-1, unit diagonal
  Vector d;  // diagonal of D
};

// K x K reward matrix. Entry (i, j) is the reward for predicting class j
// when the true class is i.
//
// Any finite square matrix is accepted so that plain CSL values can be
// computed for degenerate gains (e.g. all zeros). The loss functions need
// the factorization, which only exists for a strictly positive diagonal;
// `decomposition()` throws DomainError otherwise.
class GainMatrix {
 public:
  explicit GainMatrix(Matrix entries);

  static GainMatrix identity(int k);

  int k() const { return static_cast<int>(entries_.rows()); }
  const Matrix& entries() const { return entries_; }
  double operator()(int i, int j) const { return entries_(i, j); }

  bool has_positive_diagonal() const { return decomposition_.has_value(); }
  bool is_diagonal() const;
  bool is_nonnegative() const;

  const GainDecomposition& decomposition() const;

 private:
  Matrix entries_;
  std::optional<GainDecomposition> decomposition_;
};

GainDecomposition decompose(const GainMatrix& g);
GainMatrix compose(const GainDecomposition& parts);

enum class MultiplierRule {
  kExpGradientSimplex,
  kProjectedGradientNonneg,
};

// Multipliers for the outer Lagrangian loop. Immutable; updates return a
// new state.
class LagrangeState {
 public:
  LagrangeState(Vector lambda, MultiplierRule rule, double step);

  // lambda = 1/K on the simplex.
  static LagrangeState uniform_simplex(int k, double step);
  // lambda = 0 on the nonnegative orthant.
  static LagrangeState zeros(int k, double step);

  const Vector& lambda() const { return lambda_; }
  MultiplierRule rule() const { return rule_; }
  double step() const { return step_; }
  int k() const { return static_cast<int>(lambda_.size()); }

 private:
  Vector lambda_;
  MultiplierRule rule_;
  double step_;
};

// Floor applied to simplex multipliers before they are divided by the prior.
inline constexpr double kMultiplierFloor = 1e-8;

inline double default_coverage_target(int k) { return 0.95 / k; }

// G = diag(lambda_i / pi_i). lambda must lie on the simplex (1e-6 slack);
// entries are floored at kMultiplierFloor so that no class loses its gain.
GainMatrix min_recall_gain(const Vector& lambda, const Vector& priors);

// G_ij = delta_ij / (K pi_i) + lambda_j: mean recall plus the Lagrangian
// term of the per-class coverage constraints.
GainMatrix coverage_gain(const Vector& lambda, const Vector& priors);

// lambda'_i ∝ lambda_i exp(-omega * recall_i), renormalized to the simplex.
LagrangeState exp_gradient_update(const LagrangeState& state,
                                  const Vector& recalls, double omega);

// lambda'_i = max(0, lambda_i - omega (cov_i - target)).
LagrangeState proj_gradient_update(const LagrangeState& state,
                                   const Vector& coverages, double omega,
                                   double target);

// Writes `round,i,lambda`, one line per (round, class).
void write_lambda_trajectory_csv(std::ostream& out,
                                 const std::vector<Vector>& lambdas);

}  // namespace csst
