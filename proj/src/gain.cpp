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

#include "csst/gain.hpp"

#include <cmath>
#include <iomanip>
#include <ostream>
#include <string>

#include "csst/error.hpp"

namespace csst {
namespace {

void check_priors(const Vector& priors, int k) {
  if (priors.size() != k) {
    throw ShapeError("priors have length " + std::to_string(priors.size()) +
                     ", expected " + std::to_string(k));
  }
  for (int i = 0; i < k; ++i) {
    if (!(priors[i] > 0.0)) {
      throw DomainError("prior of class " + std::to_string(i) +
                        " must be positive");
    }
  }
}

}  // namespace

GainMatrix::GainMatrix(Matrix entries) : entries_(std::move(entries)) {
  if (entries_.rows() != entries_.cols() || entries_.rows() == 0) {
    throw ShapeError("gain matrix must be square and nonempty");
  }
  if (!entries_.allFinite()) throw DomainError("gain matrix must be finite");
  const Vector diag = entries_.diagonal();
  if ((diag.array() > 0.0).all()) {
    GainDecomposition parts;
    parts.d = diag;
    parts.m = entries_ * diag.cwiseInverse().asDiagonal();
    decomposition_ = std::move(parts);
  }
}

GainMatrix GainMatrix::identity(int k) {
  return GainMatrix(Matrix::Identity(k, k));
}

bool GainMatrix::is_diagonal() const {
  for (int i = 0; i < k(); ++i) {
    for (int j = 0; j < k(); ++j) {
      if (i != j && entries_(i, j) != 0.0) return false;
    }
  }
  return true;
}

bool GainMatrix::is_nonnegative() const {
  return (entries_.array() >= 0.0).all();
}

const GainDecomposition& GainMatrix::decomposition() const {
  if (!decomposition_) {
    throw DomainError("gain matrix needs a strictly positive diagonal");
  }
  return *decomposition_;
}

GainDecomposition decompose(const GainMatrix& g) { return g.decomposition(); }

GainMatrix compose(const GainDecomposition& parts) {
  return GainMatrix(parts.m * parts.d.asDiagonal());
}

LagrangeState::LagrangeState(Vector lambda, MultiplierRule rule, double step)
    : lambda_(std::move(lambda)), rule_(rule), step_(step) {
  if (lambda_.size() == 0) throw ShapeError("empty multiplier vector");
  if (!(step_ >= 0.0) || !std::isfinite(step_)) {
    throw DomainError("multiplier step must be finite and nonnegative");
  }
  if (!lambda_.allFinite() || (lambda_.array() < 0.0).any()) {
    throw DomainError("multipliers must be finite and nonnegative");
  }
  if (rule_ == MultiplierRule::kExpGradientSimplex &&
      std::abs(lambda_.sum() - 1.0) > 1e-9) {
    throw DomainError("simplex multipliers must sum to one");
  }
}

LagrangeState LagrangeState::uniform_simplex(int k, double step) {
  return LagrangeState(Vector::Constant(k, 1.0 / k),
                       MultiplierRule::kExpGradientSimplex, step);
}

LagrangeState LagrangeState::zeros(int k, double step) {
  return LagrangeState(Vector::Zero(k), MultiplierRule::kProjectedGradientNonneg,
                       step);
}

GainMatrix min_recall_gain(const Vector& lambda, const Vector& priors) {
  const int k = static_cast<int>(lambda.size());
  check_priors(priors, k);
  if ((lambda.array() < 0.0).any() || std::abs(lambda.sum() - 1.0) > 1e-6) {
    throw DomainError("min-recall multipliers must lie on the simplex");
  }
  Matrix g = Matrix::Zero(k, k);
  for (int i = 0; i < k; ++i) {
    g(i, i) = std::max(lambda[i], kMultiplierFloor) / priors[i];
  }
  return GainMatrix(std::move(g));
}

GainMatrix coverage_gain(const Vector& lambda, const Vector& priors) {
  const int k = static_cast<int>(lambda.size());
  check_priors(priors, k);
  if ((lambda.array() < 0.0).any()) {
    throw DomainError("coverage multipliers must be nonnegative");
  }
  Matrix g(k, k);
  for (int i = 0; i < k; ++i) {
    for (int j = 0; j < k; ++j) {
      g(i, j) = (i == j ? 1.0 / (k * priors[i]) : 0.0) + lambda[j];
    }
  }
  return GainMatrix(std::move(g));
}

LagrangeState exp_gradient_update(const LagrangeState& state,
                                  const Vector& recalls, double omega) {
  if (state.rule() != MultiplierRule::kExpGradientSimplex) {
    throw DomainError("exp-gradient update needs simplex multipliers");
  }
  if (recalls.size() != state.k()) throw ShapeError("recall vector length");
  // Shifting by the smallest exponent keeps the factors in (0, 1] and
  // cancels in the normalization.
  const Vector scaled = -omega * recalls;
  const double top = scaled.maxCoeff();
  Vector next = state.lambda().array() * (scaled.array() - top).exp();
  const double total = next.sum();
  if (!(total > 0.0)) {
    throw DomainError("exp-gradient update collapsed to zero");
  }
  next /= total;
  return LagrangeState(std::move(next), state.rule(), state.step());
}

LagrangeState proj_gradient_update(const LagrangeState& state,
                                   const Vector& coverages, double omega,
                                   double target) {
  if (state.rule() != MultiplierRule::kProjectedGradientNonneg) {
    throw DomainError("projected-gradient update needs orthant multipliers");
  }
  if (coverages.size() != state.k()) throw ShapeError("coverage vector length");
  Vector next = state.lambda() - omega * (coverages.array() - target).matrix();
  next = next.cwiseMax(0.0);
  return LagrangeState(std::move(next), state.rule(), state.step());
}

void write_lambda_trajectory_csv(std::ostream& out,
                                 const std::vector<Vector>& lambdas) {
  out << "round,i,lambda\n";
  out << std::setprecision(17);
  for (std::size_t t = 0; t < lambdas.size(); ++t) {
    for (Eigen::Index i = 0; i < lambdas[t].size(); ++i) {
      out << t << ',' << i << ',' << lambdas[t][i] << '\n';
    }
  }
}

}  // namespace csst
