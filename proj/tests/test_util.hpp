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

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "csst/common.hpp"
#include "csst/gain.hpp"
#include "csst/losses.hpp"
#include "csst/model.hpp"

namespace csst::testing {

// Dirichlet(1, ..., 1) draw kept away from the boundary.
inline Vector random_simplex(int k, Rng& rng, double min_entry = 1e-3) {
  std::exponential_distribution<double> e(1.0);
  Vector v(k);
  for (int i = 0; i < k; ++i) v[i] = e(rng) + min_entry;
  return v / v.sum();
}

inline Vector random_uniform(int k, Rng& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  Vector v(k);
  for (int i = 0; i < k; ++i) v[i] = u(rng);
  return v;
}

inline Matrix random_matrix(int rows, int cols, Rng& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) m(i, j) = u(rng);
  }
  return m;
}

inline std::vector<int> random_labels(std::size_t n, int k, Rng& rng) {
  std::uniform_int_distribution<int> u(0, k - 1);
  std::vector<int> out(n);
  for (auto& v : out) v = u(rng);
  return out;
}

// Euclidean projection onto the probability simplex (sort-based).
inline Vector project_to_simplex(const Vector& v) {
  std::vector<double> u(v.data(), v.data() + v.size());
  std::sort(u.begin(), u.end(), std::greater<>());
  double cumulative = 0.0;
  double theta = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    cumulative += u[i];
    const double t = (cumulative - 1.0) / static_cast<double>(i + 1);
    if (u[i] - t > 0.0) theta = t;
  }
  return (v.array() - theta).cwiseMax(0.0).matrix();
}

// argmin over the simplex of f(p) = -sum_i a_i log p_i by projected gradient
// descent from the uniform point with Armijo backtracking.
inline Vector minimize_weighted_log_loss(const Vector& a, int max_iters = 20000) {
  const auto f = [&](const Vector& p) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < p.size(); ++i) {
      if (a[i] != 0.0) s -= a[i] * std::log(std::max(p[i], 1e-300));
    }
    return s;
  };
  Vector p = Vector::Constant(a.size(), 1.0 / static_cast<double>(a.size()));
  double step = 1.0;
  for (int it = 0; it < max_iters; ++it) {
    const Vector grad = -(a.array() / p.array()).matrix();
    const double fp = f(p);
    Vector next;
    for (;;) {
      next = project_to_simplex(p - step * grad);
      if ((next.array() > 0.0).all() &&
          f(next) <= fp + grad.dot(next - p) + (next - p).squaredNorm() / (2 * step)) {
        break;
      }
      step *= 0.5;
    }
    const double moved = (next - p).cwiseAbs().maxCoeff();
    p = next;
    step *= 2.0;
    if (moved < 1e-14) break;
  }
  return p;
}

// A fixed micro-batch for L_s^hyb + lambda_u L_u^wt. Pseudo-label targets
// and masks are frozen, as in training.
struct MicroBatch {
  FeatureMatrix labeled_x;
  std::vector<int> labels;
  FeatureMatrix strong_x;
  std::vector<Vector> targets;  // M^T pseudo per unlabeled row
  std::vector<bool> mask;
};

inline MicroBatch random_micro_batch(const GainMatrix& g, int dim, int n_labeled,
                                     int n_unlabeled, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::bernoulli_distribution coin(0.6);
  MicroBatch b;
  const int k = g.k();
  b.labeled_x.resize(n_labeled, dim);
  b.strong_x.resize(n_unlabeled, dim);
  for (int r = 0; r < n_labeled; ++r) {
    for (int c = 0; c < dim; ++c) b.labeled_x(r, c) = normal(rng);
  }
  for (int r = 0; r < n_unlabeled; ++r) {
    for (int c = 0; c < dim; ++c) b.strong_x(r, c) = normal(rng);
  }
  b.labels = random_labels(static_cast<std::size_t>(n_labeled), k, rng);
  for (int r = 0; r < n_unlabeled; ++r) {
    const ProbVector pseudo(random_simplex(k, rng));
    b.targets.push_back(consistency_target_weights(g, pseudo));
    b.mask.push_back(coin(rng));
  }
  return b;
}

inline double combined_loss(const MlpModel& model, const MicroBatch& b,
                            const GainMatrix& g, double lambda_u) {
  const Matrix zl = forward_logits(model, b.labeled_x);
  double sup = 0.0;
  for (Eigen::Index r = 0; r < zl.rows(); ++r) {
    sup += hybrid_loss_logits(b.labels[r], LogitVector(zl.row(r).transpose()), g);
  }
  sup /= static_cast<double>(zl.rows());
  const Matrix zu = forward_logits(model, b.strong_x);
  double cons = 0.0;
  for (Eigen::Index r = 0; r < zu.rows(); ++r) {
    if (!b.mask[r]) continue;
    cons += la_weighted_consistency(b.targets[r], LogitVector(zu.row(r).transpose()),
                                    g.decomposition().d);
  }
  cons /= static_cast<double>(zu.rows());
  return sup + lambda_u * cons;
}

inline Gradients combined_gradient(const MlpModel& model, const MicroBatch& b,
                                   const GainMatrix& g, double lambda_u) {
  Gradients grads = Gradients::zeros_like(model);
  const ForwardTrace tl = forward_batch(model, b.labeled_x);
  Matrix dl(tl.logits.rows(), tl.logits.cols());
  for (Eigen::Index r = 0; r < dl.rows(); ++r) {
    dl.row(r) = hybrid_loss_logits_grad(b.labels[r], LogitVector(tl.logits.row(r).transpose()),
                                        g)
                    .transpose() /
                static_cast<double>(dl.rows());
  }
  backward(model, tl, dl, grads);
  const ForwardTrace tu = forward_batch(model, b.strong_x);
  Matrix du = Matrix::Zero(tu.logits.rows(), tu.logits.cols());
  for (Eigen::Index r = 0; r < du.rows(); ++r) {
    if (!b.mask[r]) continue;
    du.row(r) = la_weighted_consistency_grad(b.targets[r],
                                             LogitVector(tu.logits.row(r).transpose()),
                                             g.decomposition().d)
                    .transpose() *
                (lambda_u / static_cast<double>(du.rows()));
  }
  backward(model, tu, du, grads);
  return grads;
}

// Largest relative error |analytic - fd| / max(|analytic|, |fd|, 1e-6) over
// `coords` random parameter coordinates, central differences with step h.
inline double max_gradient_error(MlpModel model, const MicroBatch& b, const GainMatrix& g,
                                 double lambda_u, int coords, Rng& rng, double h = 1e-5) {
  const Gradients grads = combined_gradient(model, b, g, lambda_u);
  std::uniform_int_distribution<std::size_t> pick(0, model.parameter_count() - 1);
  double worst = 0.0;
  for (int c = 0; c < coords; ++c) {
    const std::size_t idx = pick(rng);
    const double saved = model.parameter(idx);
    model.parameter(idx) = saved + h;
    const double up = combined_loss(model, b, g, lambda_u);
    model.parameter(idx) = saved - h;
    const double down = combined_loss(model, b, g, lambda_u);
    model.parameter(idx) = saved;
    const double fd = (up - down) / (2 * h);
    const double analytic = grads.parameter(idx);
    const double scale = std::max({std::abs(analytic), std::abs(fd), 1e-6});
    worst = std::max(worst, std::abs(analytic - fd) / scale);
  }
  return worst;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("csst_" + tag + "_" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

}  // namespace csst::testing
