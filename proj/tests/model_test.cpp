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

#include "csst/model.hpp"

#include <cmath>
#include <cstring>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "csst/error.hpp"
#include "test_util.hpp"

namespace csst {
namespace {

using testing::max_gradient_error;
using testing::random_micro_batch;
using testing::random_uniform;

// Naive loops over the layers: h <- relu(W h + b), no relu on the last layer.
std::vector<double> naive_forward(const MlpModel& m, std::vector<double> h) {
  const auto& layers = m.layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const Matrix& w = layers[l].weights;
    std::vector<double> next(static_cast<std::size_t>(w.rows()), 0.0);
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      double s = layers[l].bias[r];
      for (Eigen::Index c = 0; c < w.cols(); ++c) s += w(r, c) * h[c];
      next[r] = (l + 1 < layers.size()) ? std::max(s, 0.0) : s;
    }
    h = std::move(next);
  }
  return h;
}

TEST(Forward, ZeroModelGivesUniformSoftmax) {
  const MlpModel m = MlpModel::zeros({3, 5, 4});
  const std::vector<double> x{1.0, -2.0, 0.5};
  const LogitVector z = forward(m, x);
  EXPECT_TRUE(z.values().isZero());
  EXPECT_TRUE(softmax(z).values().isApprox(Vector::Constant(4, 0.25)));
}

TEST(Forward, IdentityLinearLayer) {
  MlpModel m = MlpModel::zeros({2, 2});
  m.layers()[0].weights = Matrix::Identity(2, 2);
  const std::vector<double> x{0.7, -1.3};
  const LogitVector z = forward(m, x);
  EXPECT_EQ(z[0], 0.7);
  EXPECT_EQ(z[1], -1.3);
}

TEST(Forward, MatchesNaiveLoops) {
  Rng rng(1);
  for (int trial = 0; trial < 10; ++trial) {
    const MlpModel m({4, 7, 6, 3}, 100 + trial);
    const Vector x = random_uniform(4, rng, -2.0, 2.0);
    const std::vector<double> xs(x.data(), x.data() + 4);
    const LogitVector z = forward(m, xs);
    const auto oracle = naive_forward(m, xs);
    for (int i = 0; i < 3; ++i) EXPECT_NEAR(z[i], oracle[i], 1e-12);
  }
}

TEST(Forward, BatchMatchesSingleAndRejectsWrongDim) {
  const MlpModel m({3, 8, 2}, 7);
  Rng rng(2);
  FeatureMatrix x(5, 3);
  for (int r = 0; r < 5; ++r) x.row(r) = random_uniform(3, rng, -1, 1).transpose();
  const Matrix z = forward_logits(m, x);
  const auto preds = predict_batch(m, x);
  for (int r = 0; r < 5; ++r) {
    const LogitVector single = forward(m, row_span(x, r));
    EXPECT_LE((z.row(r).transpose() - single.values()).cwiseAbs().maxCoeff(), 1e-14);
    EXPECT_EQ(preds[r], predict(m, row_span(x, r)));
  }
  EXPECT_THROW(forward(m, std::vector<double>{1.0, 2.0}), ShapeError);
}

TEST(Forward, LastLayerScalingKeepsPredictions) {
  MlpModel m({4, 10, 5}, 11);
  Rng rng(3);
  FeatureMatrix x(200, 4);
  for (int r = 0; r < 200; ++r) x.row(r) = random_uniform(4, rng, -3, 3).transpose();
  const Matrix before = forward_logits(m, x);
  const auto preds = predict_batch(m, x);
  m.layers().back().weights *= 3.5;
  m.layers().back().bias *= 3.5;
  EXPECT_LE((forward_logits(m, x) - 3.5 * before).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_EQ(predict_batch(m, x), preds);
}

TEST(Model, InitIsBoundedAndSeeded) {
  const MlpModel a({16, 64, 10}, 5);
  const MlpModel b({16, 64, 10}, 5);
  const MlpModel c({16, 64, 10}, 6);
  EXPECT_EQ(a.parameter_count(), 16u * 64 + 64 + 64 * 10 + 10);
  bool differs = false;
  for (std::size_t i = 0; i < a.parameter_count(); ++i) {
    EXPECT_EQ(a.parameter(i), b.parameter(i));
    differs |= a.parameter(i) != c.parameter(i);
  }
  EXPECT_TRUE(differs);
  EXPECT_LE(a.layers()[0].weights.cwiseAbs().maxCoeff(), 1.0 / std::sqrt(16.0));
  EXPECT_LE(a.layers()[1].weights.cwiseAbs().maxCoeff(), 1.0 / std::sqrt(64.0));
  EXPECT_THROW(MlpModel({4}, 1), ShapeError);
}

TEST(Backward, ZeroLossGivesZeroGradients) {
  const MlpModel m({3, 4, 2}, 1);
  FeatureMatrix x = FeatureMatrix::Ones(3, 3);
  const ForwardTrace t = forward_batch(m, x);
  Gradients g = Gradients::zeros_like(m);
  backward(m, t, Matrix::Zero(3, 2), g);
  for (std::size_t i = 0; i < m.parameter_count(); ++i) EXPECT_EQ(g.parameter(i), 0.0);
}

TEST(Backward, LinearCrossEntropyClosedForm) {
  const MlpModel m({3, 4}, 9);
  const std::vector<double> x{0.5, -1.0, 2.0};
  const int y = 2;
  FeatureMatrix xm(1, 3);
  xm << 0.5, -1.0, 2.0;
  const ForwardTrace t = forward_batch(m, xm);
  const LogitVector z(t.logits.row(0).transpose());
  const Vector dl = hybrid_loss_logits_grad(y, z, GainMatrix::identity(4));
  Gradients g = Gradients::zeros_like(m);
  backward(m, t, dl.transpose(), g);
  const Vector p = softmax(z).values();
  for (int r = 0; r < 4; ++r) {
    const double err = p[r] - (r == y ? 1.0 : 0.0);
    for (int c = 0; c < 3; ++c) EXPECT_NEAR(g.weights[0](r, c), err * x[c], 1e-14);
    EXPECT_NEAR(g.bias[0][r], err, 1e-14);
  }
}

TEST(Backward, CombinedLossMatchesFiniteDifferences) {
  Rng rng(4);
  for (int trial = 0; trial < 5; ++trial) {
    const int k = 3 + trial % 3;
    Matrix gm = testing::random_matrix(k, k, rng, 0.0, 1.0);
    gm.diagonal() = random_uniform(k, rng, 0.3, 4.0);
    const GainMatrix g(gm);
    const MlpModel m({5, 12, k}, 40 + trial);
    const auto batch = random_micro_batch(g, 5, 6, 10, rng);
    EXPECT_LT(max_gradient_error(m, batch, g, 1.0, 20, rng), 1e-4);
    EXPECT_LT(max_gradient_error(m, batch, g, 0.0, 20, rng), 1e-4);
  }
}

TEST(Sgd, ZeroGradientNoDecayLeavesParameters) {
  MlpModel m({3, 4, 2}, 1);
  const MlpModel before = m;
  OptimizerState opt(m, 0.1, 0.9, 0.0);
  for (int s = 0; s < 3; ++s) sgd_step(m, Gradients::zeros_like(m), opt);
  for (std::size_t i = 0; i < m.parameter_count(); ++i) {
    EXPECT_EQ(m.parameter(i), before.parameter(i));
  }
}

TEST(Sgd, PlainStep) {
  MlpModel m({2, 3, 2}, 2);
  const MlpModel before = m;
  Gradients g = Gradients::zeros_like(m);
  for (std::size_t l = 0; l < g.weights.size(); ++l) {
    g.weights[l].setConstant(0.5);
    g.bias[l].setConstant(-0.25);
  }
  OptimizerState opt(m, 0.1, 0.0, 0.0);
  sgd_step(m, g, opt);
  for (std::size_t i = 0; i < m.parameter_count(); ++i) {
    EXPECT_DOUBLE_EQ(m.parameter(i), before.parameter(i) - 0.1 * g.parameter(i));
  }
}

TEST(Sgd, TwoMomentumStepsMatchRecurrence) {
  MlpModel m({2, 2}, 3);
  const MlpModel before = m;
  Gradients g1 = Gradients::zeros_like(m);
  Gradients g2 = Gradients::zeros_like(m);
  g1.weights[0] << 1.0, -2.0, 0.5, 0.0;
  g1.bias[0] << 0.3, -0.1;
  g2.weights[0] << -0.5, 1.0, 0.25, 2.0;
  g2.bias[0] << 0.2, 0.4;
  const double lr = 0.05;
  const double mom = 0.9;
  const double wd = 0.01;
  OptimizerState opt(m, lr, mom, wd);
  sgd_step(m, g1, opt);
  sgd_step(m, g2, opt);
  for (std::size_t i = 0; i < m.parameter_count(); ++i) {
    const bool is_bias = i >= 4;
    const double decay = is_bias ? 0.0 : wd;
    double theta = before.parameter(i);
    double v = g1.parameter(i) + decay * theta;
    theta -= lr * v;
    v = mom * v + g2.parameter(i) + decay * theta;
    theta -= lr * v;
    EXPECT_NEAR(m.parameter(i), theta, 1e-15);
  }
}

TEST(Sgd, RejectsBadHyperparameters) {
  const MlpModel m({2, 2}, 1);
  EXPECT_THROW(OptimizerState(m, 0.0, 0.9, 0.0), DomainError);
  EXPECT_THROW(OptimizerState(m, 0.1, 1.0, 0.0), DomainError);
  EXPECT_THROW(OptimizerState(m, 0.1, 0.9, -1.0), DomainError);
}

TEST(Sgd, DeterministicTraining) {
  const auto run = [] {
    Rng rng(5);
    GainMatrix g = GainMatrix::identity(3);
    MlpModel m({4, 8, 3}, 77);
    OptimizerState opt(m, 0.05, 0.9, 5e-4);
    for (int s = 0; s < 20; ++s) {
      const auto batch = random_micro_batch(g, 4, 8, 8, rng);
      sgd_step(m, testing::combined_gradient(m, batch, g, 1.0), opt);
    }
    return m;
  };
  const MlpModel a = run();
  const MlpModel b = run();
  for (std::size_t i = 0; i < a.parameter_count(); ++i) {
    EXPECT_EQ(a.parameter(i), b.parameter(i));
  }
}

std::string checkpoint_bytes(const MlpModel& m) {
  std::ostringstream out;
  save_checkpoint(m, out);
  return out.str();
}

TEST(Checkpoint, RoundTripIsBitExact) {
  const MlpModel m({3, 5, 2}, 8);
  std::istringstream in(checkpoint_bytes(m));
  const MlpModel back = load_checkpoint(in);
  EXPECT_EQ(back.layer_sizes(), m.layer_sizes());
  for (std::size_t i = 0; i < m.parameter_count(); ++i) {
    const double a = back.parameter(i);
    const double b = m.parameter(i);
    EXPECT_EQ(std::memcmp(&a, &b, sizeof(double)), 0);
  }
}

TEST(Checkpoint, ByteLayout) {
  MlpModel m = MlpModel::zeros({2, 1});
  m.layers()[0].weights << 1.5, -2.0;
  m.layers()[0].bias << 0.25;
  const std::string bytes = checkpoint_bytes(m);
  ASSERT_EQ(bytes.size(), 8u + 4 + 2 * 4 + 3 * 8);
  EXPECT_EQ(bytes.substr(0, 8), "CSSTMDL1");
  EXPECT_EQ(static_cast<unsigned char>(bytes[8]), 2);
  EXPECT_EQ(static_cast<unsigned char>(bytes[12]), 2);
  EXPECT_EQ(static_cast<unsigned char>(bytes[16]), 1);
  double w0 = 0;
  double b0 = 0;
  std::memcpy(&w0, bytes.data() + 20, 8);
  std::memcpy(&b0, bytes.data() + 36, 8);
  EXPECT_EQ(w0, 1.5);
  EXPECT_EQ(b0, 0.25);
}

TEST(Checkpoint, CorruptionIsReported) {
  const std::string good = checkpoint_bytes(MlpModel({3, 4, 2}, 1));
  {
    std::istringstream in(good.substr(0, good.size() - 3));
    EXPECT_THROW(load_checkpoint(in), FormatError);
  }
  {
    std::istringstream in(good + "x");
    EXPECT_THROW(load_checkpoint(in), FormatError);
  }
  {
    std::string bad = good;
    bad[0] = 'X';
    std::istringstream in(bad);
    EXPECT_THROW(load_checkpoint(in), FormatError);
  }
  {
    std::string v2 = good;
    v2[7] = '2';
    std::istringstream in(v2);
    EXPECT_THROW(load_checkpoint(in), VersionError);
  }
  {
    std::istringstream in(std::string("CSST"));
    EXPECT_THROW(load_checkpoint(in), FormatError);
  }
  EXPECT_THROW(load_checkpoint(std::filesystem::path("/nonexistent/model.ckpt")), IoError);
}

}  // namespace
}  // namespace csst
