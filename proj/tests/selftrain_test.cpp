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

#include "csst/selftrain.hpp"

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "csst/error.hpp"
#include "test_util.hpp"

namespace csst {
namespace {

using testing::combined_gradient;
using testing::MicroBatch;

ProbVector pv(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return ProbVector(out);
}

struct Toy {
  Dataset data;
  LabeledSet val;
};

// Three classes in 4-D, mildly imbalanced, with held-out validation data.
Toy toy(double rho = 5.0, double separation = 3.0, std::uint64_t seed = 1) {
  const MixtureModel m = make_long_tail_mixture(3, 4, rho, separation);
  const LabeledSet pool = sample_mixture(m, 2000, seed);
  Toy t;
  t.data = split_semi(pool, 3, 4.0, 120, seed + 1, true).dataset;
  t.data.rho = rho;
  t.val = sample_mixture_per_class(m, {60, 60, 60}, seed + 2);
  return t;
}

TrainConfig small_config(Objective o) {
  TrainConfig cfg;
  cfg.objective = o;
  cfg.batch_labeled = 16;
  cfg.batch_unlabeled = 32;
  cfg.inner_steps = 8;
  cfg.outer_rounds = 6;
  cfg.hidden = {16};
  cfg.seed = 3;
  return cfg;
}

std::string trajectory_csv(const std::vector<TrajectoryRow>& rows) {
  std::ostringstream out;
  write_trajectory_csv(out, rows);
  return out.str();
}

bool same_parameters(const MlpModel& a, const MlpModel& b) {
  if (a.parameter_count() != b.parameter_count()) return false;
  for (std::size_t i = 0; i < a.parameter_count(); ++i) {
    if (a.parameter(i) != b.parameter(i)) return false;
  }
  return true;
}

TEST(PseudoLabel, Examples) {
  EXPECT_EQ(pseudo_label(pv({0.7, 0.3}), PseudoMode::kHard).values(),
            ProbVector::one_hot(2, 0).values());
  EXPECT_EQ(pseudo_label(pv({0.4, 0.4, 0.2}), PseudoMode::kHard).argmax(), 0);
  const ProbVector p = pv({0.2, 0.5, 0.3});
  EXPECT_TRUE(pseudo_label(p, PseudoMode::kSharpen, 1.0).values().isApprox(p.values(), 1e-15));
  EXPECT_GT(pseudo_label(pv({0.7, 0.3}), PseudoMode::kSharpen, 0.01)[0], 1 - 1e-9);
  // T = 0.5 squares then renormalizes.
  const ProbVector s = pseudo_label(pv({0.6, 0.4}), PseudoMode::kSharpen, 0.5);
  EXPECT_NEAR(s[0], 0.36 / 0.52, 1e-14);
  EXPECT_THROW(pseudo_label(p, PseudoMode::kSharpen, 0.0), DomainError);
}

TEST(TrainConfig, DefaultsAndValidation) {
  const TrainConfig cfg;
  EXPECT_EQ(cfg.tau, 0.05);
  EXPECT_EQ(cfg.lambda_u, 1.0);
  EXPECT_EQ(cfg.omega, 0.25);
  EXPECT_EQ(cfg.inner_steps, 32);
  EXPECT_EQ(cfg.batch_labeled * 4, cfg.batch_unlabeled);
  EXPECT_NEAR(std::exp(-cfg.tau), 0.95, 2e-3);
  EXPECT_DOUBLE_EQ(cfg.resolved_coverage_target(10), 0.095);
  cfg.validate();
  TrainConfig bad = cfg;
  bad.tau = -1;
  EXPECT_THROW(bad.validate(), DomainError);
  bad = cfg;
  bad.lambda_u = -0.5;
  EXPECT_THROW(bad.validate(), DomainError);
  bad = cfg;
  bad.batch_unlabeled = 0;
  EXPECT_THROW(bad.validate(), DomainError);
}

TEST(TrainConfig, JsonRoundTripAndUnknownKeys) {
  TrainConfig cfg = small_config(Objective::kCoverage);
  cfg.pseudo_mode = PseudoMode::kSharpen;
  cfg.threshold_mode = ThresholdMode::kConfidence;
  cfg.augment.strong_sigma = 0.4;
  const TrainConfig back = train_config_from_json(to_json(cfg));
  EXPECT_EQ(to_json(back), to_json(cfg));

  const auto overlay = train_config_from_json(nlohmann::json{{"tau", 0.1}}, cfg);
  EXPECT_EQ(overlay.tau, 0.1);
  EXPECT_EQ(overlay.inner_steps, cfg.inner_steps);

  EXPECT_THROW(train_config_from_json(nlohmann::json{{"taus", 0.1}}), FormatError);
  EXPECT_THROW(train_config_from_json(nlohmann::json{{"augment", {{"sigma", 1}}}}),
               FormatError);
  EXPECT_THROW(train_config_from_json(nlohmann::json{{"tau", "high"}}), FormatError);
  EXPECT_THROW(parse_objective("fixmatch"), DomainError);
  EXPECT_EQ(parse_objective("vanilla"), Objective::kVanilla);
  EXPECT_EQ(parse_threshold_mode("confidence"), ThresholdMode::kConfidence);
}

TEST(TrainRound, ZeroInnerStepsLeavesModel) {
  const Toy t = toy();
  TrainConfig cfg = small_config(Objective::kMinRecall);
  cfg.inner_steps = 0;
  TrainingState state(MlpModel(model_layout(t.data, cfg), 1), cfg);
  const MlpModel before = state.model;
  Rng rng(1);
  const RoundStats s = train_round(state, t.data, GainMatrix::identity(3), cfg, rng);
  EXPECT_TRUE(same_parameters(before, state.model));
  EXPECT_EQ(s.loss_sup, 0.0);
}

TEST(TrainRound, OneStepMatchesHandComputedUpdate) {
  // One labeled and one unlabeled point with identity augmentations, so the
  // batch content is known.
  Dataset data;
  data.k = 3;
  data.dim = 2;
  data.labeled.x.resize(1, 2);
  data.labeled.x << 0.4, -0.7;
  data.labeled.y = {2};
  data.unlabeled.resize(1, 2);
  data.unlabeled << 1.5, 0.2;

  TrainConfig cfg;
  cfg.batch_labeled = 1;
  cfg.batch_unlabeled = 1;
  cfg.inner_steps = 1;
  cfg.hidden = {5};
  cfg.tau = 10.0;  // admit the sample
  cfg.augment.weak_sigma = 0;
  cfg.augment.strong_sigma = 0;
  cfg.augment.strong_mask_prob = 0;
  Matrix gm(3, 3);
  gm << 2.0, 0.5, 0.0, 0.1, 1.0, 0.3, 0.0, 0.2, 4.0;
  const GainMatrix g(gm);

  TrainingState state(MlpModel({2, 5, 3}, 21), cfg);
  const MlpModel before = state.model;
  Rng rng(2);
  train_round(state, data, g, cfg, rng);

  MicroBatch b;
  b.labeled_x = data.labeled.x;
  b.labels = data.labeled.y;
  b.strong_x = data.unlabeled;
  const ProbVector p_weak = softmax(forward(before, row_span(data.unlabeled, 0)));
  b.targets = {consistency_target_weights(g, ProbVector::one_hot(3, p_weak.argmax()))};
  b.mask = {true};
  const Gradients grads = combined_gradient(before, b, g, cfg.lambda_u);

  MlpModel expect = before;
  OptimizerState opt(expect, cfg.lr, cfg.momentum, cfg.weight_decay);
  sgd_step(expect, grads, opt);
  for (std::size_t i = 0; i < expect.parameter_count(); ++i) {
    EXPECT_NEAR(state.model.parameter(i), expect.parameter(i), 1e-12);
  }
}

TEST(TrainRound, ZeroUnlabeledWeightIsSupervisedOnly) {
  const Toy t = toy();
  TrainConfig cfg = small_config(Objective::kMinRecall);
  cfg.lambda_u = 0.0;
  Dataset supervised = t.data;
  supervised.unlabeled.resize(0, t.data.dim);

  Matrix gm = Matrix::Zero(3, 3);
  gm.diagonal() << 0.5, 1.5, 3.0;
  const GainMatrix g(gm);
  TrainingState a(MlpModel(model_layout(t.data, cfg), 4), cfg);
  TrainingState b(MlpModel(model_layout(t.data, cfg), 4), cfg);
  Rng ra(5);
  Rng rb(5);
  const RoundStats sa = train_round(a, t.data, g, cfg, ra);
  const RoundStats sb = train_round(b, supervised, g, cfg, rb);
  EXPECT_TRUE(same_parameters(a.model, b.model));
  EXPECT_EQ(sa.loss_cons, 0.0);
  EXPECT_EQ(sa.mask_rate, 0.0);
  EXPECT_EQ(sa.loss_sup, sb.loss_sup);
  EXPECT_THROW(
      {
        TrainConfig with_u = cfg;
        with_u.lambda_u = 1.0;
        train_round(b, supervised, g, with_u, rb);
      },
      ShapeError);
}

TEST(TrainRound, DiagonalGainKlMaskEqualsConfidenceMask) {
  const Toy t = toy();
  TrainConfig cfg = small_config(Objective::kMinRecall);
  Matrix gm = Matrix::Zero(3, 3);
  gm.diagonal() << 0.4, 1.0, 7.0;
  const GainMatrix g(gm);
  TrainingState kl(MlpModel(model_layout(t.data, cfg), 8), cfg);
  TrainingState conf(MlpModel(model_layout(t.data, cfg), 8), cfg);
  TrainConfig cfg_conf = cfg;
  cfg_conf.threshold_mode = ThresholdMode::kConfidence;
  Rng r1(9);
  Rng r2(9);
  double mask_rate = 0;
  for (int round = 0; round < 4; ++round) {
    const RoundStats a = train_round(kl, t.data, g, cfg, r1);
    const RoundStats b = train_round(conf, t.data, g, cfg_conf, r2);
    EXPECT_EQ(a.mask_rate, b.mask_rate);
    mask_rate += a.mask_rate;
  }
  EXPECT_TRUE(same_parameters(kl.model, conf.model));
  EXPECT_GT(mask_rate, 0.0);

  // Same check on one full batch of model outputs.
  const Matrix logits = forward_logits(kl.model, t.data.unlabeled);
  int agree = 0;
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const ProbVector p = softmax(LogitVector(logits.row(r).transpose()));
    const ProbVector hard = pseudo_label(p, PseudoMode::kHard);
    agree += kl_threshold_mask(hard, p, g, cfg.tau) == confidence_mask(p, cfg.tau);
  }
  EXPECT_EQ(agree, logits.rows());
}

TEST(TrainRound, SupervisedLossDecreasesForLinearModel) {
  const Toy t = toy(5.0, 2.0);
  TrainConfig cfg = small_config(Objective::kMinRecall);
  cfg.hidden = {};
  cfg.lambda_u = 0.0;
  cfg.inner_steps = 32;
  Matrix gm = Matrix::Zero(3, 3);
  gm.diagonal() << 0.6, 1.2, 2.5;
  const GainMatrix g(gm);
  const auto full_loss = [&](const MlpModel& m) {
    const Matrix z = forward_logits(m, t.data.labeled.x);
    double s = 0;
    for (Eigen::Index r = 0; r < z.rows(); ++r) {
      s += hybrid_loss_logits(t.data.labeled.y[r], LogitVector(z.row(r).transpose()), g);
    }
    return s / static_cast<double>(z.rows());
  };
  double drop = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    TrainingState s(MlpModel(model_layout(t.data, cfg), seed), cfg);
    const double before = full_loss(s.model);
    Rng rng(seed);
    train_round(s, t.data, g, cfg, rng);
    drop += before - full_loss(s.model);
  }
  EXPECT_GE(drop / 5, 0.0);
}

TEST(RunMinRecall, MultipliersStayOnSimplex) {
  const Toy t = toy();
  const TrainResult r = run_csst_min_recall(t.data, t.val, small_config(Objective::kMinRecall));
  ASSERT_EQ(r.trajectory.size(), 6u);
  for (const auto& row : r.trajectory) {
    EXPECT_NEAR(row.lambda.sum(), 1.0, 1e-9);
    EXPECT_GE(row.lambda.minCoeff(), 0.0);
    EXPECT_LE(row.worst_recall, row.mean_recall);
  }
  EXPECT_EQ(r.trajectory.back().step, 48);
  EXPECT_TRUE(r.gain.is_diagonal());
}

TEST(RunMinRecall, ZeroStepFreezesUniformMultipliers) {
  const Toy t = toy();
  TrainConfig cfg = small_config(Objective::kMinRecall);
  cfg.omega = 0.0;
  const TrainResult r = run_csst_min_recall(t.data, t.val, cfg);
  for (const auto& row : r.trajectory) {
    EXPECT_TRUE(row.lambda.isApprox(Vector::Constant(3, 1.0 / 3), 1e-15));
  }
  const Vector pi = t.data.labeled_priors();
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(r.gain(i, i), 1.0 / (3 * pi[i]), 1e-12);
}

TEST(RunMinRecall, RejectsWrongObjectiveAndMissingClass) {
  const Toy t = toy();
  EXPECT_THROW(run_csst_min_recall(t.data, t.val, small_config(Objective::kCoverage)),
               DomainError);
  LabeledSet partial;
  partial.x = t.val.x.topRows(5);
  partial.y.assign(5, 0);
  EXPECT_THROW(run_csst_min_recall(t.data, partial, small_config(Objective::kMinRecall)),
               UndefinedMetricError);
}

TEST(RunCoverage, MultipliersNonnegativeAndVanishWhenSatisfied) {
  const Toy t = toy(2.0, 6.0);
  TrainConfig cfg = small_config(Objective::kCoverage);
  cfg.outer_rounds = 10;
  cfg.coverage_target = 0.05;
  const TrainResult r = run_csst_coverage(t.data, t.val, cfg);
  for (const auto& row : r.trajectory) EXPECT_GE(row.lambda.minCoeff(), 0.0);
  EXPECT_GE(r.trajectory.back().min_coverage, 0.05);
  EXPECT_TRUE(r.trajectory.back().lambda.isZero());
  const GainMatrix mean_recall = coverage_gain(Vector::Zero(3), t.data.labeled_priors());
  EXPECT_TRUE(r.gain.entries().isApprox(mean_recall.entries()));
}

TEST(RunBaseline, VanillaWithoutUnlabeledWeightIsErm) {
  const Toy t = toy();
  TrainConfig erm = small_config(Objective::kErm);
  TrainConfig vanilla = small_config(Objective::kVanilla);
  vanilla.lambda_u = 0.0;
  const TrainResult a = run_baseline(t.data, t.val, erm);
  const TrainResult b = run_baseline(t.data, t.val, vanilla);
  EXPECT_EQ(trajectory_csv(a.trajectory), trajectory_csv(b.trajectory));
  EXPECT_TRUE(same_parameters(a.model, b.model));
  EXPECT_TRUE(a.trajectory.back().lambda.isZero());
  EXPECT_THROW(run_baseline(t.data, t.val, small_config(Objective::kMinRecall)), DomainError);
}

TEST(RunBaseline, ErmFitsSeparableBalancedData) {
  const Toy t = toy(1.0, 8.0);
  TrainConfig cfg = small_config(Objective::kErm);
  cfg.outer_rounds = 10;
  const TrainResult r = run_baseline(t.data, t.val, cfg);
  const MetricsReport rep = evaluate(r.model, t.data.labeled, GainMatrix::identity(3));
  EXPECT_GE(rep.accuracy, 0.99);
}

TEST(RunTraining, ReproducibleTrajectories) {
  const Toy t = toy();
  for (Objective o : {Objective::kMinRecall, Objective::kCoverage, Objective::kVanilla}) {
    const TrainConfig cfg = small_config(o);
    const std::string a = trajectory_csv(run_training(t.data, t.val, cfg).trajectory);
    const std::string b = trajectory_csv(run_training(t.data, t.val, cfg).trajectory);
    EXPECT_EQ(a, b);
  }
}

TEST(Trajectory, CsvHeader) {
  TrajectoryRow row;
  row.lambda = Vector::Constant(2, 0.5);
  std::istringstream in(trajectory_csv({row}));
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header,
            "round,step,loss_sup,loss_cons,mask_rate,worst_recall,mean_recall,"
            "min_coverage,err_w,lambda_0,lambda_1");
}

TEST(Evaluate, PerfectModelHasUnitRecalls) {
  // Linear scores <mean_c, x> - |mean_c|^2 / 2 pick the nearest mean.
  const MixtureModel m = make_long_tail_mixture(3, 3, 1.0, 10.0);
  MlpModel model = MlpModel::zeros({3, 3});
  for (int c = 0; c < 3; ++c) {
    model.layers()[0].weights.row(c) = m.means()[c].transpose();
    model.layers()[0].bias[c] = -0.5 * m.means()[c].squaredNorm();
  }
  const LabeledSet s = sample_mixture_per_class(m, {50, 50, 50}, 1);
  const MetricsReport r = evaluate(model, s, GainMatrix::identity(3));
  EXPECT_EQ(r.worst_case_recall, 1.0);
  EXPECT_NEAR(r.accuracy, 1.0, 1e-12);
  EXPECT_NEAR(r.err_w, 0.0, 1e-12);
}

TEST(Evaluate, ConstantPredictor) {
  const Toy t = toy();
  MlpModel model = MlpModel::zeros({4, 3});
  model.layers()[0].bias << 0.0, 1.0, 0.0;
  const MetricsReport r = evaluate(model, t.val, GainMatrix::identity(3));
  EXPECT_EQ(r.coverage[1], 1.0);
  EXPECT_EQ(r.min_coverage, 0.0);
  EXPECT_TRUE(std::isnan(r.precision[0]));
  EXPECT_NEAR(r.precision[1], 1.0 / 3, 1e-12);
}

TEST(Evaluate, MatchesMetricsRecomputation) {
  const Toy t = toy();
  const MlpModel model(model_layout(t.data, small_config(Objective::kErm)), 12);
  Matrix gm = Matrix::Zero(3, 3);
  gm.diagonal() << 1.0, 2.0, 3.0;
  const GainMatrix g(gm);
  const GroupPartition groups({0, 1, 1}, {"head", "tail"});
  const MetricsReport r = evaluate(model, t.val, g, &groups);
  const ConfusionMatrix c =
      confusion_from_predictions(t.val.y, predict_batch(model, t.val.x), 3);
  EXPECT_EQ(r.confusion, c.joint());
  EXPECT_EQ(r.mean_recall, mean_recall(c));
  EXPECT_EQ(r.min_coverage, coverages(c).minCoeff());
  EXPECT_EQ(r.csl_value, csl_objective(g, c));
  EXPECT_NEAR(r.err_w,
              weighted_error_from_confusion(gain_to_weight(g, c.priors()), c, c.priors()),
              1e-15);
  ASSERT_EQ(r.groups.size(), 2u);
  EXPECT_EQ(r.groups[1].recall, group_recall(c, groups, 1));
  const nlohmann::json j = to_json(r);
  EXPECT_EQ(j["groups"][1]["name"], "tail");
  EXPECT_EQ(j["samples"], 180);
}

}  // namespace
}  // namespace csst
