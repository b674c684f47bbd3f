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

// Cost-sensitive self-training: the inner SGD round on
//   L_s^hyb + lambda_u L_u^wt
// and the outer Lagrangian loops for worst-case recall (exponentiated
// gradient on the simplex) and coverage-constrained mean recall (projected
// gradient on lambda >= 0). ERM and confidence-thresholded self-training are
// the same loop with G = I.

#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "csst/common.hpp"
#include "csst/data.hpp"
#include "csst/gain.hpp"
#include "csst/losses.hpp"
#include "csst/metrics.hpp"
#include "csst/model.hpp"

namespace csst {

enum class Objective { kMinRecall, kCoverage, kErm, kVanilla };
enum class PseudoMode { kHard, kSharpen };

std::string to_string(Objective o);
Objective parse_objective(const std::string& s);  // min-recall|coverage|erm|vanilla
std::string to_string(PseudoMode m);
PseudoMode parse_pseudo_mode(const std::string& s);  // hard|sharpen
std::string to_string(ThresholdMode m);
ThresholdMode parse_threshold_mode(const std::string& s);  // kl|confidence

struct TrainConfig {
  Objective objective = Objective::kMinRecall;
  double tau = 0.05;
  double lambda_u = 1.0;
  int batch_labeled = 64;
  int batch_unlabeled = 256;
  double lr = 0.03;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  double omega = 0.25;
  int inner_steps = 32;
  int outer_rounds = 60;
  PseudoMode pseudo_mode = PseudoMode::kHard;
  double sharpen_temperature = 0.5;
  ThresholdMode threshold_mode = ThresholdMode::kKl;
  double coverage_target = 0.0;  // 0 selects 0.95 / K
  std::vector<int> hidden = {64};
  AugmentConfig augment;
  std::uint64_t seed = 0;

  // DomainError on tau < 0, lambda_u < 0, omega < 0, non-positive batch
  // sizes or rates, negative step counts. omega = 0 freezes the multipliers.
  void validate() const;
  double resolved_coverage_target(int k) const;
};

nlohmann::json to_json(const TrainConfig& cfg);
// Overlays `j` onto `base`; unknown keys raise FormatError.
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});

// hard: one-hot at the argmax; sharpen: p^(1/T) renormalized.
ProbVector pseudo_label(const ProbVector& p_weak, PseudoMode mode,
                        double temperature = 1.0);

struct GroupMetric {
  std::string name;
  double recall = 0.0;
  double coverage = 0.0;
};

struct MetricsReport {
  Vector recall;
  Vector coverage;
  Vector precision;  // NaN where the class is never predicted
  double mean_recall = 0.0;
  double worst_case_recall = 0.0;
  double min_coverage = 0.0;
  double accuracy = 0.0;
  double csl_value = 0.0;
  double err_w = 0.0;
  std::vector<GroupMetric> groups;
  Matrix confusion;  // joint probabilities
  std::size_t samples = 0;
};

// All metrics from one confusion matrix; err_w uses w = diag(pi) G with pi
// the row sums of `c`. UndefinedMetricError if a class has no samples.
MetricsReport metrics_report(const ConfusionMatrix& c, const GainMatrix& g,
                             const GroupPartition* groups = nullptr);

ConfusionMatrix confusion_on(const MlpModel& model, const LabeledSet& set, int k);

// One deterministic forward pass per sample, no augmentation.
MetricsReport evaluate(const MlpModel& model, const LabeledSet& eval_set,
                       const GainMatrix& g, const GroupPartition* groups = nullptr);

nlohmann::json to_json(const MetricsReport& r);

struct TrainingState {
  MlpModel model;
  OptimizerState optimizer;

  TrainingState(MlpModel m, const TrainConfig& cfg);
};

struct RoundStats {
  double loss_sup = 0.0;   // mean over steps
  double loss_cons = 0.0;  // mean over steps, already multiplied by lambda_u
  double mask_rate = 0.0;  // fraction of unlabeled samples passing the mask
};

// cfg.inner_steps SGD steps. Labeled batches use weak views; pseudo-labels
// come from weak views and the consistency term from strong views. When
// lambda_u == 0 no unlabeled data is drawn, so the run matches pure
// supervised training draw for draw.
RoundStats train_round(TrainingState& state, const Dataset& data,
                       const GainMatrix& g, const TrainConfig& cfg, Rng& rng);

struct TrajectoryRow {
  int round = 0;
  long step = 0;  // cumulative SGD steps
  RoundStats stats;
  double worst_recall = 0.0;
  double mean_recall = 0.0;
  double min_coverage = 0.0;
  double err_w = 0.0;
  Vector lambda;
};

struct TrainResult {
  MlpModel model;
  GainMatrix gain;
  std::vector<TrajectoryRow> trajectory;
};

// Layer sizes {d, hidden..., K}.
std::vector<int> model_layout(const Dataset& data, const TrainConfig& cfg);

TrainResult run_csst_min_recall(const Dataset& data, const LabeledSet& val,
                                const TrainConfig& cfg);
TrainResult run_csst_coverage(const Dataset& data, const LabeledSet& val,
                              const TrainConfig& cfg);
// erm: G = I, no unlabeled term. vanilla: G = I, confidence threshold.
// `val` only feeds the trajectory columns.
TrainResult run_baseline(const Dataset& data, const LabeledSet& val,
                         const TrainConfig& cfg);
// Dispatches on cfg.objective.
TrainResult run_training(const Dataset& data, const LabeledSet& val,
                         const TrainConfig& cfg);

// `round,step,loss_sup,loss_cons,mask_rate,worst_recall,mean_recall,
// min_coverage,err_w,lambda_0..lambda_{K-1}`.
void write_trajectory_csv(std::ostream& out, const std::vector<TrajectoryRow>& rows);

}  // namespace csst
