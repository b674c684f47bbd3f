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
#include <iomanip>
#include <limits>
#include <ostream>

#include "csst/error.hpp"

namespace csst {
namespace {

// Sub-streams of cfg.seed.
enum Stream : std::uint64_t { kStreamInit = 1, kStreamTrain = 2 };

constexpr double kRecallFloor = 1e-6;

template <class E>
E parse_enum(const std::string& s,
             std::initializer_list<std::pair<const char*, E>> table,
             const char* what) {
  for (const auto& [name, value] : table) {
    if (s == name) return value;
  }
  throw DomainError(std::string("unknown ") + what + " '" + s + "'");
}

double json_number(const nlohmann::json& v, const std::string& key) {
  if (!v.is_number()) throw FormatError("config key '" + key + "' must be a number");
  return v.get<double>();
}

int json_int(const nlohmann::json& v, const std::string& key) {
  if (!v.is_number_integer()) {
    throw FormatError("config key '" + key + "' must be an integer");
  }
  return v.get<int>();
}

std::string json_string(const nlohmann::json& v, const std::string& key) {
  if (!v.is_string()) throw FormatError("config key '" + key + "' must be a string");
  return v.get<std::string>();
}

nlohmann::json vector_json(const Vector& v) {
  nlohmann::json out = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (std::isfinite(v[i])) {
      out.push_back(v[i]);
    } else {
      out.push_back(nullptr);
    }
  }
  return out;
}

TrajectoryRow make_row(int round, long step, const RoundStats& stats,
                       const MetricsReport& rep, const Vector& lambda) {
  TrajectoryRow row;
  row.round = round;
  row.step = step;
  row.stats = stats;
  row.worst_recall = rep.worst_case_recall;
  row.mean_recall = rep.mean_recall;
  row.min_coverage = rep.min_coverage;
  row.err_w = rep.err_w;
  row.lambda = lambda;
  return row;
}

void check_inputs(const Dataset& data, const LabeledSet& val) {
  if (data.labeled.size() == 0) throw ShapeError("labeled pool is empty");
  if (val.size() == 0) throw ShapeError("validation set is empty");
  if (val.x.cols() != data.dim) {
    throw ShapeError("validation features do not match the dataset dimension");
  }
}

}  // namespace

std::string to_string(Objective o) {
  switch (o) {
    case Objective::kMinRecall:
      return "min-recall";
    case Objective::kCoverage:
      return "coverage";
    case Objective::kErm:
      return "erm";
    case Objective::kVanilla:
      return "vanilla";
  }
  return "?";
}

Objective parse_objective(const std::string& s) {
  return parse_enum<Objective>(s,
                               {{"min-recall", Objective::kMinRecall},
                                {"coverage", Objective::kCoverage},
                                {"erm", Objective::kErm},
                                {"vanilla", Objective::kVanilla}},
                               "objective");
}

std::string to_string(PseudoMode m) {
  return m == PseudoMode::kHard ? "hard" : "sharpen";
}

PseudoMode parse_pseudo_mode(const std::string& s) {
  return parse_enum<PseudoMode>(
      s, {{"hard", PseudoMode::kHard}, {"sharpen", PseudoMode::kSharpen}},
      "pseudo mode");
}

std::string to_string(ThresholdMode m) {
  return m == ThresholdMode::kKl ? "kl" : "confidence";
}

ThresholdMode parse_threshold_mode(const std::string& s) {
  return parse_enum<ThresholdMode>(
      s, {{"kl", ThresholdMode::kKl}, {"confidence", ThresholdMode::kConfidence}},
      "threshold mode");
}

void TrainConfig::validate() const {
  if (!(tau >= 0.0)) throw DomainError("tau must be >= 0");
  if (!(lambda_u >= 0.0)) throw DomainError("lambda_u must be >= 0");
  if (!(omega >= 0.0)) throw DomainError("omega must be >= 0");
  if (batch_labeled <= 0 || batch_unlabeled <= 0) {
    throw DomainError("batch sizes must be positive");
  }
  if (!(lr > 0.0)) throw DomainError("learning rate must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) {
    throw DomainError("momentum must be in [0, 1)");
  }
  if (!(weight_decay >= 0.0)) throw DomainError("weight decay must be >= 0");
  if (inner_steps < 0 || outer_rounds < 0) {
    throw DomainError("step counts must be >= 0");
  }
  if (!(sharpen_temperature > 0.0)) {
    throw DomainError("sharpen temperature must be positive");
  }
  if (!(coverage_target >= 0.0 && coverage_target <= 1.0)) {
    throw DomainError("coverage target must be in [0, 1]");
  }
  for (int h : hidden) {
    if (h <= 0) throw DomainError("hidden layer widths must be positive");
  }
  augment.validate();
}

double TrainConfig::resolved_coverage_target(int k) const {
  return coverage_target > 0.0 ? coverage_target : default_coverage_target(k);
}

nlohmann::json to_json(const TrainConfig& cfg) {
  return {
      {"objective", to_string(cfg.objective)},
      {"tau", cfg.tau},
      {"lambda_u", cfg.lambda_u},
      {"batch_labeled", cfg.batch_labeled},
      {"batch_unlabeled", cfg.batch_unlabeled},
      {"lr", cfg.lr},
      {"momentum", cfg.momentum},
      {"weight_decay", cfg.weight_decay},
      {"omega", cfg.omega},
      {"inner_steps", cfg.inner_steps},
      {"outer_rounds", cfg.outer_rounds},
      {"pseudo_mode", to_string(cfg.pseudo_mode)},
      {"sharpen_temperature", cfg.sharpen_temperature},
      {"threshold_mode", to_string(cfg.threshold_mode)},
      {"coverage_target", cfg.coverage_target},
      {"hidden", cfg.hidden},
      {"augment",
       {{"weak_sigma", cfg.augment.weak_sigma},
        {"strong_sigma", cfg.augment.strong_sigma},
        {"strong_mask_prob", cfg.augment.strong_mask_prob},
        {"radius", cfg.augment.radius}}},
      {"seed", cfg.seed},
  };
}

TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base) {
  if (!j.is_object()) throw FormatError("config must be a JSON object");
  for (const auto& [key, v] : j.items()) {
    if (key == "objective") {
      base.objective = parse_objective(json_string(v, key));
    } else if (key == "tau") {
      base.tau = json_number(v, key);
    } else if (key == "lambda_u") {
      base.lambda_u = json_number(v, key);
    } else if (key == "batch_labeled") {
      base.batch_labeled = json_int(v, key);
    } else if (key == "batch_unlabeled") {
      base.batch_unlabeled = json_int(v, key);
    } else if (key == "lr") {
      base.lr = json_number(v, key);
    } else if (key == "momentum") {
      base.momentum = json_number(v, key);
    } else if (key == "weight_decay") {
      base.weight_decay = json_number(v, key);
    } else if (key == "omega") {
      base.omega = json_number(v, key);
    } else if (key == "inner_steps") {
      base.inner_steps = json_int(v, key);
    } else if (key == "outer_rounds") {
      base.outer_rounds = json_int(v, key);
    } else if (key == "pseudo_mode") {
      base.pseudo_mode = parse_pseudo_mode(json_string(v, key));
    } else if (key == "sharpen_temperature") {
      base.sharpen_temperature = json_number(v, key);
    } else if (key == "threshold_mode") {
      base.threshold_mode = parse_threshold_mode(json_string(v, key));
    } else if (key == "coverage_target") {
      base.coverage_target = json_number(v, key);
    } else if (key == "hidden") {
      if (!v.is_array()) throw FormatError("config key 'hidden' must be an array");
      base.hidden.clear();
      for (const auto& h : v) base.hidden.push_back(json_int(h, key));
    } else if (key == "augment") {
      if (!v.is_object()) throw FormatError("config key 'augment' must be an object");
      for (const auto& [akey, av] : v.items()) {
        const std::string full = "augment." + akey;
        if (akey == "weak_sigma") {
          base.augment.weak_sigma = json_number(av, full);
        } else if (akey == "strong_sigma") {
          base.augment.strong_sigma = json_number(av, full);
        } else if (akey == "strong_mask_prob") {
          base.augment.strong_mask_prob = json_number(av, full);
        } else if (akey == "radius") {
          base.augment.radius = json_number(av, full);
        } else {
          throw FormatError("unknown config key '" + full + "'");
        }
      }
    } else if (key == "seed") {
      if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
        throw FormatError("config key 'seed' must be a nonnegative integer");
      }
      base.seed = v.get<std::uint64_t>();
    } else {
      throw FormatError("unknown config key '" + key + "'");
    }
  }
  return base;
}

ProbVector pseudo_label(const ProbVector& p_weak, PseudoMode mode,
                        double temperature) {
  if (mode == PseudoMode::kHard) {
    return ProbVector::one_hot(p_weak.size(), p_weak.argmax());
  }
  if (!(temperature > 0.0)) throw DomainError("sharpen temperature must be positive");
  // Work in log space so that small temperatures do not underflow.
  Vector logs = p_weak.values().array().max(kProbFloor).log() / temperature;
  logs.array() -= logs.maxCoeff();
  Vector p = logs.array().exp();
  return ProbVector(p / p.sum());
}

MetricsReport metrics_report(const ConfusionMatrix& c, const GainMatrix& g,
                             const GroupPartition* groups) {
  if (g.k() != c.k()) throw ShapeError("gain and confusion sizes differ");
  MetricsReport r;
  r.recall = recalls(c);
  r.coverage = coverages(c);
  r.precision.resize(c.k());
  for (int i = 0; i < c.k(); ++i) {
    try {
      r.precision[i] = precision(c, i);
    } catch (const UndefinedMetricError&) {
      r.precision[i] = std::numeric_limits<double>::quiet_NaN();
    }
  }
  r.mean_recall = r.recall.mean();
  r.worst_case_recall = r.recall.minCoeff();
  r.min_coverage = r.coverage.minCoeff();
  r.accuracy = accuracy(c);
  r.csl_value = csl_objective(g, c);
  const Vector priors = c.priors();
  r.err_w = weighted_error_from_confusion(gain_to_weight(g, priors), c, priors);
  if (groups != nullptr) {
    for (int gi = 0; gi < groups->num_groups(); ++gi) {
      r.groups.push_back({groups->name(gi), group_recall(c, *groups, gi),
                          group_coverage(c, *groups, gi)});
    }
  }
  r.confusion = c.joint();
  r.samples = c.sample_count();
  return r;
}

ConfusionMatrix confusion_on(const MlpModel& model, const LabeledSet& set, int k) {
  if (set.size() == 0) throw ShapeError("evaluation set is empty");
  if (set.x.cols() != model.input_dim()) {
    throw ShapeError("evaluation features do not match the model input");
  }
  const std::vector<int> preds = predict_batch(model, set.x);
  return confusion_from_predictions(set.y, preds, k);
}

MetricsReport evaluate(const MlpModel& model, const LabeledSet& eval_set,
                       const GainMatrix& g, const GroupPartition* groups) {
  return metrics_report(confusion_on(model, eval_set, model.num_classes()), g,
                        groups);
}

nlohmann::json to_json(const MetricsReport& r) {
  nlohmann::json j = {
      {"recall", vector_json(r.recall)},
      {"coverage", vector_json(r.coverage)},
      {"precision", vector_json(r.precision)},
      {"mean_recall", r.mean_recall},
      {"worst_case_recall", r.worst_case_recall},
      {"min_coverage", r.min_coverage},
      {"accuracy", r.accuracy},
      {"csl_value", r.csl_value},
      {"err_w", r.err_w},
      {"samples", r.samples},
  };
  nlohmann::json confusion = nlohmann::json::array();
  for (Eigen::Index i = 0; i < r.confusion.rows(); ++i) {
    confusion.push_back(vector_json(r.confusion.row(i).transpose()));
  }
  j["confusion"] = std::move(confusion);
  if (!r.groups.empty()) {
    nlohmann::json groups = nlohmann::json::array();
    for (const auto& gm : r.groups) {
      groups.push_back(
          {{"name", gm.name}, {"recall", gm.recall}, {"coverage", gm.coverage}});
    }
    j["groups"] = std::move(groups);
  }
  return j;
}

TrainingState::TrainingState(MlpModel m, const TrainConfig& cfg)
    : model(std::move(m)),
      optimizer(model, cfg.lr, cfg.momentum, cfg.weight_decay) {}

RoundStats train_round(TrainingState& state, const Dataset& data,
                       const GainMatrix& g, const TrainConfig& cfg, Rng& rng) {
  const std::size_t n_l = data.labeled.size();
  const std::size_t n_u = static_cast<std::size_t>(data.unlabeled.rows());
  const bool use_unlabeled = cfg.lambda_u > 0.0;
  if (n_l == 0) throw ShapeError("labeled pool is empty");
  if (use_unlabeled && n_u == 0) {
    throw ShapeError("unlabeled pool is empty but lambda_u > 0");
  }
  if (g.k() != state.model.num_classes()) throw ShapeError("gain size != K");
  const Vector& d_diag = g.decomposition().d;
  const int dim = data.dim;
  const int k = data.k;

  std::uniform_int_distribution<std::size_t> pick_l(0, n_l - 1);
  std::uniform_int_distribution<std::size_t> pick_u(0, use_unlabeled ? n_u - 1 : 0);
  FeatureMatrix xs(cfg.batch_labeled, dim);
  std::vector<int> ys(cfg.batch_labeled);
  FeatureMatrix xw(use_unlabeled ? cfg.batch_unlabeled : 0, dim);
  FeatureMatrix xa(use_unlabeled ? cfg.batch_unlabeled : 0, dim);
  Gradients grads = Gradients::zeros_like(state.model);

  RoundStats stats;
  for (int step = 0; step < cfg.inner_steps; ++step) {
    for (int b = 0; b < cfg.batch_labeled; ++b) {
      const std::size_t idx = pick_l(rng);
      xs.row(b) = weak_augment(row_span(data.labeled.x, idx), cfg.augment, rng)
                      .transpose();
      ys[b] = data.labeled.y[idx];
    }
    grads.set_zero();

    const ForwardTrace sup = forward_batch(state.model, xs);
    Matrix dsup(cfg.batch_labeled, k);
    double loss_sup = 0.0;
    const double inv_bs = 1.0 / cfg.batch_labeled;
    for (int b = 0; b < cfg.batch_labeled; ++b) {
      const LogitVector z(sup.logits.row(b).transpose());
      loss_sup += hybrid_loss_logits(ys[b], z, g);
      dsup.row(b) = inv_bs * hybrid_loss_logits_grad(ys[b], z, g).transpose();
    }
    backward(state.model, sup, dsup, grads);
    stats.loss_sup += loss_sup * inv_bs;

    if (use_unlabeled) {
      for (int b = 0; b < cfg.batch_unlabeled; ++b) {
        const auto x = row_span(data.unlabeled, pick_u(rng));
        xw.row(b) = weak_augment(x, cfg.augment, rng).transpose();
        xa.row(b) = strong_augment(x, cfg.augment, rng).transpose();
      }
      // The pseudo-label branch carries no gradient.
      const Matrix weak_logits = forward_logits(state.model, xw);
      const ForwardTrace strong = forward_batch(state.model, xa);
      Matrix dcons = Matrix::Zero(cfg.batch_unlabeled, k);
      double loss_cons = 0.0;
      int selected = 0;
      const double scale = cfg.lambda_u / cfg.batch_unlabeled;
      for (int b = 0; b < cfg.batch_unlabeled; ++b) {
        const ProbVector p_weak = softmax(LogitVector(weak_logits.row(b).transpose()));
        const ProbVector pseudo =
            pseudo_label(p_weak, cfg.pseudo_mode, cfg.sharpen_temperature);
        const bool keep = cfg.threshold_mode == ThresholdMode::kKl
                              ? kl_threshold_mask(pseudo, p_weak, g, cfg.tau)
                              : confidence_mask(p_weak, cfg.tau);
        if (!keep) continue;
        ++selected;
        const Vector target = consistency_target_weights(g, pseudo);
        const LogitVector z(strong.logits.row(b).transpose());
        loss_cons += la_weighted_consistency(target, z, d_diag);
        dcons.row(b) = scale * la_weighted_consistency_grad(target, z, d_diag).transpose();
      }
      if (selected > 0) backward(state.model, strong, dcons, grads);
      stats.loss_cons += scale * loss_cons;
      stats.mask_rate += static_cast<double>(selected) / cfg.batch_unlabeled;
    }
    sgd_step(state.model, grads, state.optimizer);
  }
  if (cfg.inner_steps > 0) {
    stats.loss_sup /= cfg.inner_steps;
    stats.loss_cons /= cfg.inner_steps;
    stats.mask_rate /= cfg.inner_steps;
  }
  if (!state.model.all_finite()) throw DomainError("training diverged");
  return stats;
}

std::vector<int> model_layout(const Dataset& data, const TrainConfig& cfg) {
  std::vector<int> sizes{data.dim};
  sizes.insert(sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
  sizes.push_back(data.k);
  return sizes;
}

TrainResult run_csst_min_recall(const Dataset& data, const LabeledSet& val,
                                const TrainConfig& cfg) {
  if (cfg.objective != Objective::kMinRecall) {
    throw DomainError("run_csst_min_recall needs objective min-recall");
  }
  cfg.validate();
  check_inputs(data, val);
  const Vector priors = data.labeled_priors();
  TrainingState state(MlpModel(model_layout(data, cfg), derive_seed(cfg.seed, kStreamInit)),
                      cfg);
  Rng rng(derive_seed(cfg.seed, kStreamTrain));
  LagrangeState lambda = LagrangeState::uniform_simplex(data.k, cfg.omega);
  GainMatrix g = min_recall_gain(lambda.lambda(), priors);
  std::vector<TrajectoryRow> rows;
  long steps = 0;
  for (int t = 0; t < cfg.outer_rounds; ++t) {
    const Vector rec =
        recalls(confusion_on(state.model, val, data.k)).cwiseMax(kRecallFloor);
    lambda = exp_gradient_update(lambda, rec, cfg.omega);
    g = min_recall_gain(lambda.lambda(), priors);
    const RoundStats stats = train_round(state, data, g, cfg, rng);
    steps += cfg.inner_steps;
    rows.push_back(make_row(t, steps, stats, evaluate(state.model, val, g),
                            lambda.lambda()));
  }
  return {std::move(state.model), std::move(g), std::move(rows)};
}

TrainResult run_csst_coverage(const Dataset& data, const LabeledSet& val,
                              const TrainConfig& cfg) {
  if (cfg.objective != Objective::kCoverage) {
    throw DomainError("run_csst_coverage needs objective coverage");
  }
  cfg.validate();
  check_inputs(data, val);
  const Vector priors = data.labeled_priors();
  const double target = cfg.resolved_coverage_target(data.k);
  TrainingState state(MlpModel(model_layout(data, cfg), derive_seed(cfg.seed, kStreamInit)),
                      cfg);
  Rng rng(derive_seed(cfg.seed, kStreamTrain));
  LagrangeState lambda = LagrangeState::zeros(data.k, cfg.omega);
  GainMatrix g = coverage_gain(lambda.lambda(), priors);
  std::vector<TrajectoryRow> rows;
  long steps = 0;
  for (int t = 0; t < cfg.outer_rounds; ++t) {
    const Vector cov = coverages(confusion_on(state.model, val, data.k));
    lambda = proj_gradient_update(lambda, cov, cfg.omega, target);
    g = coverage_gain(lambda.lambda(), priors);
    const RoundStats stats = train_round(state, data, g, cfg, rng);
    steps += cfg.inner_steps;
    rows.push_back(make_row(t, steps, stats, evaluate(state.model, val, g),
                            lambda.lambda()));
  }
  return {std::move(state.model), std::move(g), std::move(rows)};
}

TrainResult run_baseline(const Dataset& data, const LabeledSet& val,
                         const TrainConfig& cfg) {
  if (cfg.objective != Objective::kErm && cfg.objective != Objective::kVanilla) {
    throw DomainError("run_baseline needs objective erm or vanilla");
  }
  TrainConfig run = cfg;
  if (run.objective == Objective::kErm) run.lambda_u = 0.0;
  run.threshold_mode = ThresholdMode::kConfidence;
  run.validate();
  check_inputs(data, val);
  TrainingState state(MlpModel(model_layout(data, run), derive_seed(run.seed, kStreamInit)),
                      run);
  Rng rng(derive_seed(run.seed, kStreamTrain));
  GainMatrix g = GainMatrix::identity(data.k);
  const Vector no_lambda = Vector::Zero(data.k);
  std::vector<TrajectoryRow> rows;
  long steps = 0;
  for (int t = 0; t < run.outer_rounds; ++t) {
    const RoundStats stats = train_round(state, data, g, run, rng);
    steps += run.inner_steps;
    rows.push_back(
        make_row(t, steps, stats, evaluate(state.model, val, g), no_lambda));
  }
  return {std::move(state.model), std::move(g), std::move(rows)};
}

TrainResult run_training(const Dataset& data, const LabeledSet& val,
                         const TrainConfig& cfg) {
  switch (cfg.objective) {
    case Objective::kMinRecall:
      return run_csst_min_recall(data, val, cfg);
    case Objective::kCoverage:
      return run_csst_coverage(data, val, cfg);
    case Objective::kErm:
    case Objective::kVanilla:
      return run_baseline(data, val, cfg);
  }
  throw DomainError("unknown objective");
}

void write_trajectory_csv(std::ostream& out, const std::vector<TrajectoryRow>& rows) {
  const Eigen::Index k = rows.empty() ? 0 : rows.front().lambda.size();
  out << "round,step,loss_sup,loss_cons,mask_rate,worst_recall,mean_recall,"
         "min_coverage,err_w";
  for (Eigen::Index i = 0; i < k; ++i) out << ",lambda_" << i;
  out << '\n' << std::setprecision(17);
  for (const auto& r : rows) {
    out << r.round << ',' << r.step << ',' << r.stats.loss_sup << ','
        << r.stats.loss_cons << ',' << r.stats.mask_rate << ',' << r.worst_recall
        << ',' << r.mean_recall << ',' << r.min_coverage << ',' << r.err_w;
    for (Eigen::Index i = 0; i < k; ++i) out << ',' << r.lambda[i];
    out << '\n';
  }
}

}  // namespace csst
