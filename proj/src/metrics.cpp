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

#include "csst/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <tuple>

#include "csst/error.hpp"

namespace csst {
namespace {

void check_class(const ConfusionMatrix& c, int i) {
  if (i < 0 || i >= c.k()) {
    throw ShapeError("class index " + std::to_string(i) + " out of range");
  }
}

}  // namespace

ConfusionMatrix::ConfusionMatrix(Matrix joint, std::size_t sample_count)
    : joint_(std::move(joint)), sample_count_(sample_count) {
  if (joint_.rows() != joint_.cols() || joint_.rows() == 0) {
    throw ShapeError("confusion matrix must be square and nonempty");
  }
  if (!joint_.allFinite() || (joint_.array() < 0.0).any()) {
    throw DomainError("confusion matrix entries must be finite and >= 0");
  }
  if (std::abs(joint_.sum() - 1.0) > 1e-9) {
    throw DomainError("confusion matrix entries must sum to one");
  }
}

WeightMatrix::WeightMatrix(Matrix entries) : entries_(std::move(entries)) {
  if (entries_.rows() != entries_.cols() || entries_.rows() == 0) {
    throw ShapeError("weight matrix must be square and nonempty");
  }
  if (!entries_.allFinite() || (entries_.array() < 0.0).any()) {
    throw DomainError("weights must be finite and nonnegative");
  }
  l1_ = entries_.sum();
  if (!(l1_ > 0.0)) throw DomainError("weight matrix must not be zero");
}

GroupPartition::GroupPartition(std::vector<int> group_of_class,
                               std::vector<std::string> names)
    : group_of_class_(std::move(group_of_class)), names_(std::move(names)) {
  std::vector<int> sizes(names_.size(), 0);
  for (int g : group_of_class_) {
    if (g < 0 || g >= static_cast<int>(names_.size())) {
      throw DomainError("class assigned to unknown group " + std::to_string(g));
    }
    ++sizes[g];
  }
  for (std::size_t g = 0; g < sizes.size(); ++g) {
    if (sizes[g] == 0) throw DomainError("group '" + names_[g] + "' is empty");
  }
}

std::vector<int> GroupPartition::members(int group) const {
  std::vector<int> out;
  for (int i = 0; i < num_classes(); ++i) {
    if (group_of_class_[i] == group) out.push_back(i);
  }
  return out;
}

int GroupPartition::find(const std::string& name) const {
  const auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) throw DomainError("unknown group '" + name + "'");
  return static_cast<int>(it - names_.begin());
}

ConfusionMatrix confusion_from_predictions(std::span<const int> labels,
                                           std::span<const int> preds, int k) {
  if (labels.size() != preds.size()) {
    throw ShapeError("labels and predictions differ in length");
  }
  if (labels.empty()) throw ShapeError("no samples");
  if (k <= 0) throw DomainError("class count must be positive");
  Matrix counts = Matrix::Zero(k, k);
  for (std::size_t t = 0; t < labels.size(); ++t) {
    if (labels[t] < 0 || labels[t] >= k || preds[t] < 0 || preds[t] >= k) {
      throw DomainError("class index out of range at sample " +
                        std::to_string(t));
    }
    counts(labels[t], preds[t]) += 1.0;
  }
  const double n = static_cast<double>(labels.size());
  return ConfusionMatrix(counts / n, labels.size());
}

double recall(const ConfusionMatrix& c, int i) {
  check_class(c, i);
  const double row = c.joint().row(i).sum();
  if (!(row > 0.0)) {
    throw UndefinedMetricError("recall undefined: class " + std::to_string(i) +
                               " has no samples");
  }
  return c(i, i) / row;
}

double coverage(const ConfusionMatrix& c, int i) {
  check_class(c, i);
  return c.joint().col(i).sum();
}

double precision(const ConfusionMatrix& c, int i) {
  check_class(c, i);
  const double col = c.joint().col(i).sum();
  if (!(col > 0.0)) {
    throw UndefinedMetricError("precision undefined: class " +
                               std::to_string(i) + " is never predicted");
  }
  return c(i, i) / col;
}

double accuracy(const ConfusionMatrix& c) { return c.joint().trace(); }

Vector recalls(const ConfusionMatrix& c) {
  Vector out(c.k());
  for (int i = 0; i < c.k(); ++i) out[i] = recall(c, i);
  return out;
}

Vector coverages(const ConfusionMatrix& c) {
  return c.joint().colwise().sum().transpose();
}

double mean_recall(const ConfusionMatrix& c) { return recalls(c).mean(); }

double worst_case_recall(const ConfusionMatrix& c) {
  return recalls(c).minCoeff();
}

double group_recall(const ConfusionMatrix& c, const GroupPartition& g,
                    int group) {
  if (g.num_classes() != c.k()) throw ShapeError("partition size mismatch");
  double diag = 0.0;
  double mass = 0.0;
  for (int i : g.members(group)) {
    diag += c(i, i);
    mass += c.joint().row(i).sum();
  }
  if (!(mass > 0.0)) {
    throw UndefinedMetricError("group recall undefined: group '" +
                               g.name(group) + "' has no samples");
  }
  return diag / mass;
}

double group_coverage(const ConfusionMatrix& c, const GroupPartition& g,
                      int group) {
  if (g.num_classes() != c.k()) throw ShapeError("partition size mismatch");
  double total = 0.0;
  for (int i : g.members(group)) total += coverage(c, i);
  return total;
}

double csl_objective(const GainMatrix& g, const ConfusionMatrix& c) {
  if (g.k() != c.k()) throw ShapeError("gain and confusion sizes differ");
  return g.entries().cwiseProduct(c.joint()).sum();
}

WeightMatrix gain_to_weight(const GainMatrix& g, const Vector& priors) {
  if (priors.size() != g.k()) throw ShapeError("prior vector length");
  if ((priors.array() <= 0.0).any()) {
    throw DomainError("priors must be positive");
  }
  if (std::abs(priors.sum() - 1.0) > 1e-9) {
    throw DomainError("priors must sum to one");
  }
  Matrix w = priors.asDiagonal() * g.entries();
  if ((w.array() < 0.0).any()) {
    throw DomainError("gain produces negative weights; shift its rows");
  }
  return WeightMatrix(std::move(w));
}

double weighted_error_from_confusion(const WeightMatrix& w,
                                     const ConfusionMatrix& c,
                                     const Vector& priors) {
  if (w.k() != c.k() || priors.size() != c.k()) {
    throw ShapeError("weighted error operands differ in size");
  }
  double err = 0.0;
  for (int i = 0; i < c.k(); ++i) {
    if (!(priors[i] > 0.0)) {
      throw DomainError("prior of class " + std::to_string(i) + " is zero");
    }
    for (int j = 0; j < c.k(); ++j) {
      err += w.entries()(i, j) * (1.0 - c(i, j) / priors[i]);
    }
  }
  return err;
}

void write_confusion_csv(std::ostream& out, const ConfusionMatrix& c) {
  out << "i,j,value\n" << std::setprecision(17);
  for (int i = 0; i < c.k(); ++i) {
    for (int j = 0; j < c.k(); ++j) out << i << ',' << j << ',' << c(i, j) << '\n';
  }
}

ConfusionMatrix read_confusion_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "i,j,value") {
    throw FormatError("confusion CSV: missing 'i,j,value' header");
  }
  std::vector<std::tuple<int, int, double>> cells;
  int k = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream fields(line);
    int i = -1;
    int j = -1;
    double v = 0.0;
    char c1 = 0;
    char c2 = 0;
    if (!(fields >> i >> c1 >> j >> c2 >> v) || c1 != ',' || c2 != ',' || i < 0 ||
        j < 0) {
      throw FormatError("confusion CSV: malformed row '" + line + "'");
    }
    cells.emplace_back(i, j, v);
    k = std::max({k, i + 1, j + 1});
  }
  if (cells.size() != static_cast<std::size_t>(k) * k) {
    throw FormatError("confusion CSV: expected a full K x K grid");
  }
  Matrix joint = Matrix::Zero(k, k);
  for (const auto& [i, j, v] : cells) joint(i, j) = v;
  return ConfusionMatrix(std::move(joint), 0);
}

std::vector<MetricRow> metric_rows(const ConfusionMatrix& c) {
  std::vector<MetricRow> rows;
  bool all_recalls = true;
  for (int i = 0; i < c.k(); ++i) {
    try {
      rows.push_back({"recall", i, recall(c, i)});
    } catch (const UndefinedMetricError&) {
      all_recalls = false;
    }
  }
  for (int i = 0; i < c.k(); ++i) rows.push_back({"coverage", i, coverage(c, i)});
  for (int i = 0; i < c.k(); ++i) {
    try {
      rows.push_back({"precision", i, precision(c, i)});
    } catch (const UndefinedMetricError&) {
    }
  }
  rows.push_back({"accuracy", -1, accuracy(c)});
  if (all_recalls) {
    rows.push_back({"mean_recall", -1, mean_recall(c)});
    rows.push_back({"worst_case_recall", -1, worst_case_recall(c)});
  }
  rows.push_back({"min_coverage", -1, coverages(c).minCoeff()});
  return rows;
}

void write_metric_rows_csv(std::ostream& out,
                           const std::vector<MetricRow>& rows) {
  out << "metric,class,value\n" << std::setprecision(17);
  for (const auto& r : rows) {
    out << r.metric << ',';
    if (r.cls >= 0) out << r.cls;
    out << ',' << r.value << '\n';
  }
}

}  // namespace csst
