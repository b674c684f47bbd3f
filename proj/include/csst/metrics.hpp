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

// Confusion-matrix metrics.
//
// A ConfusionMatrix holds the empirical joint distribution of
// (true class, predicted class): entry (i, j) is the fraction of samples with
// label i that were predicted as j. Every metric here is a function of that
// joint, so recall_i = C_ii / sum_j C_ij, cov_i = sum_j C_ji, and so on.

#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "csst/common.hpp"
#include "csst/gain.hpp"

namespace csst {

class ConfusionMatrix {
 public:
  // `joint` must be square with nonnegative entries summing to one.
  ConfusionMatrix(Matrix joint, std::size_t sample_count);

  int k() const { return static_cast<int>(joint_.rows()); }
  const Matrix& joint() const { return joint_; }
  double operator()(int i, int j) const { return joint_(i, j); }
  std::size_t sample_count() const { return sample_count_; }

  // Row sums: the empirical prior of each true class.
  Vector priors() const { return joint_.rowwise().sum(); }

 private:
  Matrix joint_;
  std::size_t sample_count_;
};

// Nonnegative K x K weights of a weighted error, with |w|_1 > 0.
class WeightMatrix {
 public:
  explicit WeightMatrix(Matrix entries);

  int k() const { return static_cast<int>(entries_.rows()); }
  const Matrix& entries() const { return entries_; }
  double l1() const { return l1_; }
  // sum_j w_ij for each i.
  Vector row_mass() const { return entries_.rowwise().sum(); }

 private:
  Matrix entries_;
  double l1_;
};

// Assignment of classes to named groups (e.g. head / tail).
class GroupPartition {
 public:
  GroupPartition(std::vector<int> group_of_class, std::vector<std::string> names);

  int num_groups() const { return static_cast<int>(names_.size()); }
  int num_classes() const { return static_cast<int>(group_of_class_.size()); }
  const std::string& name(int group) const { return names_.at(group); }
  int group_of(int cls) const { return group_of_class_.at(cls); }
  std::vector<int> members(int group) const;
  // Index of the group called `name`; throws DomainError when absent.
  int find(const std::string& name) const;

 private:
  std::vector<int> group_of_class_;
  std::vector<std::string> names_;
};

ConfusionMatrix confusion_from_predictions(std::span<const int> labels,
                                           std::span<const int> preds, int k);

double recall(const ConfusionMatrix& c, int i);
double coverage(const ConfusionMatrix& c, int i);
double precision(const ConfusionMatrix& c, int i);
double accuracy(const ConfusionMatrix& c);
double mean_recall(const ConfusionMatrix& c);
double worst_case_recall(const ConfusionMatrix& c);
Vector recalls(const ConfusionMatrix& c);
Vector coverages(const ConfusionMatrix& c);

// Pooled within the group: sum of diagonal mass over sum of row mass.
double group_recall(const ConfusionMatrix& c, const GroupPartition& g,
                    int group);
double group_coverage(const ConfusionMatrix& c, const GroupPartition& g,
                      int group);

// sum_ij G_ij C_ij.
double csl_objective(const GainMatrix& g, const ConfusionMatrix& c);

// w_ij = G_ij pi_i. Rejects negative results; shift rows of G first if
// needed (a constant added to row i moves the CSL value by c pi_i for every
// classifier, so the maximizers do not change).
WeightMatrix gain_to_weight(const GainMatrix& g, const Vector& priors);

// sum_ij w_ij (1 - C_ij / pi_i), where C_ij / pi_i = P(F(x) = j | y = i).
double weighted_error_from_confusion(const WeightMatrix& w,
                                     const ConfusionMatrix& c,
                                     const Vector& priors);

// `i,j,value`
void write_confusion_csv(std::ostream& out, const ConfusionMatrix& c);
ConfusionMatrix read_confusion_csv(std::istream& in);

struct MetricRow {
  std::string metric;
  int cls = -1;  // -1 for aggregate metrics; printed as an empty field
  double value = 0.0;
};

// Per-class recall / coverage / precision followed by the aggregates.
// Undefined per-class values are skipped rather than reported as NaN.
std::vector<MetricRow> metric_rows(const ConfusionMatrix& c);

// `metric,class,value`
void write_metric_rows_csv(std::ostream& out, const std::vector<MetricRow>& rows);

}  // namespace csst
