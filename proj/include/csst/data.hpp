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

// Synthetic long-tailed Gaussian mixtures, labeled/unlabeled splits and the
// weak/strong input perturbations used by self-training.

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "csst/common.hpp"

namespace csst {

// K isotropic Gaussians N(mean_i, variance * I) with class priors.
class MixtureModel {
 public:
  MixtureModel(std::vector<Vector> means, Vector priors, double variance);

  int k() const { return static_cast<int>(means_.size()); }
  int dim() const { return static_cast<int>(means_.front().size()); }
  const std::vector<Vector>& means() const { return means_; }
  const Vector& priors() const { return priors_; }
  double variance() const { return variance_; }

  double log_density(int cls, std::span<const double> x) const;
  double density(int cls, std::span<const double> x) const;

 private:
  std::vector<Vector> means_;
  Vector priors_;
  double variance_;
};

// pi_i ∝ rho^(-i/(K-1)); pi_0 / pi_{K-1} = rho.
Vector long_tail_priors(int k, double rho);

// 2 sqrt(log d) / sqrt(d); log d is floored at 1 so that d <= 2 still gets a
// positive separation.
double default_separation(int dim);

// Class means with pairwise distance >= separation: scaled +-e_i (cross
// polytope) for K <= 2d, seeded random directions otherwise.
std::vector<Vector> default_class_means(int k, int dim, double separation);

// Mixture with default means, variance 1/d and long-tailed priors.
MixtureModel make_long_tail_mixture(int k, int dim, double rho,
                                    double separation);

struct LabeledSet {
  FeatureMatrix x;
  std::vector<int> y;

  std::size_t size() const { return y.size(); }
  // Empirical class frequencies.
  Vector class_priors(int k) const;
  std::vector<std::size_t> class_counts(int k) const;
};

// Labels ~ Categorical(priors), features ~ N(mean_y, variance I).
// Deterministic per seed and independent of CSST_THREADS.
LabeledSet sample_mixture(const MixtureModel& m, std::size_t n, std::uint64_t seed);

// Exactly counts[i] samples of class i, in shuffled order.
LabeledSet sample_mixture_per_class(const MixtureModel& m,
                                    const std::vector<std::size_t>& counts,
                                    std::uint64_t seed);

struct Dataset {
  int k = 0;
  int dim = 0;
  LabeledSet labeled;
  FeatureMatrix unlabeled;
  std::uint64_t seed = 0;
  double rho = 1.0;
  double mu = 0.0;

  Vector labeled_priors() const { return labeled.class_priors(k); }
};

struct SemiSplit {
  Dataset dataset;
  std::vector<std::size_t> labeled_index;    // rows of the pool
  std::vector<std::size_t> unlabeled_index;  // rows of the pool
};

// Takes n_labeled labeled rows and floor(mu * n_labeled) label-stripped rows
// from the pool, disjointly. With `stratified`, per-class labeled counts
// follow the pool's class frequencies (largest remainder, at least one per
// class present in the pool).
SemiSplit split_semi(const LabeledSet& pool, int k, double mu,
                     std::size_t n_labeled, std::uint64_t seed,
                     bool stratified = false);

// Per-class counts summing to `total` that follow `priors` (largest
// remainder), with every class getting at least `floor_count`.
std::vector<std::size_t> proportional_counts(const Vector& priors,
                                             std::size_t total,
                                             std::size_t floor_count);

struct ValidationSplit {
  LabeledSet train;
  LabeledSet validation;
};

// Moves round(fraction * n_c) samples of every class c (at least one, and
// never the last one) into a validation set. Every class needs >= 2 samples.
ValidationSplit split_validation(const LabeledSet& labeled, int k,
                                 double fraction, std::uint64_t seed);

struct AugmentConfig {
  double weak_sigma = 0.05;
  double strong_sigma = 0.2;
  double strong_mask_prob = 0.1;
  double radius = 0.5;

  void validate() const;
};

// x + weak_sigma * eps.
Vector weak_augment(std::span<const double> x, const AugmentConfig& cfg, Rng& rng);
// mask(x) + strong_sigma * eps, each coordinate zeroed with strong_mask_prob.
Vector strong_augment(std::span<const double> x, const AugmentConfig& cfg,
                      Rng& rng);

// Binary format "CSSTDS01", little-endian: K, d, n_labeled, n_unlabeled,
// seed (u64), rho, mu (f64), labeled features (f64 row-major), labels (u32),
// unlabeled features (f64 row-major).
void save_dataset(const Dataset& ds, std::ostream& out);
void save_dataset(const Dataset& ds, const std::filesystem::path& path);
Dataset load_dataset(std::istream& in);
Dataset load_dataset(const std::filesystem::path& path);

// `label,f0,f1,...`; unlabeled rows have an empty label field.
void export_dataset_csv(const Dataset& ds, std::ostream& out);

}  // namespace csst
