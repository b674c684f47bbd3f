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

#include "csst/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <numeric>
#include <ostream>
#include <random>

#include "binary_io.hpp"
#include "csst/error.hpp"

namespace csst {
namespace {

constexpr char kDatasetMagic[9] = "CSSTDS01";
constexpr std::size_t kShardSize = 4096;
constexpr std::uint64_t kMeansSeed = 0x5EEDC1A55ULL;

void fill_features(const MixtureModel& m, const std::vector<int>& labels,
                   std::uint64_t seed, FeatureMatrix& x) {
  const std::size_t n = labels.size();
  const std::size_t shards = (n + kShardSize - 1) / kShardSize;
  const double sd = std::sqrt(m.variance());
  for_each_shard(shards, [&](std::size_t s) {
    Rng rng(derive_seed(seed, s));
    std::normal_distribution<double> noise(0.0, 1.0);
    const std::size_t end = std::min(n, (s + 1) * kShardSize);
    for (std::size_t t = s * kShardSize; t < end; ++t) {
      const Vector& mean = m.means()[static_cast<std::size_t>(labels[t])];
      for (int j = 0; j < m.dim(); ++j) {
        x(static_cast<Eigen::Index>(t), j) = mean[j] + sd * noise(rng);
      }
    }
  });
}

}  // namespace

MixtureModel::MixtureModel(std::vector<Vector> means, Vector priors,
                           double variance)
    : means_(std::move(means)), priors_(std::move(priors)), variance_(variance) {
  if (means_.empty()) throw ShapeError("mixture needs at least one class");
  for (const auto& mu : means_) {
    if (mu.size() != means_.front().size() || mu.size() == 0) {
      throw ShapeError("class means must share a positive dimension");
    }
    if (!mu.allFinite()) throw DomainError("class means must be finite");
  }
  if (priors_.size() != static_cast<Eigen::Index>(means_.size())) {
    throw ShapeError("one prior per class required");
  }
  if ((priors_.array() < 0.0).any() || std::abs(priors_.sum() - 1.0) > 1e-9) {
    throw DomainError("mixture priors must lie on the simplex");
  }
  if (!(variance_ > 0.0) || !std::isfinite(variance_)) {
    throw DomainError("mixture variance must be positive");
  }
}

double MixtureModel::log_density(int cls, std::span<const double> x) const {
  if (cls < 0 || cls >= k()) throw DomainError("class out of range");
  if (static_cast<int>(x.size()) != dim()) throw ShapeError("point dimension");
  const Vector& mean = means_[static_cast<std::size_t>(cls)];
  double sq = 0.0;
  for (int j = 0; j < dim(); ++j) {
    const double diff = x[static_cast<std::size_t>(j)] - mean[j];
    sq += diff * diff;
  }
  return -0.5 * sq / variance_ -
         0.5 * dim() * std::log(2.0 * std::numbers::pi * variance_);
}

double MixtureModel::density(int cls, std::span<const double> x) const {
  return std::exp(log_density(cls, x));
}

Vector long_tail_priors(int k, double rho) {
  if (k < 2) throw DomainError("long-tail priors need at least two classes");
  if (!(rho >= 1.0) || !std::isfinite(rho)) {
    throw DomainError("imbalance factor rho must be >= 1");
  }
  Vector pi(k);
  for (int i = 0; i < k; ++i) {
    pi[i] = std::pow(rho, -static_cast<double>(i) / (k - 1));
  }
  return pi / pi.sum();
}

double default_separation(int dim) {
  if (dim <= 0) throw DomainError("dimension must be positive");
  return 2.0 * std::sqrt(std::max(std::log(static_cast<double>(dim)), 1.0)) /
         std::sqrt(static_cast<double>(dim));
}

std::vector<Vector> default_class_means(int k, int dim, double separation) {
  if (k <= 0 || dim <= 0) throw DomainError("class count and dimension > 0");
  if (!(separation > 0.0)) throw DomainError("separation must be positive");
  std::vector<Vector> means;
  if (k <= 2 * dim) {
    // Cross-polytope vertices: distinct axes are s*sqrt(2) apart, antipodes 2s.
    const double scale = separation / std::numbers::sqrt2;
    for (int i = 0; i < k; ++i) {
      Vector m = Vector::Zero(dim);
      m[i % dim] = i < dim ? scale : -scale;
      means.push_back(std::move(m));
    }
    return means;
  }
  Rng rng(kMeansSeed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int i = 0; i < k; ++i) {
    Vector u(dim);
    for (int j = 0; j < dim; ++j) u[j] = normal(rng);
    means.push_back(u.normalized());
  }
  double closest = std::numeric_limits<double>::infinity();
  for (int i = 0; i < k; ++i) {
    for (int j = i + 1; j < k; ++j) {
      closest = std::min(closest, (means[i] - means[j]).norm());
    }
  }
  for (auto& m : means) m *= separation / closest;
  return means;
}

MixtureModel make_long_tail_mixture(int k, int dim, double rho,
                                    double separation) {
  return MixtureModel(default_class_means(k, dim, separation),
                      long_tail_priors(k, rho), 1.0 / dim);
}

Vector LabeledSet::class_priors(int k) const {
  if (y.empty()) throw ShapeError("empty labeled set has no priors");
  const auto counts = class_counts(k);
  Vector pi(k);
  for (int i = 0; i < k; ++i) {
    pi[i] = static_cast<double>(counts[static_cast<std::size_t>(i)]) /
            static_cast<double>(y.size());
  }
  return pi;
}

std::vector<std::size_t> LabeledSet::class_counts(int k) const {
  std::vector<std::size_t> counts(static_cast<std::size_t>(k), 0);
  for (int label : y) {
    if (label < 0 || label >= k) throw DomainError("label out of range");
    ++counts[static_cast<std::size_t>(label)];
  }
  return counts;
}

LabeledSet sample_mixture(const MixtureModel& m, std::size_t n,
                          std::uint64_t seed) {
  if (n == 0) throw DomainError("sample count must be positive");
  LabeledSet out;
  out.y.resize(n);
  Rng label_rng(derive_seed(seed, 0xC1A55ULL));
  std::discrete_distribution<int> pick(m.priors().data(),
                                       m.priors().data() + m.priors().size());
  for (auto& label : out.y) label = pick(label_rng);
  out.x.resize(static_cast<Eigen::Index>(n), m.dim());
  fill_features(m, out.y, seed, out.x);
  return out;
}

LabeledSet sample_mixture_per_class(const MixtureModel& m,
                                    const std::vector<std::size_t>& counts,
                                    std::uint64_t seed) {
  if (counts.size() != static_cast<std::size_t>(m.k())) {
    throw ShapeError("one count per class required");
  }
  LabeledSet out;
  for (std::size_t c = 0; c < counts.size(); ++c) {
    out.y.insert(out.y.end(), counts[c], static_cast<int>(c));
  }
  if (out.y.empty()) throw DomainError("sample count must be positive");
  Rng order_rng(derive_seed(seed, 0x5B0FF1EULL));
  std::shuffle(out.y.begin(), out.y.end(), order_rng);
  out.x.resize(static_cast<Eigen::Index>(out.y.size()), m.dim());
  fill_features(m, out.y, seed, out.x);
  return out;
}

std::vector<std::size_t> proportional_counts(const Vector& priors,
                                             std::size_t total,
                                             std::size_t floor_count) {
  const auto k = static_cast<std::size_t>(priors.size());
  if (k == 0) throw ShapeError("no classes");
  if (floor_count * k > total) {
    throw DomainError("total too small for the per-class floor");
  }
  const double mass = priors.sum();
  if (!(mass > 0.0)) throw DomainError("priors carry no mass");
  std::vector<std::size_t> counts(k);
  std::vector<double> remainder(k);
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < k; ++i) {
    const double ideal = priors[static_cast<Eigen::Index>(i)] / mass *
                         static_cast<double>(total);
    const auto whole = static_cast<std::size_t>(std::floor(ideal));
    counts[i] = std::max(whole, floor_count);
    remainder[i] = ideal - static_cast<double>(whole);
    assigned += counts[i];
  }
  // Floors can overshoot the total; take back from the largest classes.
  while (assigned > total) {
    std::size_t big = 0;
    for (std::size_t i = 1; i < k; ++i) {
      if (counts[i] > counts[big]) big = i;
    }
    --counts[big];
    --assigned;
  }
  std::vector<std::size_t> order(k);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return remainder[a] > remainder[b];
  });
  for (std::size_t r = 0; assigned < total; r = (r + 1) % k) {
    ++counts[order[r]];
    ++assigned;
  }
  return counts;
}

SemiSplit split_semi(const LabeledSet& pool, int k, double mu,
                     std::size_t n_labeled, std::uint64_t seed, bool stratified) {
  if (!(mu >= 0.0) || !std::isfinite(mu)) throw DomainError("mu must be >= 0");
  if (n_labeled == 0) throw DomainError("n_labeled must be positive");
  const auto n_unlabeled =
      static_cast<std::size_t>(std::floor(mu * static_cast<double>(n_labeled)));
  if (pool.size() < n_labeled + n_unlabeled) {
    throw DomainError("pool of " + std::to_string(pool.size()) +
                      " samples is too small for the requested split");
  }
  std::vector<std::size_t> order(pool.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  SemiSplit split;
  std::vector<bool> taken(pool.size(), false);
  if (!stratified) {
    split.labeled_index.assign(order.begin(),
                               order.begin() + static_cast<std::ptrdiff_t>(n_labeled));
  } else {
    const auto pool_counts = pool.class_counts(k);
    Vector present = Vector::Zero(k);
    std::size_t n_present = 0;
    for (int c = 0; c < k; ++c) {
      if (pool_counts[static_cast<std::size_t>(c)] > 0) {
        present[c] = static_cast<double>(pool_counts[static_cast<std::size_t>(c)]);
        ++n_present;
      }
    }
    if (n_labeled < n_present) {
      throw DomainError("n_labeled smaller than the number of classes present");
    }
    auto quota = proportional_counts(present, n_labeled, 0);
    // At least one labeled sample for every class present in the pool.
    for (int c = 0; c < k; ++c) {
      auto& q = quota[static_cast<std::size_t>(c)];
      if (present[c] > 0.0 && q == 0) {
        q = 1;
        --*std::max_element(quota.begin(), quota.end());
      }
    }
    for (int c = 0; c < k; ++c) {
      if (quota[static_cast<std::size_t>(c)] > pool_counts[static_cast<std::size_t>(c)]) {
        throw DomainError("pool has too few samples of class " + std::to_string(c));
      }
    }
    for (std::size_t idx : order) {
      auto& q = quota[static_cast<std::size_t>(pool.y[idx])];
      if (q > 0) {
        split.labeled_index.push_back(idx);
        --q;
      }
    }
  }
  for (std::size_t idx : split.labeled_index) taken[idx] = true;
  for (std::size_t idx : order) {
    if (split.unlabeled_index.size() == n_unlabeled) break;
    if (!taken[idx]) split.unlabeled_index.push_back(idx);
  }

  Dataset& ds = split.dataset;
  ds.k = k;
  ds.dim = static_cast<int>(pool.x.cols());
  ds.seed = seed;
  ds.mu = mu;
  ds.labeled.x.resize(static_cast<Eigen::Index>(split.labeled_index.size()),
                      pool.x.cols());
  for (std::size_t r = 0; r < split.labeled_index.size(); ++r) {
    ds.labeled.x.row(static_cast<Eigen::Index>(r)) =
        pool.x.row(static_cast<Eigen::Index>(split.labeled_index[r]));
    ds.labeled.y.push_back(pool.y[split.labeled_index[r]]);
  }
  ds.unlabeled.resize(static_cast<Eigen::Index>(split.unlabeled_index.size()),
                      pool.x.cols());
  for (std::size_t r = 0; r < split.unlabeled_index.size(); ++r) {
    ds.unlabeled.row(static_cast<Eigen::Index>(r)) =
        pool.x.row(static_cast<Eigen::Index>(split.unlabeled_index[r]));
  }
  return split;
}

ValidationSplit split_validation(const LabeledSet& labeled, int k,
                                 double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) {
    throw DomainError("validation fraction must be in (0, 1)");
  }
  const auto counts = labeled.class_counts(k);
  std::vector<std::size_t> quota(counts.size());
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (counts[c] < 2) {
      throw DomainError("class " + std::to_string(c) +
                        " has fewer than two labeled samples to split");
    }
    const auto want = static_cast<std::size_t>(
        std::round(fraction * static_cast<double>(counts[c])));
    quota[c] = std::clamp<std::size_t>(want, 1, counts[c] - 1);
  }
  std::vector<std::size_t> order(labeled.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::size_t> train_rows;
  std::vector<std::size_t> val_rows;
  for (std::size_t idx : order) {
    auto& q = quota[static_cast<std::size_t>(labeled.y[idx])];
    if (q > 0) {
      val_rows.push_back(idx);
      --q;
    } else {
      train_rows.push_back(idx);
    }
  }
  const auto gather = [&](const std::vector<std::size_t>& rows) {
    LabeledSet out;
    out.x.resize(static_cast<Eigen::Index>(rows.size()), labeled.x.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      out.x.row(static_cast<Eigen::Index>(r)) =
          labeled.x.row(static_cast<Eigen::Index>(rows[r]));
      out.y.push_back(labeled.y[rows[r]]);
    }
    return out;
  };
  return {gather(train_rows), gather(val_rows)};
}

void AugmentConfig::validate() const {
  if (!(weak_sigma >= 0.0) || !(strong_sigma >= weak_sigma)) {
    throw DomainError("augmentation needs 0 <= weak_sigma <= strong_sigma");
  }
  if (!(strong_mask_prob >= 0.0 && strong_mask_prob < 1.0)) {
    throw DomainError("strong_mask_prob must be in [0, 1)");
  }
  if (!(radius > 0.0)) throw DomainError("neighborhood radius must be positive");
}

Vector weak_augment(std::span<const double> x, const AugmentConfig& cfg, Rng& rng) {
  std::normal_distribution<double> noise(0.0, 1.0);
  Vector out(static_cast<Eigen::Index>(x.size()));
  for (std::size_t j = 0; j < x.size(); ++j) {
    out[static_cast<Eigen::Index>(j)] = x[j] + cfg.weak_sigma * noise(rng);
  }
  return out;
}

Vector strong_augment(std::span<const double> x, const AugmentConfig& cfg,
                      Rng& rng) {
  std::normal_distribution<double> noise(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Vector out(static_cast<Eigen::Index>(x.size()));
  for (std::size_t j = 0; j < x.size(); ++j) {
    const bool dropped = unit(rng) < cfg.strong_mask_prob;
    out[static_cast<Eigen::Index>(j)] =
        (dropped ? 0.0 : x[j]) + cfg.strong_sigma * noise(rng);
  }
  return out;
}

void save_dataset(const Dataset& ds, std::ostream& out) {
  if (ds.labeled.x.rows() != static_cast<Eigen::Index>(ds.labeled.y.size())) {
    throw ShapeError("labeled features and labels differ in count");
  }
  binary::write_magic(out, kDatasetMagic);
  binary::write_uint<std::uint64_t>(out, static_cast<std::uint64_t>(ds.k));
  binary::write_uint<std::uint64_t>(out, static_cast<std::uint64_t>(ds.dim));
  binary::write_uint<std::uint64_t>(out, ds.labeled.y.size());
  binary::write_uint<std::uint64_t>(out,
                                    static_cast<std::uint64_t>(ds.unlabeled.rows()));
  binary::write_uint<std::uint64_t>(out, ds.seed);
  binary::write_f64(out, ds.rho);
  binary::write_f64(out, ds.mu);
  for (Eigen::Index r = 0; r < ds.labeled.x.rows(); ++r) {
    for (Eigen::Index c = 0; c < ds.labeled.x.cols(); ++c) {
      binary::write_f64(out, ds.labeled.x(r, c));
    }
  }
  for (int label : ds.labeled.y) {
    binary::write_uint<std::uint32_t>(out, static_cast<std::uint32_t>(label));
  }
  for (Eigen::Index r = 0; r < ds.unlabeled.rows(); ++r) {
    for (Eigen::Index c = 0; c < ds.unlabeled.cols(); ++c) {
      binary::write_f64(out, ds.unlabeled(r, c));
    }
  }
  if (!out) throw IoError("failed writing dataset");
}

void save_dataset(const Dataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  save_dataset(ds, out);
}

Dataset load_dataset(std::istream& in) {
  const std::string magic = binary::read_magic(in);
  if (magic.rfind("CSSTDS", 0) == 0 && magic != kDatasetMagic) {
    throw VersionError("unsupported dataset version '" + magic + "'");
  }
  if (magic != kDatasetMagic) throw FormatError("not a CSST dataset file");
  Dataset ds;
  const auto k = binary::read_uint<std::uint64_t>(in, "K");
  const auto d = binary::read_uint<std::uint64_t>(in, "dimension");
  const auto n_l = binary::read_uint<std::uint64_t>(in, "labeled count");
  const auto n_u = binary::read_uint<std::uint64_t>(in, "unlabeled count");
  if (k == 0 || k > 100000 || d == 0 || d > 1000000 || n_l > (1ULL << 32) ||
      n_u > (1ULL << 32)) {
    throw FormatError("implausible dataset header");
  }
  ds.k = static_cast<int>(k);
  ds.dim = static_cast<int>(d);
  ds.seed = binary::read_uint<std::uint64_t>(in, "seed");
  ds.rho = binary::read_f64(in, "rho");
  ds.mu = binary::read_f64(in, "mu");
  ds.labeled.x.resize(static_cast<Eigen::Index>(n_l), ds.dim);
  for (Eigen::Index r = 0; r < ds.labeled.x.rows(); ++r) {
    for (Eigen::Index c = 0; c < ds.dim; ++c) {
      ds.labeled.x(r, c) = binary::read_f64(in, "labeled features");
    }
  }
  ds.labeled.y.resize(n_l);
  for (auto& label : ds.labeled.y) {
    const auto v = binary::read_uint<std::uint32_t>(in, "labels");
    if (v >= k) throw FormatError("label out of range in dataset file");
    label = static_cast<int>(v);
  }
  ds.unlabeled.resize(static_cast<Eigen::Index>(n_u), ds.dim);
  for (Eigen::Index r = 0; r < ds.unlabeled.rows(); ++r) {
    for (Eigen::Index c = 0; c < ds.dim; ++c) {
      ds.unlabeled(r, c) = binary::read_f64(in, "unlabeled features");
    }
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw FormatError("trailing bytes after dataset payload");
  }
  return ds;
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open dataset " + path.string());
  return load_dataset(in);
}

void export_dataset_csv(const Dataset& ds, std::ostream& out) {
  out << "label";
  for (int j = 0; j < ds.dim; ++j) out << ",f" << j;
  out << '\n' << std::setprecision(17);
  for (Eigen::Index r = 0; r < ds.labeled.x.rows(); ++r) {
    out << ds.labeled.y[static_cast<std::size_t>(r)];
    for (Eigen::Index c = 0; c < ds.labeled.x.cols(); ++c) {
      out << ',' << ds.labeled.x(r, c);
    }
    out << '\n';
  }
  for (Eigen::Index r = 0; r < ds.unlabeled.rows(); ++r) {
    for (Eigen::Index c = 0; c < ds.unlabeled.cols(); ++c) {
      out << ',' << ds.unlabeled(r, c);
    }
    out << '\n';
  }
}

}  // namespace csst
