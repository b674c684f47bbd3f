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

#include "csst/theory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "csst/error.hpp"

namespace csst {
namespace {

constexpr std::size_t kShardSize = 4096;

// Stream ids for the scenario-level estimates; fixed so that every family
// member sees the same samples and probes.
enum Stream : std::uint64_t {
  kStreamErrGpl = 1,
  kStreamErrGstar = 2,
  kStreamRGstar = 3,
  kStreamErrFhat = 4,
  kStreamDisagreement = 5,
  kStreamConsistency = 6,
};

double halley_refine(double x, double p) {
  const double e = std_normal_cdf(x) - p;
  const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
  return x - u / (1.0 + 0.5 * x * u);
}

using ScoreFn = std::function<void(int cls, std::span<const double> x,
                                   std::uint64_t probe_key, std::span<double> out)>;

// Stratified sampler: an equal share of n for every class with positive
// `class_mass`. Output k is sum_i mean_{x ~ P_i} out_k(x), with standard
// error sqrt(sum_i var_i / n_i).
std::vector<McEstimate> stratified_mc(const MixtureModel& m,
                                      const Vector& class_mass, std::size_t n,
                                      std::uint64_t seed, std::size_t n_out,
                                      const ScoreFn& score) {
  std::vector<int> active;
  for (int i = 0; i < m.k(); ++i) {
    if (class_mass[i] > 0.0) active.push_back(i);
  }
  std::vector<McEstimate> result(n_out);
  if (active.empty()) return result;
  const std::size_t per_class = n / active.size();
  if (per_class < 2) {
    throw DomainError("Monte-Carlo sample count too small for " +
                      std::to_string(active.size()) + " classes");
  }

  struct ShardJob {
    int cls;
    std::size_t shard;
    std::size_t begin;
    std::size_t end;
  };
  std::vector<ShardJob> jobs;
  for (int cls : active) {
    for (std::size_t b = 0, s = 0; b < per_class; b += kShardSize, ++s) {
      jobs.push_back({cls, s, b, std::min(per_class, b + kShardSize)});
    }
  }
  // Per shard: n_out sums followed by n_out sums of squares.
  std::vector<std::vector<double>> slots(jobs.size());
  const std::uint64_t probe_base = derive_seed(seed, 0x70726F6265ULL);
  const double sigma = std::sqrt(m.variance());
  const int dim = m.dim();

  for_each_shard(jobs.size(), [&](std::size_t j) {
    const ShardJob& job = jobs[j];
    Rng rng(derive_seed(derive_seed(seed, static_cast<std::uint64_t>(job.cls) + 1),
                        job.shard));
    std::normal_distribution<double> normal;
    std::vector<double> x(dim);
    std::vector<double> out(n_out);
    std::vector<double> acc(2 * n_out, 0.0);
    const Vector& mean = m.means()[job.cls];
    const std::uint64_t class_key = derive_seed(probe_base, job.cls);
    for (std::size_t t = job.begin; t < job.end; ++t) {
      for (int c = 0; c < dim; ++c) x[c] = mean[c] + sigma * normal(rng);
      std::fill(out.begin(), out.end(), 0.0);
      score(job.cls, x, derive_seed(class_key, t), out);
      for (std::size_t k = 0; k < n_out; ++k) {
        acc[k] += out[k];
        acc[n_out + k] += out[k] * out[k];
      }
    }
    slots[j] = std::move(acc);
  });

  std::vector<double> sum(n_out);
  std::vector<double> sumsq(n_out);
  std::size_t next = 0;
  const double count = static_cast<double>(per_class);
  for (int cls : active) {
    std::fill(sum.begin(), sum.end(), 0.0);
    std::fill(sumsq.begin(), sumsq.end(), 0.0);
    for (; next < jobs.size() && jobs[next].cls == cls; ++next) {
      for (std::size_t k = 0; k < n_out; ++k) {
        sum[k] += slots[next][k];
        sumsq[k] += slots[next][n_out + k];
      }
    }
    for (std::size_t k = 0; k < n_out; ++k) {
      const double mean = sum[k] / count;
      const double var =
          std::max(0.0, (sumsq[k] - count * mean * mean) / (count - 1.0));
      result[k].value += mean;
      result[k].std_error += var / count;  // squared until the end
    }
  }
  for (auto& r : result) r.std_error = std::sqrt(r.std_error);
  return result;
}

// True when pred holds at some probe of the closed `radius` ball around x:
// the 2d axis points first, then `probes` uniform points drawn from a stream
// fixed by `key`.
template <class Pred>
bool any_probe(std::span<const double> x, double radius, int probes,
               std::uint64_t key, std::vector<double>& buf, const Pred& pred) {
  const std::size_t dim = x.size();
  buf.assign(x.begin(), x.end());
  for (std::size_t j = 0; j < dim; ++j) {
    buf[j] = x[j] + radius;
    if (pred(buf)) return true;
    buf[j] = x[j] - radius;
    if (pred(buf)) return true;
    buf[j] = x[j];
  }
  SplitMix64 gen(key);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unit;
  std::vector<double> dir(dim);
  for (int p = 0; p < probes; ++p) {
    double norm2 = 0.0;
    for (auto& v : dir) {
      v = normal(gen);
      norm2 += v * v;
    }
    if (!(norm2 > 0.0)) continue;
    const double scale = radius * std::pow(unit(gen), 1.0 / static_cast<double>(dim)) /
                         std::sqrt(norm2);
    for (std::size_t j = 0; j < dim; ++j) buf[j] = x[j] + scale * dir[j];
    if (pred(buf)) return true;
  }
  return false;
}

void check_mixture_weight(const MixtureModel& m, const WeightMatrix& w) {
  if (w.k() != m.k()) throw ShapeError("weight matrix and mixture differ in K");
}

}  // namespace

double std_normal_cdf(double x) {
  return 0.5 * std::erfc(-x / std::numbers::sqrt2);
}

double std_normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw DomainError("normal quantile needs p in (0, 1)");
  }
  // Acklam's rational approximation, then two Halley steps.
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                 -2.759285104469687e+02, 1.383577518672690e+02,
                                 -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                 -1.556989798598866e+02, 6.680131188771972e+01,
                                 -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                 -2.400758277161838e+00, -2.549732539343734e+00,
                                 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                 2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double p_low = 0.02425;
  double x = 0.0;
  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - p_low) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log1p(-p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  x = halley_refine(x, p);
  return halley_refine(x, p);
}

double expansion_c_gauss(double p, double h) {
  if (!(p > 0.0 && p < 1.0)) throw DomainError("expansion needs p in (0, 1)");
  if (!(h >= 0.0) || !std::isfinite(h)) throw DomainError("expansion needs h >= 0");
  return std_normal_cdf(std_normal_quantile(p) + h) / p;
}

ExpansionFunction ExpansionFunction::gaussian(double h) {
  if (!(h >= 0.0) || !std::isfinite(h)) throw DomainError("expansion needs h >= 0");
  ExpansionFunction f;
  f.h_ = h;
  return f;
}

ExpansionFunction ExpansionFunction::tabulated(std::vector<double> p,
                                               std::vector<double> c) {
  if (p.size() != c.size() || p.size() < 2) {
    throw ShapeError("tabulated expansion needs >= 2 matching (p, c) points");
  }
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!std::isfinite(c[i]) || !(p[i] > 0.0 && p[i] <= 1.0)) {
      throw DomainError("tabulated expansion: bad point");
    }
    if (i > 0 && !(p[i] > p[i - 1])) {
      throw DomainError("tabulated expansion: p must be strictly increasing");
    }
  }
  ExpansionFunction f;
  f.table_p_ = std::move(p);
  f.table_c_ = std::move(c);
  return f;
}

double ExpansionFunction::operator()(double p) const {
  if (!(p > 0.0 && p <= 1.0)) throw DomainError("expansion needs p in (0, 1]");
  if (is_gaussian()) return p == 1.0 ? 1.0 : expansion_c_gauss(p, h_);
  if (p < table_p_.front() || p > table_p_.back()) {
    throw DomainError("p outside the tabulated range");
  }
  const auto it = std::upper_bound(table_p_.begin(), table_p_.end(), p);
  if (it == table_p_.end()) return table_c_.back();
  const std::size_t hi = static_cast<std::size_t>(it - table_p_.begin());
  const std::size_t lo = hi - 1;
  const double t = (p - table_p_[lo]) / (table_p_[hi] - table_p_[lo]);
  return table_c_[lo] + t * (table_c_[hi] - table_c_[lo]);
}

bool ExpansionFunction::is_valid_on_grid(double lo, double hi, int points) const {
  if (points < 2 || !(lo < hi)) throw DomainError("bad expansion grid");
  double prev = std::numeric_limits<double>::infinity();
  for (int i = 0; i < points; ++i) {
    const double p = lo + (hi - lo) * i / (points - 1);
    const double v = (*this)(p);
    if (v < 1.0 - 1e-12 || v > prev + 1e-12) return false;
    prev = v;
  }
  return true;
}

GammaResult gamma_of(double p_w, const ExpansionFunction& c) {
  if (!(p_w > 0.0 && p_w <= 1.0)) throw DomainError("p_w must be in (0, 1]");
  const double g = c(p_w);
  return {g, g > 3.0};
}

double expansion_level_crossing(double h, double level, double tol, double lo,
                                double hi) {
  double clo = expansion_c_gauss(lo, h) - level;
  const double chi = expansion_c_gauss(hi, h) - level;
  if (!(clo > 0.0 && chi < 0.0)) {
    throw DomainError("expansion level is not bracketed by the interval");
  }
  while (hi - lo > tol) {
    const double mid = 0.5 * (lo + hi);
    const double cm = expansion_c_gauss(mid, h) - level;
    if (cm > 0.0) {
      lo = mid;
      clo = cm;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

Classifier bayes_weighted_diag(const Vector& w_diag, const MixtureModel& m) {
  if (w_diag.size() != m.k()) throw ShapeError("weight vector length != K");
  if (!w_diag.allFinite() || (w_diag.array() <= 0.0).any()) {
    throw DomainError("diagonal weights must be positive");
  }
  Vector log_w = w_diag.array().log();
  return [log_w = std::move(log_w), m](std::span<const double> x) {
    int best = 0;
    double best_score = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < m.k(); ++k) {
      const double s = log_w[k] + m.log_density(k, x);
      if (s > best_score) {
        best_score = s;
        best = k;
      }
    }
    return best;
  };
}

Classifier threshold_classifier(Vector direction, double offset, int below,
                                int above) {
  if (direction.size() == 0) throw ShapeError("empty threshold direction");
  return [direction = std::move(direction), offset, below,
          above](std::span<const double> x) {
    if (static_cast<Eigen::Index>(x.size()) != direction.size()) {
      throw ShapeError("threshold classifier input dimension");
    }
    double s = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) s += direction[j] * x[j];
    return s < offset ? below : above;
  };
}

Classifier constant_classifier(int cls) {
  return [cls](std::span<const double>) { return cls; };
}

McEstimate mc_weighted_error(const Classifier& f, const MixtureModel& m,
                             const WeightMatrix& w, std::size_t n,
                             std::uint64_t seed) {
  check_mixture_weight(m, w);
  const Matrix& wm = w.entries();
  return stratified_mc(m, w.row_mass(), n, seed, 1,
                       [&](int cls, std::span<const double> x, std::uint64_t,
                           std::span<double> out) {
                         const int pred = f(x);
                         // sum_j w_ij 1(pred != j) = row mass - w_{i,pred}
                         double s = 0.0;
                         for (int j = 0; j < wm.cols(); ++j) {
                           if (j != pred) s += wm(cls, j);
                         }
                         out[0] = s;
                       })
      .front();
}

McEstimate mc_weighted_consistency(const Classifier& f, const MixtureModel& m,
                                   const WeightMatrix& w, double radius,
                                   int probes, std::size_t n, std::uint64_t seed) {
  check_mixture_weight(m, w);
  if (!(radius >= 0.0)) throw DomainError("radius must be >= 0");
  if (probes < 1) throw DomainError("probes must be >= 1");
  const Vector mass = w.row_mass();
  if (radius == 0.0) return {};
  return stratified_mc(m, mass, n, seed, 1,
                       [&](int cls, std::span<const double> x,
                           std::uint64_t key, std::span<double> out) {
                         thread_local std::vector<double> buf;
                         const int label = f(x);
                         const bool differs = any_probe(
                             x, radius, probes, key, buf,
                             [&](const std::vector<double>& y) {
                               return f(y) != label;
                             });
                         out[0] = differs ? mass[cls] : 0.0;
                       })
      .front();
}

McEstimate mc_weighted_disagreement(const Classifier& f, const Classifier& gpl,
                                    const MixtureModel& m, const WeightMatrix& w,
                                    std::size_t n, std::uint64_t seed) {
  check_mixture_weight(m, w);
  const Vector mass = w.row_mass();
  return stratified_mc(m, mass, n, seed, 1,
                       [&](int cls, std::span<const double> x, std::uint64_t,
                           std::span<double> out) {
                         out[0] = f(x) != gpl(x) ? mass[cls] : 0.0;
                       })
      .front();
}

double weighted_error_bound(double err_gpl, double err_gstar, double r_gstar,
                      double gamma) {
  if (!(gamma > 1.0)) throw DomainError("bound needs gamma > 1");
  if (err_gpl < 0.0 || err_gstar < 0.0 || r_gstar < 0.0) {
    throw DomainError("bound inputs must be >= 0");
  }
  return 2.0 / (gamma - 1.0) * err_gpl + (gamma + 1.0) / (gamma - 1.0) * err_gstar +
         4.0 * gamma / (gamma - 1.0) * r_gstar;
}

double TheoremScenario::expansion_h() const {
  return 2.0 * radius / std::sqrt(mixture.variance());
}

TheoremScenario one_dim_scenario(double half_gap, double radius, double gpl_error,
                                 std::size_t mc_samples, std::uint64_t seed) {
  if (!(half_gap > 0.0)) throw DomainError("half gap must be positive");
  if (!(radius >= 0.0)) throw DomainError("radius must be >= 0");
  const double a = half_gap;
  // err_w(threshold at t) = 0.5 (Phi(-t-a) + Phi(t-a)), increasing in t >= 0.
  const auto err_at = [a](double t) {
    return 0.5 * (std_normal_cdf(-t - a) + std_normal_cdf(t - a));
  };
  double lo = 0.0;
  double hi = a + 40.0;
  if (!(gpl_error > err_at(lo) && gpl_error < err_at(hi))) {
    throw DomainError("pseudo-labeler error not reachable by a threshold");
  }
  while (hi - lo > 1e-12) {
    const double mid = 0.5 * (lo + hi);
    (err_at(mid) < gpl_error ? lo : hi) = mid;
  }
  MixtureModel mixture({Vector::Constant(1, -a), Vector::Constant(1, a)},
                       Vector::Constant(2, 0.5), 1.0);
  const Vector w_diag = Vector::Constant(2, 0.5);
  TheoremScenario s{
      .mixture = mixture,
      .weight = WeightMatrix(w_diag.asDiagonal().toDenseMatrix()),
      .pseudo_labeler = threshold_classifier(Vector::Ones(1), 0.5 * (lo + hi), 0, 1),
      .reference = bayes_weighted_diag(w_diag, mixture),
      .radius = radius,
      .probes = 64,
      .mc_samples = mc_samples,
      .seed = seed,
      .gamma = std::nullopt,
  };
  return s;
}

TheoremScenario canonical_scenario(std::size_t mc_samples, std::uint64_t seed) {
  return one_dim_scenario(3.0, 0.5, 0.10, mc_samples, seed);
}

namespace {

double scenario_gamma(const TheoremScenario& s, McEstimate* err_gpl,
                      McEstimate* err_gstar) {
  const McEstimate eg = mc_weighted_error(s.pseudo_labeler, s.mixture, s.weight,
                                          s.mc_samples,
                                          derive_seed(s.seed, kStreamErrGpl));
  const McEstimate es = mc_weighted_error(s.reference, s.mixture, s.weight,
                                          s.mc_samples,
                                          derive_seed(s.seed, kStreamErrGstar));
  if (err_gpl != nullptr) *err_gpl = eg;
  if (err_gstar != nullptr) *err_gstar = es;
  const double l1 = s.weight.l1();
  if (eg.value + es.value > l1) {
    throw DomainError("err_w(gpl) + err_w(F*) exceeds |w|_1");
  }
  const double p_w = (eg.value + es.value) / l1;
  if (!(p_w > 0.0)) {
    throw DomainError("p_w is zero; gamma is unbounded for this scenario");
  }
  const double g = gamma_of(p_w, ExpansionFunction::gaussian(s.expansion_h())).gamma;
  if (!(g > 1.0)) throw DomainError("scenario has gamma <= 1");
  return g;
}

}  // namespace

TheoreticalLoss theoretical_csst_loss(const Classifier& f,
                                      const TheoremScenario& scenario) {
  const double g = scenario.gamma ? *scenario.gamma
                                  : scenario_gamma(scenario, nullptr, nullptr);
  if (!(g > 1.0)) throw DomainError("theoretical loss needs gamma > 1");
  TheoreticalLoss out;
  out.gamma = g;
  out.disagreement = mc_weighted_disagreement(
      f, scenario.pseudo_labeler, scenario.mixture, scenario.weight,
      scenario.mc_samples, derive_seed(scenario.seed, kStreamDisagreement));
  out.consistency = mc_weighted_consistency(
      f, scenario.mixture, scenario.weight, scenario.radius, scenario.probes,
      scenario.mc_samples, derive_seed(scenario.seed, kStreamConsistency));
  const double a = (g + 1.0) / (g - 1.0);
  const double b = 2.0 * g / (g - 1.0);
  out.value = a * out.disagreement.value + b * out.consistency.value;
  out.std_error = std::hypot(a * out.disagreement.std_error,
                             b * out.consistency.std_error);
  return out;
}

ClassifierFamily threshold_family(const Vector& direction, double lo, double hi,
                                  int steps, int below, int above) {
  if (steps < 1 || !(lo <= hi)) throw DomainError("bad threshold grid");
  ClassifierFamily fam;
  for (int s = 0; s < steps; ++s) {
    const double t = steps == 1 ? lo : lo + (hi - lo) * s / (steps - 1);
    fam.members.push_back(threshold_classifier(direction, t, below, above));
    fam.parameters.push_back(t);
  }
  return fam;
}

TheoremReport verify_error_bound(TheoremScenario scenario,
                              const ClassifierFamily& family) {
  if (family.members.empty()) throw DomainError("empty classifier family");
  check_mixture_weight(scenario.mixture, scenario.weight);
  TheoremReport r;
  r.gamma = scenario_gamma(scenario, &r.err_gpl, &r.err_gstar);
  r.p_w = (r.err_gpl.value + r.err_gstar.value) / scenario.weight.l1();
  r.gamma_above_3 = r.gamma > 3.0;
  scenario.gamma = r.gamma;
  r.r_gstar = mc_weighted_consistency(
      scenario.reference, scenario.mixture, scenario.weight, scenario.radius,
      scenario.probes, scenario.mc_samples, derive_seed(scenario.seed, kStreamRGstar));

  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < family.members.size(); ++i) {
    TheoreticalLoss loss = theoretical_csst_loss(family.members[i], scenario);
    if (loss.value < best) {
      best = loss.value;
      r.fhat_index = i;
      r.fhat_loss = loss;
    }
  }
  if (r.fhat_index < family.parameters.size()) {
    r.fhat_parameter = family.parameters[r.fhat_index];
  }
  r.err_fhat = mc_weighted_error(family.members[r.fhat_index], scenario.mixture,
                                 scenario.weight, scenario.mc_samples,
                                 derive_seed(scenario.seed, kStreamErrFhat));

  const double g = r.gamma;
  r.bound_value = weighted_error_bound(r.err_gpl.value, r.err_gstar.value,
                                 r.r_gstar.value, g);
  const double c1 = 2.0 / (g - 1.0);
  const double c2 = (g + 1.0) / (g - 1.0);
  const double c3 = 4.0 * g / (g - 1.0);
  r.bound_std_error = std::sqrt(std::pow(c1 * r.err_gpl.std_error, 2) +
                                std::pow(c2 * r.err_gstar.std_error, 2) +
                                std::pow(c3 * r.r_gstar.std_error, 2));
  r.combined_std_error = std::hypot(r.err_fhat.std_error, r.bound_std_error);
  r.bound_holds = r.err_fhat.value <= r.bound_value + 3.0 * r.combined_std_error;
  r.improves_on_gpl = r.err_fhat.value < r.err_gpl.value;
  return r;
}

bool RegionSet::contains(std::span<const double> x) const {
  switch (kind) {
    case Kind::kEverything:
      return true;
    case Kind::kHalfSpace: {
      double s = 0.0;
      for (std::size_t j = 0; j < x.size(); ++j) s += vec[j] * x[j];
      return s < scalar;
    }
    case Kind::kBall: {
      double d2 = 0.0;
      for (std::size_t j = 0; j < x.size(); ++j) d2 += (x[j] - vec[j]) * (x[j] - vec[j]);
      return d2 <= scalar * scalar;
    }
  }
  return false;
}

RegionSet RegionSet::half_space(Vector normal, double offset) {
  std::ostringstream name;
  name << "half_space(offset=" << offset << ")";
  return {Kind::kHalfSpace, std::move(normal), offset, name.str()};
}

RegionSet RegionSet::ball(Vector center, double radius) {
  if (!(radius >= 0.0)) throw DomainError("ball radius must be >= 0");
  std::ostringstream name;
  name << "ball(radius=" << radius << ")";
  return {Kind::kBall, std::move(center), radius, name.str()};
}

RegionSet RegionSet::everything(int dim) {
  return {Kind::kEverything, Vector::Zero(dim), 0.0, "everything"};
}

ExpansionReport mc_expansion_check(const MixtureModel& m, const WeightMatrix& w,
                                   double radius,
                                   const std::vector<RegionSet>& sets,
                                   std::size_t n, std::uint64_t seed, int probes) {
  check_mixture_weight(m, w);
  if (!(radius >= 0.0)) throw DomainError("radius must be >= 0");
  if (probes < 1) throw DomainError("probes must be >= 1");
  for (const auto& s : sets) {
    if (s.kind != RegionSet::Kind::kEverything && s.vec.size() != m.dim()) {
      throw ShapeError("set '" + s.name + "' has the wrong dimension");
    }
  }
  const Vector q = w.row_mass() / w.l1();
  const double reach = 2.0 * radius;
  const auto est = stratified_mc(
      m, q, n, seed, 2 * sets.size(),
      [&](int cls, std::span<const double> x, std::uint64_t key,
          std::span<double> out) {
        thread_local std::vector<double> buf;
        for (std::size_t s = 0; s < sets.size(); ++s) {
          const RegionSet& set = sets[s];
          const bool in_set = set.contains(x);
          const bool in_nb =
              in_set || (reach > 0.0 &&
                         any_probe(x, reach, probes, derive_seed(key, s), buf,
                                   [&](const std::vector<double>& y) {
                                     return set.contains(y);
                                   }));
          out[2 * s] = in_set ? q[cls] : 0.0;
          out[2 * s + 1] = in_nb ? q[cls] : 0.0;
        }
      });

  ExpansionReport report;
  report.h = 2.0 * radius / std::sqrt(m.variance());
  const ExpansionFunction c = ExpansionFunction::gaussian(report.h);
  for (std::size_t s = 0; s < sets.size(); ++s) {
    SetExpansion e;
    e.name = sets[s].name;
    e.q_set = est[2 * s];
    e.q_neighborhood = est[2 * s + 1];
    const double qs = e.q_set.value;
    e.boundary = qs <= 1e-12 || qs >= 1.0 - 1e-12;
    if (qs > 1e-12) {
      e.c_value = c(std::min(qs, 1.0));
      e.ratio = e.q_neighborhood.value / qs;
      e.margin = e.q_neighborhood.value - e.c_value * qs;
    }
    report.sets.push_back(std::move(e));
  }
  return report;
}

double weighted_measure_density(const MixtureModel& m, const WeightMatrix& w,
                                std::span<const double> x) {
  check_mixture_weight(m, w);
  if (static_cast<int>(x.size()) != m.dim()) throw ShapeError("point dimension");
  const Vector mass = w.row_mass();
  double total = 0.0;
  for (int i = 0; i < m.k(); ++i) {
    if (mass[i] > 0.0) total += mass[i] * m.density(i, x);
  }
  return total / w.l1();
}

}  // namespace csst
