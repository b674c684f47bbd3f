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

// Monte-Carlo checks of the weighted-error guarantee for self-training.
//
// Notation used throughout:
//   err_w(F)      = sum_ij w_ij P_i(F(x) != j)
//   R_{B,w}(F)    = sum_ij w_ij P_i(exists x' in B(x): F(x') != F(x))
//   L_w(F, gpl)   = sum_ij w_ij P_i(F(x) != gpl(x))
//   P_w           = sum_ij w_ij P_i / |w|_1
//   c(p)          = Phi(Phi^-1(p) + h) / p, h = 2r / sigma  (= 2 r sqrt(d)
//                   for the per-coordinate variance 1/d)
//   gamma         = c(p_w), p_w = (err_w(gpl) + err_w(F*)) / |w|_1
//
// For a minimizer F_hat of
//   (gamma+1)/(gamma-1) L_w(F, gpl) + 2 gamma/(gamma-1) R_{B,w}(F)
// the bound is
//   err_w(F_hat) <= 2/(gamma-1) err_w(gpl) + (gamma+1)/(gamma-1) err_w(F*)
//                   + 4 gamma/(gamma-1) R_{B,w}(F*).
//
// B(x) is the l2 ball of radius r. "There is a point of B(x) where F differs"
// is decided by probing: uniform points in the ball plus the 2d axis points
// x +- r e_j. Estimates of R and of neighborhood masses are therefore lower
// bounds; for threshold classifiers in 1-D the axis probes make them exact.

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "csst/common.hpp"
#include "csst/data.hpp"
#include "csst/metrics.hpp"

namespace csst {

double std_normal_cdf(double x);
// Inverse of std_normal_cdf on (0, 1); DomainError outside.
double std_normal_quantile(double p);

// Phi(Phi^-1(p) + h) / p for p in (0, 1), h >= 0.
double expansion_c_gauss(double p, double h);

class ExpansionFunction {
 public:
  static ExpansionFunction gaussian(double h);
  // Piecewise-linear interpolation of (p, c) samples; p strictly increasing.
  static ExpansionFunction tabulated(std::vector<double> p, std::vector<double> c);

  double operator()(double p) const;
  bool is_gaussian() const { return table_p_.empty(); }
  double h() const { return h_; }

  // c >= 1 and non-increasing on `points` evenly spaced p in [lo, hi].
  bool is_valid_on_grid(double lo, double hi, int points) const;

 private:
  double h_ = 0.0;
  std::vector<double> table_p_;
  std::vector<double> table_c_;
};

struct GammaResult {
  double gamma = 0.0;
  bool assumption_holds = false;  // gamma > 3
};

// gamma = c(p_w); p_w must be in (0, 1].
GammaResult gamma_of(double p_w, const ExpansionFunction& c);

// Root p* of c(p) = level for the Gaussian expansion, by bisection on
// (lo, hi). c is non-increasing, so c(p) > level exactly for p < p*.
double expansion_level_crossing(double h, double level, double tol = 1e-10,
                                double lo = 1e-6, double hi = 1.0 - 1e-6);

using Classifier = std::function<int(std::span<const double>)>;

// argmax_k log w_k + log density_k(x); ties to the lowest index.
Classifier bayes_weighted_diag(const Vector& w_diag, const MixtureModel& m);

// <direction, x> < offset ? below : above.
Classifier threshold_classifier(Vector direction, double offset, int below,
                                int above);

Classifier constant_classifier(int cls);

struct McEstimate {
  double value = 0.0;
  double std_error = 0.0;
};

// Stratified over classes with positive row mass, equal samples per class.
McEstimate mc_weighted_error(const Classifier& f, const MixtureModel& m,
                             const WeightMatrix& w, std::size_t n,
                             std::uint64_t seed);

// Lower-bound estimate of R_{B,w}(F) with `probes` uniform ball points and
// the axis points per sample.
McEstimate mc_weighted_consistency(const Classifier& f, const MixtureModel& m,
                                   const WeightMatrix& w, double radius,
                                   int probes, std::size_t n, std::uint64_t seed);

// L_w(F, gpl).
McEstimate mc_weighted_disagreement(const Classifier& f, const Classifier& gpl,
                                    const MixtureModel& m, const WeightMatrix& w,
                                    std::size_t n, std::uint64_t seed);

double weighted_error_bound(double err_gpl, double err_gstar, double r_gstar,
                      double gamma);

struct TheoremScenario {
  MixtureModel mixture;
  WeightMatrix weight;
  Classifier pseudo_labeler;
  Classifier reference;  // F*, plugged in through its measured err and R
  double radius = 0.5;
  int probes = 64;
  std::size_t mc_samples = 100000;
  std::uint64_t seed = 0;
  // Filled by verify_error_bound; theoretical_csst_loss computes it if unset.
  std::optional<double> gamma;

  // h = 2r / sigma.
  double expansion_h() const;
};

// d=1, K=2, means -a and +a, unit variance, w = diag(0.5, 0.5). The
// pseudo-labeler is the threshold t >= 0 with err_w = gpl_error; F* is the
// weighted Bayes rule. DomainError if gpl_error is not reachable by t >= 0.
TheoremScenario one_dim_scenario(double half_gap, double radius, double gpl_error,
                                 std::size_t mc_samples, std::uint64_t seed);

// one_dim_scenario(3, 0.5, 0.10, ...): h = 1, gamma about 3.87.
TheoremScenario canonical_scenario(std::size_t mc_samples = 100000,
                                   std::uint64_t seed = 20240607);

struct TheoreticalLoss {
  double value = 0.0;
  double std_error = 0.0;
  McEstimate disagreement;  // L_w(F, gpl)
  McEstimate consistency;   // R_{B,w}(F)
  double gamma = 0.0;
};

TheoreticalLoss theoretical_csst_loss(const Classifier& f,
                                      const TheoremScenario& scenario);

struct ClassifierFamily {
  std::vector<Classifier> members;
  std::vector<double> parameters;  // e.g. threshold offsets, for reporting
};

ClassifierFamily threshold_family(const Vector& direction, double lo, double hi,
                                  int steps, int below, int above);

struct TheoremReport {
  McEstimate err_gpl;
  McEstimate err_gstar;
  McEstimate r_gstar;
  double p_w = 0.0;
  double gamma = 0.0;
  bool gamma_above_3 = false;
  double bound_value = 0.0;
  double bound_std_error = 0.0;
  std::size_t fhat_index = 0;
  double fhat_parameter = 0.0;
  McEstimate err_fhat;
  TheoreticalLoss fhat_loss;
  double combined_std_error = 0.0;  // err_fhat and bound errors in quadrature
  bool bound_holds = false;         // err_fhat <= bound + 3 combined_std_error
  bool improves_on_gpl = false;     // err_fhat < err_gpl
};

// Picks F_hat = argmin over the family of the MC-estimated objective (common
// random numbers across members) and evaluates the bound. DomainError when
// gamma <= 1 or err_gpl + err_gstar > |w|_1.
TheoremReport verify_error_bound(TheoremScenario scenario,
                              const ClassifierFamily& family);

// Sets for the expansion check.
struct RegionSet {
  enum class Kind { kHalfSpace, kBall, kEverything };
  Kind kind = Kind::kEverything;
  Vector vec;          // half-space normal or ball center
  double scalar = 0;   // half-space offset (<vec, x> < scalar) or ball radius
  std::string name;

  bool contains(std::span<const double> x) const;

  static RegionSet half_space(Vector normal, double offset);
  static RegionSet ball(Vector center, double radius);
  static RegionSet everything(int dim);
};

struct SetExpansion {
  std::string name;
  McEstimate q_set;           // Q(S)
  McEstimate q_neighborhood;  // lower bound on Q(N(S)), N(S) = S + 2r ball
  double c_value = 0.0;       // c(Q(S)) at h = 2r / sigma
  double ratio = 0.0;         // Q(N(S)) / Q(S)
  double margin = 0.0;        // Q(N(S)) - c(Q(S)) Q(S)
  bool boundary = false;      // Q(S) in {0, 1}: no expansion is possible
};

struct ExpansionReport {
  double h = 0.0;
  std::vector<SetExpansion> sets;
};

// Q = P_w. Samples are shared across sets.
ExpansionReport mc_expansion_check(const MixtureModel& m, const WeightMatrix& w,
                                   double radius,
                                   const std::vector<RegionSet>& sets,
                                   std::size_t n, std::uint64_t seed,
                                   int probes = 64);

// Density of P_w at x: sum_i (sum_j w_ij) p_i(x) / |w|_1.
double weighted_measure_density(const MixtureModel& m, const WeightMatrix& w,
                                std::span<const double> x);

}  // namespace csst
