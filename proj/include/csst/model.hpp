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

// Small fully-connected classifier: rectifier hidden layers, linear output.

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "csst/common.hpp"
#include "csst/losses.hpp"

namespace csst {

struct DenseLayer {
  Matrix weights;  // out x in
  Vector bias;     // out
};

class MlpModel {
 public:
  // Uniform init in [-1/sqrt(fan_in), 1/sqrt(fan_in)] for weights and biases.
  MlpModel(std::vector<int> layer_sizes, std::uint64_t seed);

  // All parameters zero.
  static MlpModel zeros(std::vector<int> layer_sizes);

  const std::vector<int>& layer_sizes() const { return layer_sizes_; }
  int input_dim() const { return layer_sizes_.front(); }
  int num_classes() const { return layer_sizes_.back(); }

  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::vector<DenseLayer>& layers() { return layers_; }

  // Flat view in checkpoint order: per layer, weights row-major then bias.
  std::size_t parameter_count() const;
  double parameter(std::size_t index) const;
  double& parameter(std::size_t index);

  bool all_finite() const;

 private:
  explicit MlpModel(std::vector<int> layer_sizes);

  std::vector<int> layer_sizes_;
  std::vector<DenseLayer> layers_;
};

// Activations kept for the backward pass. Row t belongs to sample t.
struct ForwardTrace {
  std::vector<Matrix> inputs;  // input to each layer
  std::vector<Matrix> pre;     // pre-activation of each layer
  Matrix logits;
};

LogitVector forward(const MlpModel& model, std::span<const double> x);
ForwardTrace forward_batch(const MlpModel& model, const FeatureMatrix& x);
// Logits for every row of `x`.
Matrix forward_logits(const MlpModel& model, const FeatureMatrix& x);
int predict(const MlpModel& model, std::span<const double> x);
std::vector<int> predict_batch(const MlpModel& model, const FeatureMatrix& x);

struct Gradients {
  std::vector<Matrix> weights;
  std::vector<Vector> bias;

  static Gradients zeros_like(const MlpModel& model);
  void set_zero();
  double parameter(std::size_t index) const;
};

// Accumulates d(loss)/d(params) into `grads` given d(loss)/d(logits) for
// every row of the traced batch.
void backward(const MlpModel& model, const ForwardTrace& trace,
              const Matrix& dlogits, Gradients& grads);

struct OptimizerState {
  double learning_rate = 0.03;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  Gradients velocity;

  OptimizerState(const MlpModel& model, double lr, double momentum,
                 double weight_decay);
};

// v <- m v + g + wd * theta (weights only); theta <- theta - lr v.
void sgd_step(MlpModel& model, const Gradients& grads, OptimizerState& opt);

// Binary checkpoint: "CSSTMDL1", u32 count of layer sizes, u32 sizes, then
// f64 parameters in layer order (weights row-major, then biases). All
// integers and floats little-endian.
void save_checkpoint(const MlpModel& model, std::ostream& out);
void save_checkpoint(const MlpModel& model, const std::filesystem::path& path);
MlpModel load_checkpoint(std::istream& in);
MlpModel load_checkpoint(const std::filesystem::path& path);

}  // namespace csst
