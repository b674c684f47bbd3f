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

#include "csst/model.hpp"

#include <cmath>
#include <fstream>
#include <random>

#include "binary_io.hpp"
#include "csst/error.hpp"

namespace csst {
namespace {

constexpr char kCheckpointMagic[9] = "CSSTMDL1";

// Locates flat parameter `index`; returns (layer, offset, is_bias).
struct ParamSlot {
  std::size_t layer;
  std::size_t offset;
  bool is_bias;
};

ParamSlot locate(const std::vector<int>& sizes, std::size_t index) {
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const std::size_t n_w = static_cast<std::size_t>(sizes[l]) * sizes[l + 1];
    const std::size_t n_b = static_cast<std::size_t>(sizes[l + 1]);
    if (index < n_w) return {l, index, false};
    index -= n_w;
    if (index < n_b) return {l, index, true};
    index -= n_b;
  }
  throw ShapeError("parameter index out of range");
}

}  // namespace

MlpModel::MlpModel(std::vector<int> layer_sizes)
    : layer_sizes_(std::move(layer_sizes)) {
  if (layer_sizes_.size() < 2) {
    throw ShapeError("a model needs at least input and output sizes");
  }
  for (int s : layer_sizes_) {
    if (s <= 0) throw ShapeError("layer sizes must be positive");
  }
  for (std::size_t l = 0; l + 1 < layer_sizes_.size(); ++l) {
    layers_.push_back({Matrix::Zero(layer_sizes_[l + 1], layer_sizes_[l]),
                       Vector::Zero(layer_sizes_[l + 1])});
  }
}

MlpModel::MlpModel(std::vector<int> layer_sizes, std::uint64_t seed)
    : MlpModel(std::move(layer_sizes)) {
  Rng rng(seed);
  for (auto& layer : layers_) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(layer.weights.cols()));
    std::uniform_real_distribution<double> init(-bound, bound);
    for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) {
        layer.weights(r, c) = init(rng);
      }
    }
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r) layer.bias[r] = init(rng);
  }
}

MlpModel MlpModel::zeros(std::vector<int> layer_sizes) {
  return MlpModel(std::move(layer_sizes));
}

std::size_t MlpModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& layer : layers_) {
    n += static_cast<std::size_t>(layer.weights.size() + layer.bias.size());
  }
  return n;
}

double MlpModel::parameter(std::size_t index) const {
  const ParamSlot slot = locate(layer_sizes_, index);
  const DenseLayer& layer = layers_[slot.layer];
  if (slot.is_bias) return layer.bias[slot.offset];
  return layer.weights(slot.offset / layer.weights.cols(),
                       slot.offset % layer.weights.cols());
}

double& MlpModel::parameter(std::size_t index) {
  const ParamSlot slot = locate(layer_sizes_, index);
  DenseLayer& layer = layers_[slot.layer];
  if (slot.is_bias) return layer.bias[slot.offset];
  return layer.weights(slot.offset / layer.weights.cols(),
                       slot.offset % layer.weights.cols());
}

bool MlpModel::all_finite() const {
  for (const auto& layer : layers_) {
    if (!layer.weights.allFinite() || !layer.bias.allFinite()) return false;
  }
  return true;
}

ForwardTrace forward_batch(const MlpModel& model, const FeatureMatrix& x) {
  if (x.cols() != model.input_dim()) {
    throw ShapeError("input has dimension " + std::to_string(x.cols()) +
                     ", model expects " + std::to_string(model.input_dim()));
  }
  ForwardTrace trace;
  Matrix h = x;
  const auto& layers = model.layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    Matrix pre = h * layers[l].weights.transpose();
    pre.rowwise() += layers[l].bias.transpose();
    trace.inputs.push_back(std::move(h));
    if (l + 1 < layers.size()) {
      h = pre.cwiseMax(0.0);
    } else {
      trace.logits = pre;
    }
    trace.pre.push_back(std::move(pre));
  }
  return trace;
}

Matrix forward_logits(const MlpModel& model, const FeatureMatrix& x) {
  return forward_batch(model, x).logits;
}

LogitVector forward(const MlpModel& model, std::span<const double> x) {
  FeatureMatrix row(1, static_cast<Eigen::Index>(x.size()));
  for (std::size_t i = 0; i < x.size(); ++i) row(0, static_cast<Eigen::Index>(i)) = x[i];
  return LogitVector(forward_logits(model, row).row(0).transpose());
}

int predict(const MlpModel& model, std::span<const double> x) {
  return argmax(forward(model, x).values());
}

std::vector<int> predict_batch(const MlpModel& model, const FeatureMatrix& x) {
  const Matrix logits = forward_logits(model, x);
  std::vector<int> out(static_cast<std::size_t>(logits.rows()));
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    out[static_cast<std::size_t>(r)] = argmax(Vector(logits.row(r).transpose()));
  }
  return out;
}

Gradients Gradients::zeros_like(const MlpModel& model) {
  Gradients g;
  for (const auto& layer : model.layers()) {
    g.weights.push_back(Matrix::Zero(layer.weights.rows(), layer.weights.cols()));
    g.bias.push_back(Vector::Zero(layer.bias.size()));
  }
  return g;
}

void Gradients::set_zero() {
  for (auto& w : weights) w.setZero();
  for (auto& b : bias) b.setZero();
}

double Gradients::parameter(std::size_t index) const {
  std::vector<int> sizes;
  sizes.push_back(static_cast<int>(weights.front().cols()));
  for (const auto& w : weights) sizes.push_back(static_cast<int>(w.rows()));
  const ParamSlot slot = locate(sizes, index);
  if (slot.is_bias) return bias[slot.layer][slot.offset];
  const Matrix& m = weights[slot.layer];
  return m(slot.offset / m.cols(), slot.offset % m.cols());
}

void backward(const MlpModel& model, const ForwardTrace& trace,
              const Matrix& dlogits, Gradients& grads) {
  const auto& layers = model.layers();
  if (dlogits.rows() != trace.logits.rows() ||
      dlogits.cols() != trace.logits.cols()) {
    throw ShapeError("logit gradient does not match the traced batch");
  }
  Matrix delta = dlogits;
  for (std::size_t l = layers.size(); l-- > 0;) {
    grads.weights[l].noalias() += delta.transpose() * trace.inputs[l];
    grads.bias[l] += delta.colwise().sum().transpose();
    if (l == 0) break;
    Matrix upstream = delta * layers[l].weights;
    // Rectifier derivative, taken as 0 at exactly 0.
    const Matrix& pre = trace.pre[l - 1];
    delta = (pre.array() > 0.0).select(upstream, 0.0);
  }
}

OptimizerState::OptimizerState(const MlpModel& model, double lr, double mom,
                               double wd)
    : learning_rate(lr),
      momentum(mom),
      weight_decay(wd),
      velocity(Gradients::zeros_like(model)) {
  if (!(lr > 0.0)) throw DomainError("learning rate must be positive");
  if (!(mom >= 0.0 && mom < 1.0)) throw DomainError("momentum must be in [0,1)");
  if (!(wd >= 0.0)) throw DomainError("weight decay must be nonnegative");
}

void sgd_step(MlpModel& model, const Gradients& grads, OptimizerState& opt) {
  auto& layers = model.layers();
  if (grads.weights.size() != layers.size() ||
      opt.velocity.weights.size() != layers.size()) {
    throw ShapeError("gradient structure does not match the model");
  }
  for (std::size_t l = 0; l < layers.size(); ++l) {
    auto& vw = opt.velocity.weights[l];
    auto& vb = opt.velocity.bias[l];
    vw = opt.momentum * vw + grads.weights[l] + opt.weight_decay * layers[l].weights;
    vb = opt.momentum * vb + grads.bias[l];
    layers[l].weights -= opt.learning_rate * vw;
    layers[l].bias -= opt.learning_rate * vb;
  }
}

void save_checkpoint(const MlpModel& model, std::ostream& out) {
  binary::write_magic(out, kCheckpointMagic);
  const auto& sizes = model.layer_sizes();
  binary::write_uint<std::uint32_t>(out, static_cast<std::uint32_t>(sizes.size()));
  for (int s : sizes) binary::write_uint<std::uint32_t>(out, static_cast<std::uint32_t>(s));
  for (const auto& layer : model.layers()) {
    for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) {
        binary::write_f64(out, layer.weights(r, c));
      }
    }
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r) {
      binary::write_f64(out, layer.bias[r]);
    }
  }
  if (!out) throw IoError("failed writing checkpoint");
}

void save_checkpoint(const MlpModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  save_checkpoint(model, out);
}

MlpModel load_checkpoint(std::istream& in) {
  const std::string magic = binary::read_magic(in);
  if (magic.rfind("CSSTMDL", 0) == 0 && magic != kCheckpointMagic) {
    throw VersionError("unsupported checkpoint version '" + magic + "'");
  }
  if (magic != kCheckpointMagic) throw FormatError("not a CSST checkpoint");
  const auto count = binary::read_uint<std::uint32_t>(in, "layer count");
  if (count < 2 || count > 64) throw FormatError("implausible layer count");
  std::vector<int> sizes;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto s = binary::read_uint<std::uint32_t>(in, "layer size");
    if (s == 0 || s > (1u << 20)) throw FormatError("implausible layer size");
    sizes.push_back(static_cast<int>(s));
  }
  MlpModel model = MlpModel::zeros(sizes);
  for (auto& layer : model.layers()) {
    for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) {
        layer.weights(r, c) = binary::read_f64(in, "weights");
      }
    }
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r) {
      layer.bias[r] = binary::read_f64(in, "biases");
    }
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw FormatError("trailing bytes after checkpoint parameters");
  }
  if (!model.all_finite()) throw FormatError("checkpoint holds non-finite values");
  return model;
}

MlpModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  return load_checkpoint(in);
}

}  // namespace csst
