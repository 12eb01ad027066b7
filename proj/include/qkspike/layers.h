// Copyright 2026 The qkspike Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Parameterised building blocks shared by the attention, embedding and model
// modules, plus the per-forward context that carries the training flag and an
// optional observer used for profiling.

#ifndef QKSPIKE_LAYERS_H_
#define QKSPIKE_LAYERS_H_

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "qkspike/ops.h"
#include "qkspike/tensor.h"

namespace qkspike {

using Rng = std::mt19937_64;

struct NamedTensor {
  std::string name;
  Tensor* tensor;
};

// Running statistics exposed for checkpointing.
struct NamedBuffer {
  std::string name;
  std::vector<double>* values;
};

enum class ActivationKind {
  kSpike,         // output of a spiking neuron, must be binary
  kShortcutSum,   // SN(main) + SN(shortcut); values in {0, 1, 2}
  kResidual,      // block residual stream; non-negative spike counts
  kAnalog,        // real-valued (encoder input, logits)
};

enum class LayerKind { kFirstEncoder, kConv, kLinear, kQktaCore, kQkcaCore, kSsaCore };

const char* LayerKindName(LayerKind kind);

// One synaptic layer as seen by the energy model. `flops` counts MACs for one
// sample at one time step; `firing_rate` is the rate of the layer's input.
struct LayerRecord {
  std::string name;
  LayerKind kind = LayerKind::kConv;
  int64_t flops = 0;
  double firing_rate = 0.0;
  int64_t time_steps = 1;
};

class ForwardObserver {
 public:
  virtual ~ForwardObserver() = default;
  virtual void OnActivation(std::string_view /*name*/, ActivationKind /*kind*/,
                            const Tensor& /*value*/) {}
  virtual void OnLayer(const LayerRecord& /*record*/) {}
};

struct ForwardContext {
  bool training = false;
  int64_t time_steps = 1;
  ForwardObserver* observer = nullptr;

  void Activation(std::string_view name, ActivationKind kind, const Tensor& value) const {
    if (observer) observer->OnActivation(name, kind, value);
  }
  void Layer(LayerRecord record) const {
    if (observer) observer->OnLayer(record);
  }
};

// Kaiming-uniform: U(-b, b) with b = sqrt(6 / fan_in).
Tensor KaimingUniform(Shape shape, int64_t fan_in, Rng& rng);

class LinearLayer {
 public:
  LinearLayer() = default;
  LinearLayer(int64_t in_features, int64_t out_features, bool bias, Rng& rng);

  // x[..., in] -> [..., out]; reports a kLinear record with N = x.dim(-2)
  // tokens per sample-step when `name` is non-empty.
  Tensor forward(const Tensor& x, const ForwardContext& ctx, std::string_view name = {}) const;

  void Collect(const std::string& prefix, std::vector<NamedTensor>& out);
  int64_t in_features() const { return in_; }
  int64_t out_features() const { return out_; }
  Tensor& weight() { return weight_; }
  Tensor& bias() { return bias_; }

 private:
  int64_t in_ = 0, out_ = 0;
  Tensor weight_;
  Tensor bias_;
};

class ConvLayer {
 public:
  ConvLayer() = default;
  ConvLayer(int64_t in_channels, int64_t out_channels, int64_t kernel, int64_t stride,
            int64_t padding, Rng& rng);

  // x[B, Cin, H, W] with B = T * batch.
  Tensor forward(const Tensor& x, const ForwardContext& ctx, std::string_view name = {},
                 LayerKind kind = LayerKind::kConv) const;

  void Collect(const std::string& prefix, std::vector<NamedTensor>& out);
  Tensor& weight() { return weight_; }
  int64_t out_channels() const { return out_c_; }
  int64_t stride() const { return stride_; }

 private:
  int64_t in_c_ = 0, out_c_ = 0, kernel_ = 1, stride_ = 1, padding_ = 0;
  Tensor weight_;
};

class BatchNormLayer {
 public:
  BatchNormLayer() = default;
  BatchNormLayer(int64_t channels, int channel_axis);

  Tensor forward(const Tensor& x, const ForwardContext& ctx) const;

  void Collect(const std::string& prefix, std::vector<NamedTensor>& out);
  void CollectBuffers(const std::string& prefix, std::vector<NamedBuffer>& out);
  Tensor& gamma() { return gamma_; }
  Tensor& beta() { return beta_; }
  BatchNormStats& stats() const { return stats_; }

 private:
  int channel_axis_ = 1;
  Tensor gamma_, beta_;
  mutable BatchNormStats stats_;
};

}  // namespace qkspike

#endif  // QKSPIKE_LAYERS_H_
