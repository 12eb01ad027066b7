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

#ifndef QKSPIKE_NEURON_H_
#define QKSPIKE_NEURON_H_

#include <vector>

#include "qkspike/tensor.h"

namespace qkspike {

enum class NeuronKind { kLif, kIf, kPlif };

const char* NeuronKindName(NeuronKind kind);
NeuronKind ParseNeuronKind(std::string_view name);

struct NeuronConfig {
  NeuronKind kind = NeuronKind::kLif;
  // Membrane time constant; for PLIF the initial value of the learned one.
  double tau = 2.0;
  double v_threshold = 1.0;
  double v_reset = 0.0;
  double surrogate_alpha = 4.0;
  // When set, the spike's contribution to the reset term carries no gradient.
  bool detach_reset = true;

  void Validate() const;
};

// Membrane potential V[t-1] per element, carried between time steps.
struct NeuronState {
  std::vector<double> v;

  static NeuronState Fresh(int64_t elements, const NeuronConfig& config) {
    return NeuronState{std::vector<double>(static_cast<size_t>(elements), config.v_reset)};
  }
};

struct StepResult {
  Tensor spikes;
  // Charged potential H[t], before the threshold test.
  Tensor membrane;
  NeuronState state;
};

// One time step of charge / fire / hard reset. For PLIF the decay is 1/tau.
StepResult lif_step(const Tensor& x, NeuronState state, const NeuronConfig& config);

// d/du of sigmoid(alpha * u): alpha * s * (1 - s).
double SurrogateGradient(double u, double alpha);

// grad_in = grad_out * SurrogateGradient(u, alpha), element-wise.
Tensor surrogate_backward(const Tensor& grad_out, const Tensor& u, double alpha);

// Per-step H[t] and V[t] captured during a multi-step forward; flat [T, n].
struct NeuronTrace {
  std::vector<double> charged;
  std::vector<double> membrane;
};

// Runs the neuron over x[T, ...] from a fresh state. Heaviside forward,
// sigmoid surrogate backward through time. `plif_weight` is the scalar whose
// sigmoid gives 1/tau and is required for PLIF. A positive `time_steps`
// overrides the leading axis: x is then read as [time_steps, numel / time_steps]
// (used for T-major folded [T*B, ...] activations).
Tensor multistep_forward(const Tensor& x, const NeuronConfig& config,
                         const Tensor* plif_weight = nullptr, NeuronTrace* trace = nullptr,
                         int64_t time_steps = 0);

// Inverse of the PLIF parameterisation: sigmoid(PlifWeightForTau(tau)) == 1/tau.
double PlifWeightForTau(double tau);

// Spiking neuron layer: a config plus, for PLIF, its trainable leak.
class SpikingNeuron {
 public:
  explicit SpikingNeuron(const NeuronConfig& config = {});

  Tensor forward(const Tensor& x, NeuronTrace* trace = nullptr, int64_t time_steps = 0) const;

  const NeuronConfig& config() const { return config_; }
  // Non-null only for PLIF.
  Tensor* plif_weight() { return plif_weight_.defined() ? &plif_weight_ : nullptr; }
  const Tensor* plif_weight() const {
    return plif_weight_.defined() ? &plif_weight_ : nullptr;
  }

 private:
  NeuronConfig config_;
  Tensor plif_weight_;
};

}  // namespace qkspike

#endif  // QKSPIKE_NEURON_H_
