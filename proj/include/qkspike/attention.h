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

#ifndef QKSPIKE_ATTENTION_H_
#define QKSPIKE_ATTENTION_H_

#include <cstdint>
#include <optional>
#include <string>

#include "qkspike/layers.h"
#include "qkspike/neuron.h"
#include "qkspike/tensor.h"

namespace qkspike {

enum class Mechanism { kQkta, kQkca, kSsa };

const char* MechanismName(Mechanism mechanism);
Mechanism ParseMechanism(std::string_view name);

// What the projections accept: strict spikes, or the non-negative spike
// counts that an activation-before-addition residual stream carries.
enum class InputDomain { kBinary, kSpikeCount };

struct AttentionConfig {
  Mechanism mechanism = Mechanism::kQkta;
  int64_t embed_dim = 0;
  int64_t heads = 1;
  // SSA only; defaults to head_dim^-1/2. Set to 1.0 for the unscaled variant.
  std::optional<double> ssa_scale;
  // Neuron that turns the Q sums into the attention vector (LIF or PLIF).
  NeuronKind attention_neuron = NeuronKind::kLif;
  NeuronConfig neuron;
  InputDomain input_domain = InputDomain::kBinary;

  int64_t head_dim() const { return heads > 0 ? embed_dim / heads : 0; }
  double scale() const;
  NeuronConfig attention_neuron_config() const;
  void Validate() const;
};

// Operation and workspace counts of the attention core (between Q/K/V and
// the post projection). attention_ops counts accumulate and mask operations;
// workspace_elements counts the extra elements the core allocates.
struct ComplexityReport {
  int64_t attention_ops = 0;
  int64_t workspace_elements = 0;

  ComplexityReport& operator+=(const ComplexityReport& other) {
    attention_ops += other.attention_ops;
    workspace_elements += other.workspace_elements;
    return *this;
  }
  bool operator==(const ComplexityReport&) const = default;
};

// Closed-form counts for one forward over [T, batch, N, D] inputs:
//   QKTA  ops 2*N*D,    workspace N*h
//   QKCA  ops 2*N*D,    workspace D
//   SSA   ops 2*N^2*D,  workspace h*N^2
// each per sample and time step.
ComplexityReport complexity_of(Mechanism mechanism, int64_t tokens, int64_t embed_dim,
                               int64_t heads, int64_t time_steps, int64_t batch = 1);

// Attention cores. Inputs are [T, ..., N, D] spike tensors; the leading axis
// is time, N tokens, D channels split into `heads` slices of D/heads.

// Token attention: A_t = SN(sum of Q over each head's channels), X' = A_t (x) K
// as a per-token mask. `attention_vector` receives A_t as [T, ..., N, heads].
Tensor qkta_forward(const Tensor& q, const Tensor& k, const AttentionConfig& config,
                    ComplexityReport* counters = nullptr, Tensor* attention_vector = nullptr,
                    const Tensor* plif_weight = nullptr);

// Channel attention: A_c = SN(sum of Q over tokens), X' = A_c (x) K as a
// per-channel mask. `attention_vector` receives A_c as [T, ..., 1, D].
Tensor qkca_forward(const Tensor& q, const Tensor& k, const AttentionConfig& config,
                    ComplexityReport* counters = nullptr, Tensor* attention_vector = nullptr,
                    const Tensor* plif_weight = nullptr);

// Spiking self attention: SN(Q K^T V * s), per head.
Tensor ssa_forward(const Tensor& q, const Tensor& k, const Tensor& v,
                   const AttentionConfig& config, ComplexityReport* counters = nullptr);

// Intermediate tensors of one SpikingAttention forward.
struct AttentionTrace {
  Tensor q, k, v;
  Tensor attention_vector;  // A_t or A_c; undefined for SSA
  Tensor masked;            // X'
  Tensor output;            // X''
};

// Q/K(/V) generation, attention core and post projection with learnable
// weights: I = SN(BN(Linear(x))) for I in {Q, K, V}, X'' = SN(BN(Linear(X'))).
class SpikingAttention {
 public:
  SpikingAttention() = default;
  SpikingAttention(const AttentionConfig& config, Rng& rng);

  // x[T, B, N, D] -> X''[T, B, N, D].
  Tensor forward(const Tensor& x, const ForwardContext& ctx, const std::string& scope = "attn",
                 AttentionTrace* trace = nullptr) const;

  std::pair<Tensor, Tensor> make_qk(const Tensor& x, const ForwardContext& ctx,
                                    const std::string& scope = "attn") const;
  Tensor make_v(const Tensor& x, const ForwardContext& ctx,
                const std::string& scope = "attn") const;
  Tensor post_projection(const Tensor& masked, const ForwardContext& ctx,
                         const std::string& scope = "attn") const;

  void Collect(const std::string& prefix, std::vector<NamedTensor>& out);
  void CollectBuffers(const std::string& prefix, std::vector<NamedBuffer>& out);

  const AttentionConfig& config() const { return config_; }
  const ComplexityReport& counters() const { return counters_; }
  void reset_counters() const { counters_ = {}; }
  LinearLayer& post_linear() { return proj_linear_; }
  BatchNormLayer& post_norm() { return proj_bn_; }

 private:
  struct Projection {
    LinearLayer linear;
    BatchNormLayer norm;
    SpikingNeuron neuron;
  };
  Tensor Project(const Projection& p, const Tensor& x, const ForwardContext& ctx,
                 const std::string& name) const;

  AttentionConfig config_;
  Projection q_, k_, v_;
  SpikingNeuron attention_sn_;
  LinearLayer proj_linear_;
  BatchNormLayer proj_bn_;
  SpikingNeuron proj_sn_;
  mutable ComplexityReport counters_;
};

}  // namespace qkspike

#endif  // QKSPIKE_ATTENTION_H_
