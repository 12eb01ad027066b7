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

#ifndef QKSPIKE_EMBEDDING_H_
#define QKSPIKE_EMBEDDING_H_

#include <cstdint>
#include <string>

#include "qkspike/attention.h"
#include "qkspike/layers.h"
#include "qkspike/neuron.h"

namespace qkspike {

// Activation-before-addition: Y = SN(F(X)) + SN(W_d X), values in {0, 1, 2}.
// Pre-activation: Y = SN(G(X) + W_d X), binary.
enum class ResidualStyle { kAba, kPa };

// Where the max pooling sits in the main path.
//   kPoolFirst: Conv-BN-Pool-SN-Conv-BN(-Pool)-SN
//   kPoolLast:  Conv-BN-SN-Conv-BN-Pool-SN
enum class MainPathOrder { kPoolFirst, kPoolLast };

const char* ResidualStyleName(ResidualStyle style);
ResidualStyle ParseResidualStyle(std::string_view name);
const char* MainPathOrderName(MainPathOrder order);
MainPathOrder ParseMainPathOrder(std::string_view name);

struct SpedsConfig {
  int64_t in_channels = 0;
  int64_t out_channels = 0;
  // 2 or 4. With kPoolFirst a reduction of 4 pools 2x in each conv half.
  int64_t spatial_reduction = 2;
  MainPathOrder main_path_order = MainPathOrder::kPoolFirst;
  ResidualStyle residual_style = ResidualStyle::kAba;
  int64_t kernel_size = 3;
  NeuronConfig neuron;
  InputDomain input_domain = InputDomain::kBinary;

  void Validate() const;
};

// Spiking patch embedding with a deformed (1x1, strided) shortcut.
class SpedsBlock {
 public:
  SpedsBlock() = default;
  SpedsBlock(const SpedsConfig& config, Rng& rng);

  // x[T, B, Cin, H, W] -> [T, B, Cout, H/r, W/r] using the configured style.
  Tensor forward(const Tensor& x, const ForwardContext& ctx,
                 const std::string& scope = "speds") const;

  // Explicit residual styles over the same weights.
  Tensor forward_aba(const Tensor& x, const ForwardContext& ctx,
                     const std::string& scope = "speds") const;
  Tensor forward_pa(const Tensor& x, const ForwardContext& ctx,
                    const std::string& scope = "speds") const;

  void Collect(const std::string& prefix, std::vector<NamedTensor>& out);
  void CollectBuffers(const std::string& prefix, std::vector<NamedBuffer>& out);

  const SpedsConfig& config() const { return config_; }
  ConvLayer& conv1() { return conv1_; }
  ConvLayer& conv2() { return conv2_; }
  // 1x1 projection applied to the input subsampled by spatial_reduction.
  ConvLayer& shortcut() { return shortcut_; }
  BatchNormLayer& shortcut_norm() { return shortcut_bn_; }

 private:
  struct Paths {
    Tensor main;      // G(X), pre-activation, [T*B, Cout, H', W']
    Tensor shortcut;  // BN(W_d X), pre-activation
    int64_t steps;
    int64_t batch;
  };
  Paths Run(const Tensor& x, const ForwardContext& ctx, const std::string& scope) const;
  Tensor Unfold(const Tensor& y, const Paths& p) const;

  SpedsConfig config_;
  ConvLayer conv1_, conv2_, shortcut_;
  BatchNormLayer bn1_, bn2_, shortcut_bn_;
  SpikingNeuron sn1_, sn_main_, sn_shortcut_, sn_out_;
};

Tensor speds_forward_aba(const SpedsBlock& block, const Tensor& x, const ForwardContext& ctx);
Tensor speds_forward_pa(const SpedsBlock& block, const Tensor& x, const ForwardContext& ctx);

struct EncoderConfig {
  int64_t in_channels = 3;
  // Embedding width C of stage 1; the encoder convolution produces C/2.
  int64_t channels = 32;
  MainPathOrder main_path_order = MainPathOrder::kPoolFirst;
  ResidualStyle residual_style = ResidualStyle::kAba;
  NeuronConfig neuron;
};

// Stage-1 embedding: Conv-BN-SN spike encoder followed by a 4x SPEDS block.
class Stage1Encoder {
 public:
  Stage1Encoder() = default;
  Stage1Encoder(const EncoderConfig& config, Rng& rng);

  // x is a static batch [B, n, H, W] (replicated over ctx.time_steps) or a
  // sequence [T, B, n, H, W]. Returns spikes [T, B, C, H/4, W/4].
  Tensor forward(const Tensor& x, const ForwardContext& ctx,
                 const std::string& scope = "stage1.embed") const;

  void Collect(const std::string& prefix, std::vector<NamedTensor>& out);
  void CollectBuffers(const std::string& prefix, std::vector<NamedBuffer>& out);

  const EncoderConfig& config() const { return config_; }
  SpedsBlock& speds() { return speds_; }

 private:
  EncoderConfig config_;
  ConvLayer conv_;
  BatchNormLayer bn_;
  SpikingNeuron sn_;
  SpedsBlock speds_;
};

Tensor stage1_encoder(const Stage1Encoder& encoder, const Tensor& x, const ForwardContext& ctx);

}  // namespace qkspike

#endif  // QKSPIKE_EMBEDDING_H_
