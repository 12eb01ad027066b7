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

// Hierarchical three-stage spiking transformer: stage-wise patch embeddings,
// attention + SMLP blocks and a linear classifier over time/token averages.

#ifndef QKSPIKE_MODEL_H_
#define QKSPIKE_MODEL_H_

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"
#include "qkspike/attention.h"
#include "qkspike/embedding.h"
#include "qkspike/layers.h"
#include "qkspike/neuron.h"

namespace qkspike {

inline constexpr int64_t kMlpRatio = 4;
inline constexpr int kNumStages = 3;

struct ModelConfig {
  int64_t image_height = 32;
  int64_t image_width = 32;
  int64_t in_channels = 3;
  // Stage widths are C, 2C, 4C.
  int64_t channels = 32;
  std::array<int64_t, kNumStages> blocks = {1, 1, 2};
  std::array<Mechanism, kNumStages> mechanisms = {Mechanism::kQkta, Mechanism::kQkta,
                                                  Mechanism::kSsa};
  // 0 selects D / 32 (at least 1).
  std::array<int64_t, kNumStages> heads = {0, 0, 0};
  int64_t time_steps = 4;
  NeuronConfig neuron;
  NeuronKind attention_neuron = NeuronKind::kLif;
  ResidualStyle residual_style = ResidualStyle::kAba;
  MainPathOrder main_path_order = MainPathOrder::kPoolFirst;
  int64_t num_classes = 10;

  int64_t stage_dim(int stage) const { return channels << stage; }
  int64_t stage_heads(int stage) const;
  // Token count of each stage: H/4*W/4, H/8*W/8, H/16*W/16.
  int64_t stage_tokens(int stage) const;
  void Validate() const;

  nlohmann::json ToJson() const;
  // Missing keys keep their defaults; unknown keys are rejected.
  static ModelConfig FromJson(const nlohmann::json& j);
};

// One transformer block: X' = Attn(X) + X, X_out = SMLP(X') + X'.
class Block {
 public:
  Block() = default;
  Block(const AttentionConfig& attention, const NeuronConfig& neuron, Rng& rng);

  // x[T, B, N, D] -> [T, B, N, D].
  Tensor forward(const Tensor& x, const ForwardContext& ctx, const std::string& scope) const;
  Tensor smlp(const Tensor& x, const ForwardContext& ctx, const std::string& scope) const;

  void Collect(const std::string& prefix, std::vector<NamedTensor>& out);
  void CollectBuffers(const std::string& prefix, std::vector<NamedBuffer>& out);

  SpikingAttention& attention() { return attention_; }
  const SpikingAttention& attention() const { return attention_; }
  LinearLayer& fc1() { return fc1_; }
  LinearLayer& fc2() { return fc2_; }

 private:
  SpikingAttention attention_;
  LinearLayer fc1_, fc2_;
  BatchNormLayer bn1_, bn2_;
  SpikingNeuron sn1_, sn2_;
};

Tensor block_forward(const Block& block, const Tensor& x, const ForwardContext& ctx);

class QKFormer {
 public:
  QKFormer(const ModelConfig& config, uint64_t seed);

  // x is [B, n, H, W] (static, replicated over T) or [T, B, n, H, W].
  // Returns logits [B, num_classes].
  Tensor forward(const Tensor& x, ForwardObserver* observer = nullptr) const;
  // Stage-3 features [T, B, N3, 4C] before pooling.
  Tensor features(const Tensor& x, ForwardObserver* observer = nullptr) const;

  void set_training(bool training) { training_ = training; }
  bool training() const { return training_; }
  // Overrides the simulation length for static inputs.
  void set_time_steps(int64_t t);

  const ModelConfig& config() const { return config_; }
  std::vector<NamedTensor> parameters();
  std::vector<NamedBuffer> buffers();
  int64_t parameter_count();

  Block& block(int stage, int index) { return stages_[stage][index]; }
  int64_t num_blocks(int stage) const {
    return static_cast<int64_t>(stages_[stage].size());
  }
  SpedsBlock& downsample(int stage) { return downsample_[stage - 1]; }
  Stage1Encoder& encoder() { return encoder_; }
  LinearLayer& head() { return head_; }

 private:
  ModelConfig config_;
  bool training_ = false;
  Stage1Encoder encoder_;
  std::array<SpedsBlock, kNumStages - 1> downsample_;
  std::array<std::vector<Block>, kNumStages> stages_;
  LinearLayer head_;
};

std::unique_ptr<QKFormer> build(const ModelConfig& config, uint64_t seed);

// [T, B, C, H, W] <-> [T, B, H*W, C].
Tensor ImageToTokens(const Tensor& x);
Tensor TokensToImage(const Tensor& x, int64_t height, int64_t width);

}  // namespace qkspike

#endif  // QKSPIKE_MODEL_H_
