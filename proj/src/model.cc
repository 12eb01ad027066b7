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

#include "qkspike/model.h"

#include <set>

#include "qkspike/ops.h"

namespace qkspike {

namespace {

using nlohmann::json;

json NeuronToJson(const NeuronConfig& n) {
  return {{"kind", NeuronKindName(n.kind)},   {"tau", n.tau},
          {"v_threshold", n.v_threshold},      {"v_reset", n.v_reset},
          {"surrogate_alpha", n.surrogate_alpha}, {"detach_reset", n.detach_reset}};
}

void RejectUnknown(const json& j, const std::set<std::string>& known, const char* where) {
  if (!j.is_object()) throw ConfigError(std::string(where) + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) {
      throw ConfigError(std::string("unknown key '") + key + "' in " + where);
    }
  }
}

NeuronConfig NeuronFromJson(const json& j) {
  RejectUnknown(j, {"kind", "tau", "v_threshold", "v_reset", "surrogate_alpha", "detach_reset"},
                "neuron");
  NeuronConfig n;
  if (j.contains("kind")) n.kind = ParseNeuronKind(j.at("kind").get<std::string>());
  n.tau = j.value("tau", n.tau);
  n.v_threshold = j.value("v_threshold", n.v_threshold);
  n.v_reset = j.value("v_reset", n.v_reset);
  n.surrogate_alpha = j.value("surrogate_alpha", n.surrogate_alpha);
  n.detach_reset = j.value("detach_reset", n.detach_reset);
  return n;
}

template <typename T, typename F>
std::array<T, kNumStages> StageArray(const json& j, const char* key, F convert) {
  if (!j.is_array() || j.size() != kNumStages) {
    throw ConfigError(std::string(key) + " must be an array of 3 entries");
  }
  std::array<T, kNumStages> out{};
  for (int s = 0; s < kNumStages; ++s) out[s] = convert(j[s]);
  return out;
}

}  // namespace

int64_t ModelConfig::stage_heads(int stage) const {
  if (heads[stage] > 0) return heads[stage];
  return std::max<int64_t>(1, stage_dim(stage) / 32);
}

int64_t ModelConfig::stage_tokens(int stage) const {
  const int64_t f = int64_t{4} << stage;
  return (image_height / f) * (image_width / f);
}

void ModelConfig::Validate() const {
  if (image_height < 16 || image_width < 16 || image_height % 16 != 0 ||
      image_width % 16 != 0) {
    throw ConfigError("image height and width must be positive multiples of 16, got " +
                      std::to_string(image_height) + "x" + std::to_string(image_width));
  }
  if (in_channels < 1) throw ConfigError("in_channels must be >= 1");
  if (channels < 2 || channels % 2 != 0) throw ConfigError("channels must be even and >= 2");
  if (time_steps < 1) throw ConfigError("time_steps must be >= 1");
  if (num_classes < 1) throw ConfigError("num_classes must be >= 1");
  for (int s = 0; s < kNumStages; ++s) {
    if (blocks[s] < 0) throw ConfigError("block counts must be non-negative");
    if (heads[s] < 0) throw ConfigError("heads must be >= 0 (0 selects the default)");
    const int64_t d = stage_dim(s), h = stage_heads(s);
    if (d % h != 0) {
      throw ConfigError("stage " + std::to_string(s + 1) + ": width " + std::to_string(d) +
                        " not divisible by " + std::to_string(h) + " heads");
    }
  }
  neuron.Validate();
  if (attention_neuron != NeuronKind::kLif && attention_neuron != NeuronKind::kPlif) {
    throw ConfigError("attention_neuron must be lif or plif");
  }
}

json ModelConfig::ToJson() const {
  json mech = json::array(), hs = json::array(), bl = json::array();
  for (int s = 0; s < kNumStages; ++s) {
    mech.push_back(MechanismName(mechanisms[s]));
    hs.push_back(heads[s]);
    bl.push_back(blocks[s]);
  }
  return {{"image_height", image_height},
          {"image_width", image_width},
          {"in_channels", in_channels},
          {"channels", channels},
          {"blocks", bl},
          {"mechanisms", mech},
          {"heads", hs},
          {"time_steps", time_steps},
          {"neuron", NeuronToJson(neuron)},
          {"attention_neuron", NeuronKindName(attention_neuron)},
          {"residual_style", ResidualStyleName(residual_style)},
          {"main_path_order", MainPathOrderName(main_path_order)},
          {"num_classes", num_classes}};
}

ModelConfig ModelConfig::FromJson(const json& j) {
  RejectUnknown(j,
                {"image_height", "image_width", "in_channels", "channels", "blocks",
                 "mechanisms", "heads", "time_steps", "neuron", "attention_neuron",
                 "residual_style", "main_path_order", "num_classes"},
                "model config");
  ModelConfig c;
  try {
    c.image_height = j.value("image_height", c.image_height);
    c.image_width = j.value("image_width", c.image_width);
    c.in_channels = j.value("in_channels", c.in_channels);
    c.channels = j.value("channels", c.channels);
    c.time_steps = j.value("time_steps", c.time_steps);
    c.num_classes = j.value("num_classes", c.num_classes);
    auto as_int = [](const json& v) { return v.get<int64_t>(); };
    if (j.contains("blocks")) c.blocks = StageArray<int64_t>(j["blocks"], "blocks", as_int);
    if (j.contains("heads")) c.heads = StageArray<int64_t>(j["heads"], "heads", as_int);
    if (j.contains("mechanisms")) {
      c.mechanisms = StageArray<Mechanism>(j["mechanisms"], "mechanisms", [](const json& v) {
        return ParseMechanism(v.get<std::string>());
      });
    }
    if (j.contains("neuron")) c.neuron = NeuronFromJson(j["neuron"]);
    if (j.contains("attention_neuron")) {
      c.attention_neuron = ParseNeuronKind(j["attention_neuron"].get<std::string>());
    }
    if (j.contains("residual_style")) {
      c.residual_style = ParseResidualStyle(j["residual_style"].get<std::string>());
    }
    if (j.contains("main_path_order")) {
      c.main_path_order = ParseMainPathOrder(j["main_path_order"].get<std::string>());
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  c.Validate();
  return c;
}

Block::Block(const AttentionConfig& attention, const NeuronConfig& neuron, Rng& rng)
    : attention_(attention, rng) {
  const int64_t d = attention.embed_dim;
  fc1_ = LinearLayer(d, kMlpRatio * d, false, rng);
  bn1_ = BatchNormLayer(kMlpRatio * d, -1);
  fc2_ = LinearLayer(kMlpRatio * d, d, false, rng);
  bn2_ = BatchNormLayer(d, -1);
  sn1_ = SpikingNeuron(neuron);
  sn2_ = SpikingNeuron(neuron);
}

Tensor Block::smlp(const Tensor& x, const ForwardContext& ctx, const std::string& scope) const {
  Tensor h = sn1_.forward(bn1_.forward(fc1_.forward(x, ctx, scope + ".fc1"), ctx));
  ctx.Activation(scope + ".hidden", ActivationKind::kSpike, h);
  Tensor y = sn2_.forward(bn2_.forward(fc2_.forward(h, ctx, scope + ".fc2"), ctx));
  ctx.Activation(scope + ".out", ActivationKind::kSpike, y);
  return y;
}

Tensor Block::forward(const Tensor& x, const ForwardContext& ctx,
                      const std::string& scope) const {
  const int64_t d = attention_.config().embed_dim;
  if (x.rank() != 4 || x.dim(3) != d) {
    throw DimensionError("block: expected [T, B, N, " + std::to_string(d) + "], got " +
                         ShapeToString(x.shape()));
  }
  Tensor x1 = add(attention_.forward(x, ctx, scope + ".attn"), x);
  ctx.Activation(scope + ".residual1", ActivationKind::kResidual, x1);
  Tensor x2 = add(smlp(x1, ctx, scope + ".mlp"), x1);
  ctx.Activation(scope + ".residual2", ActivationKind::kResidual, x2);
  return x2;
}

void Block::Collect(const std::string& prefix, std::vector<NamedTensor>& out) {
  attention_.Collect(prefix + ".attn", out);
  fc1_.Collect(prefix + ".mlp.fc1", out);
  bn1_.Collect(prefix + ".mlp.bn1", out);
  if (Tensor* w = sn1_.plif_weight()) out.push_back({prefix + ".mlp.plif1", w});
  fc2_.Collect(prefix + ".mlp.fc2", out);
  bn2_.Collect(prefix + ".mlp.bn2", out);
  if (Tensor* w = sn2_.plif_weight()) out.push_back({prefix + ".mlp.plif2", w});
}

void Block::CollectBuffers(const std::string& prefix, std::vector<NamedBuffer>& out) {
  attention_.CollectBuffers(prefix + ".attn", out);
  bn1_.CollectBuffers(prefix + ".mlp.bn1", out);
  bn2_.CollectBuffers(prefix + ".mlp.bn2", out);
}

Tensor block_forward(const Block& block, const Tensor& x, const ForwardContext& ctx) {
  return block.forward(x, ctx, "block");
}

Tensor ImageToTokens(const Tensor& x) {
  if (x.rank() != 5) throw DimensionError("ImageToTokens: expected rank 5");
  Tensor flat = reshape(x, {x.dim(0), x.dim(1), x.dim(2), x.dim(3) * x.dim(4)});
  return permute(flat, {0, 1, 3, 2});
}

Tensor TokensToImage(const Tensor& x, int64_t height, int64_t width) {
  if (x.rank() != 4 || x.dim(2) != height * width) {
    throw DimensionError("TokensToImage: " + ShapeToString(x.shape()) + " is not " +
                         std::to_string(height) + "x" + std::to_string(width) + " tokens");
  }
  Tensor channels_first = permute(x, {0, 1, 3, 2});
  return reshape(channels_first, {x.dim(0), x.dim(1), x.dim(3), height, width});
}

QKFormer::QKFormer(const ModelConfig& config, uint64_t seed) : config_(config) {
  config_.Validate();
  Rng rng(seed);
  EncoderConfig enc;
  enc.in_channels = config_.in_channels;
  enc.channels = config_.channels;
  enc.main_path_order = config_.main_path_order;
  enc.residual_style = config_.residual_style;
  enc.neuron = config_.neuron;
  encoder_ = Stage1Encoder(enc, rng);
  for (int s = 0; s < kNumStages; ++s) {
    if (s > 0) {
      SpedsConfig sc;
      sc.in_channels = config_.stage_dim(s - 1);
      sc.out_channels = config_.stage_dim(s);
      sc.spatial_reduction = 2;
      sc.main_path_order = config_.main_path_order;
      sc.residual_style = config_.residual_style;
      sc.neuron = config_.neuron;
      sc.input_domain = InputDomain::kSpikeCount;
      downsample_[s - 1] = SpedsBlock(sc, rng);
    }
    AttentionConfig ac;
    ac.mechanism = config_.mechanisms[s];
    ac.embed_dim = config_.stage_dim(s);
    ac.heads = config_.stage_heads(s);
    ac.attention_neuron = config_.attention_neuron;
    ac.neuron = config_.neuron;
    ac.input_domain = InputDomain::kSpikeCount;
    for (int64_t b = 0; b < config_.blocks[s]; ++b) {
      stages_[s].emplace_back(ac, config_.neuron, rng);
    }
  }
  head_ = LinearLayer(config_.stage_dim(kNumStages - 1), config_.num_classes, true, rng);
}

void QKFormer::set_time_steps(int64_t t) {
  if (t < 1) throw ConfigError("time_steps must be >= 1");
  config_.time_steps = t;
}

Tensor QKFormer::features(const Tensor& x, ForwardObserver* observer) const {
  const bool sequence = x.rank() == 5;
  if (x.rank() != 4 && !sequence) {
    throw DimensionError("model input must be [B, n, H, W] or [T, B, n, H, W], got " +
                         ShapeToString(x.shape()));
  }
  if (x.dim(-3) != config_.in_channels || x.dim(-2) != config_.image_height ||
      x.dim(-1) != config_.image_width) {
    throw DimensionError("model input " + ShapeToString(x.shape()) + " does not match [" +
                         std::to_string(config_.in_channels) + ", " +
                         std::to_string(config_.image_height) + ", " +
                         std::to_string(config_.image_width) + "]");
  }
  ForwardContext ctx;
  ctx.training = training_;
  ctx.time_steps = sequence ? x.dim(0) : config_.time_steps;
  ctx.observer = observer;

  Tensor image = encoder_.forward(x, ctx, "stage1.embed");
  int64_t height = image.dim(3), width = image.dim(4);
  Tensor tokens = ImageToTokens(image);
  for (int s = 0; s < kNumStages; ++s) {
    const std::string stage = "stage" + std::to_string(s + 1);
    if (s > 0) {
      image = downsample_[s - 1].forward(TokensToImage(tokens, height, width), ctx,
                                         stage + ".embed");
      height = image.dim(3);
      width = image.dim(4);
      tokens = ImageToTokens(image);
    }
    for (size_t b = 0; b < stages_[s].size(); ++b) {
      tokens = stages_[s][b].forward(tokens, ctx, stage + ".block" + std::to_string(b + 1));
    }
  }
  return tokens;
}

Tensor QKFormer::forward(const Tensor& x, ForwardObserver* observer) const {
  Tensor feats = features(x, observer);
  Tensor pooled = mean_axis(mean_axis(feats, 0), 1);
  if (observer) {
    // Applied once per sample to the time/token average.
    observer->OnLayer({"head", LayerKind::kLinear, head_.in_features() * head_.out_features(),
                       pooled.firing_rate(), 1});
  }
  ForwardContext quiet;
  Tensor logits = head_.forward(pooled, quiet);
  if (observer) observer->OnActivation("logits", ActivationKind::kAnalog, logits);
  return logits;
}

std::vector<NamedTensor> QKFormer::parameters() {
  std::vector<NamedTensor> out;
  encoder_.Collect("stage1.embed", out);
  for (int s = 0; s < kNumStages; ++s) {
    const std::string stage = "stage" + std::to_string(s + 1);
    if (s > 0) downsample_[s - 1].Collect(stage + ".embed", out);
    for (size_t b = 0; b < stages_[s].size(); ++b) {
      stages_[s][b].Collect(stage + ".block" + std::to_string(b + 1), out);
    }
  }
  head_.Collect("head", out);
  return out;
}

std::vector<NamedBuffer> QKFormer::buffers() {
  std::vector<NamedBuffer> out;
  encoder_.CollectBuffers("stage1.embed", out);
  for (int s = 0; s < kNumStages; ++s) {
    const std::string stage = "stage" + std::to_string(s + 1);
    if (s > 0) downsample_[s - 1].CollectBuffers(stage + ".embed", out);
    for (size_t b = 0; b < stages_[s].size(); ++b) {
      stages_[s][b].CollectBuffers(stage + ".block" + std::to_string(b + 1), out);
    }
  }
  return out;
}

int64_t QKFormer::parameter_count() {
  int64_t n = 0;
  for (const auto& p : parameters()) n += p.tensor->numel();
  return n;
}

std::unique_ptr<QKFormer> build(const ModelConfig& config, uint64_t seed) {
  return std::make_unique<QKFormer>(config, seed);
}

}  // namespace qkspike
