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

#include "qkspike/embedding.h"

#include "qkspike/ops.h"

namespace qkspike {

namespace {

void CheckInputDomain(const Tensor& x, InputDomain domain, const char* what) {
  if (domain == InputDomain::kBinary) {
    x.validate_binary(what);
  } else if (!x.is_small_integer(1 << 20)) {
    throw ContractError(std::string(what) + " must hold non-negative spike counts");
  }
}

}  // namespace

const char* ResidualStyleName(ResidualStyle style) {
  return style == ResidualStyle::kAba ? "aba" : "pa";
}

ResidualStyle ParseResidualStyle(std::string_view name) {
  if (name == "aba" || name == "ABA") return ResidualStyle::kAba;
  if (name == "pa" || name == "PA") return ResidualStyle::kPa;
  throw ConfigError("unknown residual style '" + std::string(name) + "'");
}

const char* MainPathOrderName(MainPathOrder order) {
  return order == MainPathOrder::kPoolFirst ? "pool_first" : "pool_last";
}

MainPathOrder ParseMainPathOrder(std::string_view name) {
  if (name == "pool_first") return MainPathOrder::kPoolFirst;
  if (name == "pool_last") return MainPathOrder::kPoolLast;
  throw ConfigError("unknown main path order '" + std::string(name) + "'");
}

void SpedsConfig::Validate() const {
  if (in_channels < 1 || out_channels < 1) throw ConfigError("SPEDS channels must be >= 1");
  if (spatial_reduction != 2 && spatial_reduction != 4) {
    throw ConfigError("SPEDS spatial_reduction must be 2 or 4");
  }
  if (kernel_size < 1 || kernel_size % 2 == 0) {
    throw ConfigError("SPEDS kernel_size must be odd");
  }
  neuron.Validate();
}

SpedsBlock::SpedsBlock(const SpedsConfig& config, Rng& rng) : config_(config) {
  config_.Validate();
  const int64_t k = config_.kernel_size;
  conv1_ = ConvLayer(config_.in_channels, config_.in_channels, k, 1, k / 2, rng);
  bn1_ = BatchNormLayer(config_.in_channels, 1);
  conv2_ = ConvLayer(config_.in_channels, config_.out_channels, k, 1, k / 2, rng);
  bn2_ = BatchNormLayer(config_.out_channels, 1);
  shortcut_ = ConvLayer(config_.in_channels, config_.out_channels, 1, 1, 0, rng);
  shortcut_bn_ = BatchNormLayer(config_.out_channels, 1);
  sn1_ = SpikingNeuron(config_.neuron);
  sn_main_ = SpikingNeuron(config_.neuron);
  sn_shortcut_ = SpikingNeuron(config_.neuron);
  sn_out_ = SpikingNeuron(config_.neuron);
}

SpedsBlock::Paths SpedsBlock::Run(const Tensor& x, const ForwardContext& ctx,
                                  const std::string& scope) const {
  if (x.rank() != 5 || x.dim(2) != config_.in_channels) {
    throw DimensionError("SPEDS: expected [T, B, " + std::to_string(config_.in_channels) +
                         ", H, W], got " + ShapeToString(x.shape()));
  }
  const int64_t r = config_.spatial_reduction;
  if (x.dim(3) % r != 0 || x.dim(4) % r != 0) {
    throw ConfigError("SPEDS: spatial dims " + ShapeToString(x.shape()) +
                      " not divisible by reduction " + std::to_string(r));
  }
  CheckInputDomain(x, config_.input_domain, "SPEDS input");
  const int64_t steps = x.dim(0), batch = x.dim(1);
  Tensor x4 = reshape(x, {steps * batch, x.dim(2), x.dim(3), x.dim(4)});

  Tensor y = bn1_.forward(conv1_.forward(x4, ctx, scope + ".conv1"), ctx);
  if (config_.main_path_order == MainPathOrder::kPoolFirst) {
    y = max_pool2d(y, 2, 2);
    y = sn1_.forward(y, nullptr, steps);
    ctx.Activation(scope + ".sn1", ActivationKind::kSpike, y);
    y = bn2_.forward(conv2_.forward(y, ctx, scope + ".conv2"), ctx);
    if (r == 4) y = max_pool2d(y, 2, 2);
  } else {
    y = sn1_.forward(y, nullptr, steps);
    ctx.Activation(scope + ".sn1", ActivationKind::kSpike, y);
    y = bn2_.forward(conv2_.forward(y, ctx, scope + ".conv2"), ctx);
    y = max_pool2d(y, r, r);
  }
  Tensor s = shortcut_bn_.forward(shortcut_.forward(subsample2d(x4, r), ctx, scope + ".shortcut"), ctx);
  if (y.shape() != s.shape()) {
    throw ConfigError("SPEDS: main path " + ShapeToString(y.shape()) +
                      " and shortcut " + ShapeToString(s.shape()) + " disagree");
  }
  return {y, s, steps, batch};
}

Tensor SpedsBlock::Unfold(const Tensor& y, const Paths& p) const {
  return reshape(y, {p.steps, p.batch, y.dim(1), y.dim(2), y.dim(3)});
}

Tensor SpedsBlock::forward(const Tensor& x, const ForwardContext& ctx,
                           const std::string& scope) const {
  return config_.residual_style == ResidualStyle::kAba ? forward_aba(x, ctx, scope)
                                                       : forward_pa(x, ctx, scope);
}

Tensor SpedsBlock::forward_aba(const Tensor& x, const ForwardContext& ctx,
                               const std::string& scope) const {
  Paths p = Run(x, ctx, scope);
  Tensor main = sn_main_.forward(p.main, nullptr, p.steps);
  Tensor shortcut = sn_shortcut_.forward(p.shortcut, nullptr, p.steps);
  ctx.Activation(scope + ".sn_main", ActivationKind::kSpike, main);
  ctx.Activation(scope + ".sn_shortcut", ActivationKind::kSpike, shortcut);
  Tensor y = Unfold(add(main, shortcut), p);
  ctx.Activation(scope + ".out", ActivationKind::kShortcutSum, y);
  return y;
}

Tensor SpedsBlock::forward_pa(const Tensor& x, const ForwardContext& ctx,
                              const std::string& scope) const {
  Paths p = Run(x, ctx, scope);
  Tensor y = Unfold(sn_out_.forward(add(p.main, p.shortcut), nullptr, p.steps), p);
  ctx.Activation(scope + ".out", ActivationKind::kSpike, y);
  return y;
}

void SpedsBlock::Collect(const std::string& prefix, std::vector<NamedTensor>& out) {
  conv1_.Collect(prefix + ".conv1", out);
  bn1_.Collect(prefix + ".bn1", out);
  conv2_.Collect(prefix + ".conv2", out);
  bn2_.Collect(prefix + ".bn2", out);
  shortcut_.Collect(prefix + ".shortcut", out);
  shortcut_bn_.Collect(prefix + ".shortcut_bn", out);
  const std::pair<const char*, SpikingNeuron*> neurons[] = {
      {".sn1_plif", &sn1_}, {".sn_main_plif", &sn_main_},
      {".sn_shortcut_plif", &sn_shortcut_}, {".sn_out_plif", &sn_out_}};
  for (const auto& [name, sn] : neurons) {
    if (Tensor* w = sn->plif_weight()) out.push_back({prefix + name, w});
  }
}

void SpedsBlock::CollectBuffers(const std::string& prefix, std::vector<NamedBuffer>& out) {
  bn1_.CollectBuffers(prefix + ".bn1", out);
  bn2_.CollectBuffers(prefix + ".bn2", out);
  shortcut_bn_.CollectBuffers(prefix + ".shortcut_bn", out);
}

Tensor speds_forward_aba(const SpedsBlock& block, const Tensor& x, const ForwardContext& ctx) {
  return block.forward_aba(x, ctx);
}

Tensor speds_forward_pa(const SpedsBlock& block, const Tensor& x, const ForwardContext& ctx) {
  return block.forward_pa(x, ctx);
}

Stage1Encoder::Stage1Encoder(const EncoderConfig& config, Rng& rng) : config_(config) {
  if (config_.in_channels < 1 || config_.channels < 1) {
    throw ConfigError("encoder channels must be >= 1");
  }
  const int64_t mid = std::max<int64_t>(1, config_.channels / 2);
  conv_ = ConvLayer(config_.in_channels, mid, 3, 1, 1, rng);
  bn_ = BatchNormLayer(mid, 1);
  sn_ = SpikingNeuron(config_.neuron);
  SpedsConfig speds;
  speds.in_channels = mid;
  speds.out_channels = config_.channels;
  speds.spatial_reduction = 4;
  speds.main_path_order = config_.main_path_order;
  speds.residual_style = config_.residual_style;
  speds.neuron = config_.neuron;
  speds_ = SpedsBlock(speds, rng);
}

Tensor Stage1Encoder::forward(const Tensor& x, const ForwardContext& ctx,
                              const std::string& scope) const {
  if (x.rank() != 4 && x.rank() != 5) {
    throw DimensionError("encoder: expected [B, n, H, W] or [T, B, n, H, W], got " +
                         ShapeToString(x.shape()));
  }
  const int64_t height = x.dim(-2), width = x.dim(-1);
  if (height % 4 != 0 || width % 4 != 0) {
    throw ConfigError("encoder: H and W must be divisible by 4, got " +
                      ShapeToString(x.shape()));
  }
  if (x.dim(-3) != config_.in_channels) {
    throw DimensionError("encoder: expected " + std::to_string(config_.in_channels) +
                         " input channels, got " + ShapeToString(x.shape()));
  }
  x.validate_finite("encoder input");
  Tensor encoded;
  int64_t steps = 0;
  if (x.rank() == 4) {
    // Static input: the first convolution is identical at every step.
    steps = ctx.time_steps;
    if (steps < 1) throw ConfigError("encoder: time_steps must be >= 1");
    Tensor y = bn_.forward(conv_.forward(x, ctx, scope + ".encoder_conv",
                                         LayerKind::kFirstEncoder), ctx);
    Shape one = y.shape();
    one.insert(one.begin(), 1);
    Shape rep(one.size(), 1);
    rep[0] = steps;
    encoded = hadamard(reshape(y, one), Tensor::Ones(rep));
  } else {
    steps = x.dim(0);
    Tensor flat = reshape(x, {steps * x.dim(1), x.dim(2), x.dim(3), x.dim(4)});
    Tensor y = bn_.forward(conv_.forward(flat, ctx, scope + ".encoder_conv",
                                         LayerKind::kFirstEncoder), ctx);
    encoded = reshape(y, {steps, x.dim(1), y.dim(1), y.dim(2), y.dim(3)});
  }
  Tensor spikes = sn_.forward(encoded);
  ctx.Activation(scope + ".encoder_sn", ActivationKind::kSpike, spikes);
  return speds_.forward(spikes, ctx, scope + ".speds");
}

void Stage1Encoder::Collect(const std::string& prefix, std::vector<NamedTensor>& out) {
  conv_.Collect(prefix + ".encoder_conv", out);
  bn_.Collect(prefix + ".encoder_bn", out);
  if (Tensor* w = sn_.plif_weight()) out.push_back({prefix + ".encoder_plif", w});
  speds_.Collect(prefix + ".speds", out);
}

void Stage1Encoder::CollectBuffers(const std::string& prefix, std::vector<NamedBuffer>& out) {
  bn_.CollectBuffers(prefix + ".encoder_bn", out);
  speds_.CollectBuffers(prefix + ".speds", out);
}

Tensor stage1_encoder(const Stage1Encoder& encoder, const Tensor& x, const ForwardContext& ctx) {
  return encoder.forward(x, ctx);
}

}  // namespace qkspike
