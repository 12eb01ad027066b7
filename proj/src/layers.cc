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

#include "qkspike/layers.h"

#include <cmath>

namespace qkspike {

const char* LayerKindName(LayerKind kind) {
  switch (kind) {
    case LayerKind::kFirstEncoder: return "first-encoder";
    case LayerKind::kConv: return "conv";
    case LayerKind::kLinear: return "linear";
    case LayerKind::kQktaCore: return "QKTA-core";
    case LayerKind::kQkcaCore: return "QKCA-core";
    case LayerKind::kSsaCore: return "SSA-core";
  }
  return "?";
}

Tensor KaimingUniform(Shape shape, int64_t fan_in, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(std::max<int64_t>(fan_in, 1)));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor t(std::move(shape));
  for (double& v : t.mutable_data()) v = dist(rng);
  return t;
}

LinearLayer::LinearLayer(int64_t in_features, int64_t out_features, bool bias, Rng& rng)
    : in_(in_features), out_(out_features) {
  weight_ = KaimingUniform({out_features, in_features}, in_features, rng);
  weight_.set_requires_grad(true);
  if (bias) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<int64_t>(in_features, 1)));
    std::uniform_real_distribution<double> dist(-bound, bound);
    bias_ = Tensor({out_features});
    for (double& v : bias_.mutable_data()) v = dist(rng);
    bias_.set_requires_grad(true);
  }
}

Tensor LinearLayer::forward(const Tensor& x, const ForwardContext& ctx,
                            std::string_view name) const {
  if (ctx.observer && !name.empty()) {
    const int64_t tokens = x.rank() >= 2 ? x.dim(-2) : 1;
    ctx.Layer({std::string(name), LayerKind::kLinear, tokens * in_ * out_, x.firing_rate(),
               ctx.time_steps});
  }
  return linear(x, weight_, bias_.defined() ? &bias_ : nullptr);
}

void LinearLayer::Collect(const std::string& prefix, std::vector<NamedTensor>& out) {
  out.push_back({prefix + ".weight", &weight_});
  if (bias_.defined()) out.push_back({prefix + ".bias", &bias_});
}

ConvLayer::ConvLayer(int64_t in_channels, int64_t out_channels, int64_t kernel,
                     int64_t stride, int64_t padding, Rng& rng)
    : in_c_(in_channels), out_c_(out_channels), kernel_(kernel), stride_(stride),
      padding_(padding) {
  weight_ = KaimingUniform({out_channels, in_channels, kernel, kernel},
                           in_channels * kernel * kernel, rng);
  weight_.set_requires_grad(true);
}

Tensor ConvLayer::forward(const Tensor& x, const ForwardContext& ctx, std::string_view name,
                          LayerKind kind) const {
  Tensor y = conv2d(x, weight_, {stride_, padding_, ConvAlgorithm::kIm2col});
  if (ctx.observer && !name.empty()) {
    const int64_t flops = out_c_ * y.dim(2) * y.dim(3) * in_c_ * kernel_ * kernel_;
    ctx.Layer({std::string(name), kind, flops,
               kind == LayerKind::kFirstEncoder ? 1.0 : x.firing_rate(), ctx.time_steps});
  }
  return y;
}

void ConvLayer::Collect(const std::string& prefix, std::vector<NamedTensor>& out) {
  out.push_back({prefix + ".weight", &weight_});
}

BatchNormLayer::BatchNormLayer(int64_t channels, int channel_axis)
    : channel_axis_(channel_axis),
      gamma_(Tensor::Ones({channels})),
      beta_(Tensor::Zeros({channels})),
      stats_(channels) {
  gamma_.set_requires_grad(true);
  beta_.set_requires_grad(true);
}

Tensor BatchNormLayer::forward(const Tensor& x, const ForwardContext& ctx) const {
  BatchNormOptions options;
  options.channel_axis = channel_axis_;
  options.training = ctx.training;
  return batch_norm(x, gamma_, beta_, stats_, options);
}

void BatchNormLayer::Collect(const std::string& prefix, std::vector<NamedTensor>& out) {
  out.push_back({prefix + ".gamma", &gamma_});
  out.push_back({prefix + ".beta", &beta_});
}

void BatchNormLayer::CollectBuffers(const std::string& prefix, std::vector<NamedBuffer>& out) {
  out.push_back({prefix + ".running_mean", &stats_.running_mean});
  out.push_back({prefix + ".running_var", &stats_.running_var});
}

}  // namespace qkspike
