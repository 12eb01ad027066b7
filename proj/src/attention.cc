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

#include "qkspike/attention.h"

#include <cmath>
#include <string>

#include "qkspike/ops.h"

namespace qkspike {

namespace {

struct CoreGeometry {
  int64_t steps;   // T
  int64_t batch;   // product of the axes between T and N
  int64_t tokens;  // N
  int64_t dim;     // D
  int64_t heads;
  int64_t head_dim;
};

CoreGeometry Geometry(const Tensor& q, const AttentionConfig& config, const char* op) {
  if (q.rank() < 3) {
    throw DimensionError(std::string(op) + ": expected [T, ..., N, D], got " +
                         ShapeToString(q.shape()));
  }
  CoreGeometry g{};
  g.steps = q.dim(0);
  g.tokens = q.dim(-2);
  g.dim = q.dim(-1);
  g.heads = config.heads;
  if (g.heads < 1 || g.dim % g.heads != 0) {
    throw ConfigError(std::string(op) + ": embed dim " + std::to_string(g.dim) +
                      " not divisible by " + std::to_string(g.heads) + " heads");
  }
  if (config.embed_dim != 0 && config.embed_dim != g.dim) {
    throw ConfigError(std::string(op) + ": configured embed dim " +
                      std::to_string(config.embed_dim) + " but input has " +
                      std::to_string(g.dim));
  }
  g.head_dim = g.dim / g.heads;
  const int64_t per = g.steps * g.tokens * g.dim;
  g.batch = per == 0 ? 0 : q.numel() / per;
  return g;
}

void RequireSameShape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": operand shapes differ: " +
                         ShapeToString(a.shape()) + " vs " + ShapeToString(b.shape()));
  }
}

// Per-head row sums of Q: [.., N, D] -> [.., N, heads].
Tensor HeadTokenSum(const Tensor& q, const CoreGeometry& g, int64_t& ops) {
  const int64_t rows = g.steps * g.batch * g.tokens;
  std::vector<double> sums(static_cast<size_t>(rows * g.heads), 0.0);
  auto qd = q.data();
  for (int64_t r = 0; r < rows; ++r) {
    const double* row = qd.data() + r * g.dim;
    for (int64_t h = 0; h < g.heads; ++h) {
      double s = 0.0;
      for (int64_t c = 0; c < g.head_dim; ++c) s += row[h * g.head_dim + c];
      sums[r * g.heads + h] = s;
      ops += g.head_dim;
    }
  }
  Shape shape = q.shape();
  shape.back() = g.heads;
  return MakeResult("qkta_token_sum", {q}, std::move(shape), std::move(sums),
                    [g, rows](std::span<const double> grad, GradSink& sink) {
                      if (!sink.wants(0)) return;
                      auto dq = sink[0];
                      for (int64_t r = 0; r < rows; ++r)
                        for (int64_t c = 0; c < g.dim; ++c)
                          dq[r * g.dim + c] += grad[r * g.heads + c / g.head_dim];
                    });
}

// X'[r, c] = A[r, head(c)] * K[r, c].
Tensor TokenMask(const Tensor& attention, const Tensor& k, const CoreGeometry& g,
                 int64_t& ops) {
  const int64_t rows = g.steps * g.batch * g.tokens;
  std::vector<double> out(static_cast<size_t>(k.numel()));
  auto ad = attention.data();
  auto kd = k.data();
  for (int64_t r = 0; r < rows; ++r) {
    for (int64_t c = 0; c < g.dim; ++c) {
      out[r * g.dim + c] = ad[r * g.heads + c / g.head_dim] * kd[r * g.dim + c];
    }
    ops += g.dim;
  }
  return MakeResult("qkta_token_mask", {attention, k}, k.shape(), std::move(out),
                    [attention, k, g, rows](std::span<const double> grad, GradSink& sink) {
                      auto ad = attention.data();
                      auto kd = k.data();
                      for (int64_t r = 0; r < rows; ++r)
                        for (int64_t c = 0; c < g.dim; ++c) {
                          const int64_t i = r * g.dim + c;
                          const int64_t a = r * g.heads + c / g.head_dim;
                          if (sink.wants(0)) sink[0][a] += grad[i] * kd[i];
                          if (sink.wants(1)) sink[1][i] += grad[i] * ad[a];
                        }
                    });
}

// Column sums of Q over tokens: [.., N, D] -> [.., 1, D].
Tensor ChannelSum(const Tensor& q, const CoreGeometry& g, int64_t& ops) {
  const int64_t blocks = g.steps * g.batch;
  std::vector<double> sums(static_cast<size_t>(blocks * g.dim), 0.0);
  auto qd = q.data();
  for (int64_t b = 0; b < blocks; ++b) {
    for (int64_t n = 0; n < g.tokens; ++n) {
      const double* row = qd.data() + (b * g.tokens + n) * g.dim;
      double* acc = sums.data() + b * g.dim;
      for (int64_t c = 0; c < g.dim; ++c) acc[c] += row[c];
      ops += g.dim;
    }
  }
  Shape shape = q.shape();
  shape[shape.size() - 2] = 1;
  return MakeResult("qkca_channel_sum", {q}, std::move(shape), std::move(sums),
                    [g, blocks](std::span<const double> grad, GradSink& sink) {
                      if (!sink.wants(0)) return;
                      auto dq = sink[0];
                      for (int64_t b = 0; b < blocks; ++b)
                        for (int64_t n = 0; n < g.tokens; ++n)
                          for (int64_t c = 0; c < g.dim; ++c)
                            dq[(b * g.tokens + n) * g.dim + c] += grad[b * g.dim + c];
                    });
}

// X'[b, n, c] = A[b, c] * K[b, n, c].
Tensor ChannelMask(const Tensor& attention, const Tensor& k, const CoreGeometry& g,
                   int64_t& ops) {
  const int64_t blocks = g.steps * g.batch;
  std::vector<double> out(static_cast<size_t>(k.numel()));
  auto ad = attention.data();
  auto kd = k.data();
  for (int64_t b = 0; b < blocks; ++b)
    for (int64_t n = 0; n < g.tokens; ++n) {
      const int64_t base = (b * g.tokens + n) * g.dim;
      for (int64_t c = 0; c < g.dim; ++c) out[base + c] = ad[b * g.dim + c] * kd[base + c];
      ops += g.dim;
    }
  return MakeResult("qkca_channel_mask", {attention, k}, k.shape(), std::move(out),
                    [attention, k, g, blocks](std::span<const double> grad, GradSink& sink) {
                      auto ad = attention.data();
                      auto kd = k.data();
                      for (int64_t b = 0; b < blocks; ++b)
                        for (int64_t n = 0; n < g.tokens; ++n)
                          for (int64_t c = 0; c < g.dim; ++c) {
                            const int64_t i = (b * g.tokens + n) * g.dim + c;
                            const int64_t a = b * g.dim + c;
                            if (sink.wants(0)) sink[0][a] += grad[i] * kd[i];
                            if (sink.wants(1)) sink[1][i] += grad[i] * ad[a];
                          }
                    });
}

// s * (Q_h K_h^T) V_h for every (step, sample, head).
Tensor SsaProduct(const Tensor& q, const Tensor& k, const Tensor& v, const CoreGeometry& g,
                  double s, int64_t& ops) {
  const int64_t blocks = g.steps * g.batch;
  const int64_t n = g.tokens;
  std::vector<double> out(static_cast<size_t>(q.numel()), 0.0);
  std::vector<double> map(static_cast<size_t>(n * n));
  auto qd = q.data();
  auto kd = k.data();
  auto vd = v.data();
  for (int64_t b = 0; b < blocks; ++b) {
    const int64_t base = b * n * g.dim;
    for (int64_t h = 0; h < g.heads; ++h) {
      const int64_t off = base + h * g.head_dim;
      for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < n; ++j) {
          double acc = 0.0;
          for (int64_t m = 0; m < g.head_dim; ++m)
            acc += qd[off + i * g.dim + m] * kd[off + j * g.dim + m];
          map[i * n + j] = acc;
          ops += g.head_dim;
        }
      for (int64_t i = 0; i < n; ++i)
        for (int64_t c = 0; c < g.head_dim; ++c) {
          double acc = 0.0;
          for (int64_t j = 0; j < n; ++j) acc += map[i * n + j] * vd[off + j * g.dim + c];
          out[off + i * g.dim + c] = s * acc;
          ops += n;
        }
    }
  }
  return MakeResult(
      "ssa_product", {q, k, v}, q.shape(), std::move(out),
      [q, k, v, g, s, blocks, n](std::span<const double> grad, GradSink& sink) {
        auto qd = q.data();
        auto kd = k.data();
        auto vd = v.data();
        std::vector<double> map(static_cast<size_t>(n * n));
        std::vector<double> dmap(static_cast<size_t>(n * n));
        for (int64_t b = 0; b < blocks; ++b) {
          const int64_t base = b * n * g.dim;
          for (int64_t h = 0; h < g.heads; ++h) {
            const int64_t off = base + h * g.head_dim;
            for (int64_t i = 0; i < n; ++i)
              for (int64_t j = 0; j < n; ++j) {
                double acc = 0.0, dacc = 0.0;
                for (int64_t m = 0; m < g.head_dim; ++m) {
                  acc += qd[off + i * g.dim + m] * kd[off + j * g.dim + m];
                  dacc += grad[off + i * g.dim + m] * vd[off + j * g.dim + m];
                }
                map[i * n + j] = acc;
                dmap[i * n + j] = s * dacc;
              }
            if (sink.wants(2))
              for (int64_t j = 0; j < n; ++j)
                for (int64_t i = 0; i < n; ++i) {
                  const double a = s * map[i * n + j];
                  if (a == 0.0) continue;
                  for (int64_t c = 0; c < g.head_dim; ++c)
                    sink[2][off + j * g.dim + c] += a * grad[off + i * g.dim + c];
                }
            for (int64_t i = 0; i < n; ++i)
              for (int64_t j = 0; j < n; ++j) {
                const double dm = dmap[i * n + j];
                if (dm == 0.0) continue;
                for (int64_t m = 0; m < g.head_dim; ++m) {
                  if (sink.wants(0)) sink[0][off + i * g.dim + m] += dm * kd[off + j * g.dim + m];
                  if (sink.wants(1)) sink[1][off + j * g.dim + m] += dm * qd[off + i * g.dim + m];
                }
              }
          }
        }
      });
}

}  // namespace

const char* MechanismName(Mechanism mechanism) {
  switch (mechanism) {
    case Mechanism::kQkta: return "qkta";
    case Mechanism::kQkca: return "qkca";
    case Mechanism::kSsa: return "ssa";
  }
  return "?";
}

Mechanism ParseMechanism(std::string_view name) {
  if (name == "qkta" || name == "QKTA") return Mechanism::kQkta;
  if (name == "qkca" || name == "QKCA") return Mechanism::kQkca;
  if (name == "ssa" || name == "SSA") return Mechanism::kSsa;
  throw ConfigError("unknown attention mechanism '" + std::string(name) + "'");
}

double AttentionConfig::scale() const {
  if (ssa_scale) return *ssa_scale;
  const int64_t d = head_dim();
  return d > 0 ? 1.0 / std::sqrt(static_cast<double>(d)) : 1.0;
}

NeuronConfig AttentionConfig::attention_neuron_config() const {
  NeuronConfig c = neuron;
  c.kind = attention_neuron;
  return c;
}

void AttentionConfig::Validate() const {
  if (embed_dim < 1) throw ConfigError("attention embed_dim must be >= 1");
  if (heads < 1 || embed_dim % heads != 0) {
    throw ConfigError("attention embed_dim " + std::to_string(embed_dim) +
                      " not divisible by heads " + std::to_string(heads));
  }
  if (!(scale() > 0.0)) throw ConfigError("SSA scale must be > 0");
  if (attention_neuron == NeuronKind::kIf) {
    throw ConfigError("attention neuron must be LIF or PLIF");
  }
  neuron.Validate();
}

ComplexityReport complexity_of(Mechanism mechanism, int64_t tokens, int64_t embed_dim,
                               int64_t heads, int64_t time_steps, int64_t batch) {
  const int64_t reps = time_steps * batch;
  switch (mechanism) {
    case Mechanism::kQkta:
      return {reps * 2 * tokens * embed_dim, reps * tokens * heads};
    case Mechanism::kQkca:
      return {reps * 2 * tokens * embed_dim, reps * embed_dim};
    case Mechanism::kSsa:
      return {reps * 2 * tokens * tokens * embed_dim, reps * heads * tokens * tokens};
  }
  return {};
}

Tensor qkta_forward(const Tensor& q, const Tensor& k, const AttentionConfig& config,
                    ComplexityReport* counters, Tensor* attention_vector,
                    const Tensor* plif_weight) {
  RequireSameShape(q, k, "qkta_forward");
  const CoreGeometry g = Geometry(q, config, "qkta_forward");
  q.validate_binary("qkta_forward Q");
  k.validate_binary("qkta_forward K");
  int64_t ops = 0;
  Tensor sums = HeadTokenSum(q, g, ops);
  Tensor a_t = multistep_forward(sums, config.attention_neuron_config(), plif_weight);
  Tensor out = TokenMask(a_t, k, g, ops);
  if (counters) {
    counters->attention_ops += ops;
    counters->workspace_elements += g.steps * g.batch * g.tokens * g.heads;
  }
  if (attention_vector) *attention_vector = a_t;
  return out;
}

Tensor qkca_forward(const Tensor& q, const Tensor& k, const AttentionConfig& config,
                    ComplexityReport* counters, Tensor* attention_vector,
                    const Tensor* plif_weight) {
  RequireSameShape(q, k, "qkca_forward");
  const CoreGeometry g = Geometry(q, config, "qkca_forward");
  q.validate_binary("qkca_forward Q");
  k.validate_binary("qkca_forward K");
  int64_t ops = 0;
  Tensor sums = ChannelSum(q, g, ops);
  Tensor a_c = multistep_forward(sums, config.attention_neuron_config(), plif_weight);
  Tensor out = ChannelMask(a_c, k, g, ops);
  if (counters) {
    counters->attention_ops += ops;
    counters->workspace_elements += g.steps * g.batch * g.dim;
  }
  if (attention_vector) *attention_vector = a_c;
  return out;
}

Tensor ssa_forward(const Tensor& q, const Tensor& k, const Tensor& v,
                   const AttentionConfig& config, ComplexityReport* counters) {
  if (!v.defined()) throw ConfigError("ssa_forward: SSA requires a V tensor");
  RequireSameShape(q, k, "ssa_forward");
  RequireSameShape(q, v, "ssa_forward");
  const CoreGeometry g = Geometry(q, config, "ssa_forward");
  const double s = config.scale();
  if (!(s > 0.0)) throw ConfigError("ssa_forward: scale must be > 0");
  q.validate_binary("ssa_forward Q");
  k.validate_binary("ssa_forward K");
  v.validate_binary("ssa_forward V");
  int64_t ops = 0;
  Tensor product = SsaProduct(q, k, v, g, s, ops);
  NeuronConfig neuron = config.neuron;
  neuron.kind = NeuronKind::kLif;
  Tensor out = multistep_forward(product, neuron);
  if (counters) {
    counters->attention_ops += ops;
    counters->workspace_elements += g.steps * g.batch * g.heads * g.tokens * g.tokens;
  }
  return out;
}

SpikingAttention::SpikingAttention(const AttentionConfig& config, Rng& rng)
    : config_(config) {
  config_.Validate();
  const int64_t d = config_.embed_dim;
  auto make = [&](Projection& p) {
    p.linear = LinearLayer(d, d, false, rng);
    p.norm = BatchNormLayer(d, -1);
    p.neuron = SpikingNeuron(config_.neuron);
  };
  make(q_);
  make(k_);
  if (config_.mechanism == Mechanism::kSsa) make(v_);
  if (config_.mechanism != Mechanism::kSsa) {
    attention_sn_ = SpikingNeuron(config_.attention_neuron_config());
  }
  proj_linear_ = LinearLayer(d, d, false, rng);
  proj_bn_ = BatchNormLayer(d, -1);
  proj_sn_ = SpikingNeuron(config_.neuron);
}

Tensor SpikingAttention::Project(const Projection& p, const Tensor& x,
                                 const ForwardContext& ctx, const std::string& name) const {
  Tensor y = p.linear.forward(x, ctx, name + "_linear");
  y = p.norm.forward(y, ctx);
  y = p.neuron.forward(y);
  ctx.Activation(name, ActivationKind::kSpike, y);
  return y;
}

std::pair<Tensor, Tensor> SpikingAttention::make_qk(const Tensor& x, const ForwardContext& ctx,
                                                    const std::string& scope) const {
  if (x.rank() < 2 || x.dim(-1) != config_.embed_dim) {
    throw DimensionError("make_qk: input " + ShapeToString(x.shape()) +
                         " does not end in embed dim " + std::to_string(config_.embed_dim));
  }
  if (config_.input_domain == InputDomain::kBinary) {
    x.validate_binary("make_qk input");
  } else if (!x.is_small_integer(1 << 20)) {
    throw ContractError("make_qk input must hold non-negative spike counts");
  }
  return {Project(q_, x, ctx, scope + ".q"), Project(k_, x, ctx, scope + ".k")};
}

Tensor SpikingAttention::make_v(const Tensor& x, const ForwardContext& ctx,
                                const std::string& scope) const {
  if (config_.mechanism != Mechanism::kSsa) {
    throw ConfigError("make_v: V exists only for SSA");
  }
  return Project(v_, x, ctx, scope + ".v");
}

Tensor SpikingAttention::post_projection(const Tensor& masked, const ForwardContext& ctx,
                                         const std::string& scope) const {
  masked.validate_binary("post_projection input");
  Tensor y = proj_linear_.forward(masked, ctx, scope + ".proj_linear");
  y = proj_bn_.forward(y, ctx);
  y = proj_sn_.forward(y);
  ctx.Activation(scope + ".x_pp", ActivationKind::kSpike, y);
  return y;
}

Tensor SpikingAttention::forward(const Tensor& x, const ForwardContext& ctx,
                                 const std::string& scope, AttentionTrace* trace) const {
  if (x.rank() != 4) {
    throw DimensionError("SpikingAttention: expected [T, B, N, D], got " +
                         ShapeToString(x.shape()));
  }
  auto [q, k] = make_qk(x, ctx, scope);
  const int64_t reps = x.dim(0) * x.dim(1);
  ComplexityReport local;
  Tensor vector, v, masked;
  LayerKind core_kind = LayerKind::kQktaCore;
  switch (config_.mechanism) {
    case Mechanism::kQkta:
      masked = qkta_forward(q, k, config_, &local, &vector, attention_sn_.plif_weight());
      ctx.Activation(scope + ".a_t", ActivationKind::kSpike, vector);
      break;
    case Mechanism::kQkca:
      core_kind = LayerKind::kQkcaCore;
      masked = qkca_forward(q, k, config_, &local, &vector, attention_sn_.plif_weight());
      ctx.Activation(scope + ".a_c", ActivationKind::kSpike, vector);
      break;
    case Mechanism::kSsa:
      core_kind = LayerKind::kSsaCore;
      v = make_v(x, ctx, scope);
      masked = ssa_forward(q, k, v, config_, &local);
      break;
  }
  counters_ += local;
  ctx.Layer({scope + ".core", core_kind, reps > 0 ? local.attention_ops / reps : 0,
             q.firing_rate(), ctx.time_steps});
  ctx.Activation(scope + ".x_prime", ActivationKind::kSpike, masked);
  Tensor out = post_projection(masked, ctx, scope);
  if (trace) *trace = {q, k, v, vector, masked, out};
  return out;
}

void SpikingAttention::Collect(const std::string& prefix, std::vector<NamedTensor>& out) {
  auto add = [&](Projection& p, const char* name) {
    p.linear.Collect(prefix + "." + name + "_linear", out);
    p.norm.Collect(prefix + "." + name + "_bn", out);
    if (Tensor* w = p.neuron.plif_weight()) out.push_back({prefix + "." + name + "_plif", w});
  };
  add(q_, "q");
  add(k_, "k");
  if (config_.mechanism == Mechanism::kSsa) add(v_, "v");
  if (Tensor* w = attention_sn_.plif_weight()) out.push_back({prefix + ".attn_plif", w});
  proj_linear_.Collect(prefix + ".proj_linear", out);
  proj_bn_.Collect(prefix + ".proj_bn", out);
  if (Tensor* w = proj_sn_.plif_weight()) out.push_back({prefix + ".proj_plif", w});
}

void SpikingAttention::CollectBuffers(const std::string& prefix,
                                      std::vector<NamedBuffer>& out) {
  q_.norm.CollectBuffers(prefix + ".q_bn", out);
  k_.norm.CollectBuffers(prefix + ".k_bn", out);
  if (config_.mechanism == Mechanism::kSsa) v_.norm.CollectBuffers(prefix + ".v_bn", out);
  proj_bn_.CollectBuffers(prefix + ".proj_bn", out);
}

}  // namespace qkspike
