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

#include "qkspike/neuron.h"

#include <cmath>
#include <string>

namespace qkspike {

namespace {

double Sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Per-kind charge coefficients: H = V + decay * (X - (V - V_reset)) for the
// leaky kinds, H = V + X for IF.
struct Charge {
  NeuronKind kind;
  double decay;
  double v_reset;

  double operator()(double v, double x) const {
    if (kind == NeuronKind::kIf) return v + x;
    return v + decay * (x - (v - v_reset));
  }
  // dH/dV[t-1] and dH/dX.
  double dv() const { return kind == NeuronKind::kIf ? 1.0 : 1.0 - decay; }
  double dx() const { return kind == NeuronKind::kIf ? 1.0 : decay; }
};

Charge MakeCharge(const NeuronConfig& config, const Tensor* plif_weight) {
  switch (config.kind) {
    case NeuronKind::kIf:
      return {NeuronKind::kIf, 1.0, config.v_reset};
    case NeuronKind::kLif:
      // Division keeps LIF(tau=2) and PLIF(sigmoid=1/2) bit-identical.
      return {NeuronKind::kLif, 1.0 / config.tau, config.v_reset};
    case NeuronKind::kPlif:
      if (plif_weight == nullptr || plif_weight->numel() != 1) {
        throw ConfigError("PLIF neuron requires a scalar leak parameter");
      }
      return {NeuronKind::kPlif, Sigmoid(plif_weight->item()), config.v_reset};
  }
  throw ConfigError("unknown neuron kind");
}

}  // namespace

const char* NeuronKindName(NeuronKind kind) {
  switch (kind) {
    case NeuronKind::kLif: return "lif";
    case NeuronKind::kIf: return "if";
    case NeuronKind::kPlif: return "plif";
  }
  return "?";
}

NeuronKind ParseNeuronKind(std::string_view name) {
  if (name == "lif") return NeuronKind::kLif;
  if (name == "if") return NeuronKind::kIf;
  if (name == "plif") return NeuronKind::kPlif;
  throw ConfigError("unknown neuron kind '" + std::string(name) + "'");
}

void NeuronConfig::Validate() const {
  if (!(tau >= 1.0)) throw ConfigError("neuron tau must be >= 1");
  if (kind == NeuronKind::kPlif && !(tau > 1.0)) {
    throw ConfigError("PLIF initial tau must be > 1");
  }
  if (!(v_threshold > v_reset)) throw ConfigError("v_threshold must exceed v_reset");
  if (!(surrogate_alpha > 0.0)) throw ConfigError("surrogate alpha must be > 0");
}

double SurrogateGradient(double u, double alpha) {
  const double s = Sigmoid(alpha * u);
  return alpha * s * (1.0 - s);
}

Tensor surrogate_backward(const Tensor& grad_out, const Tensor& u, double alpha) {
  if (!(alpha > 0.0)) throw ConfigError("surrogate alpha must be > 0");
  if (grad_out.shape() != u.shape()) {
    throw DimensionError("surrogate_backward: " + ShapeToString(grad_out.shape()) + " vs " +
                         ShapeToString(u.shape()));
  }
  Tensor out(u.shape());
  for (int64_t i = 0; i < u.numel(); ++i) {
    out[i] = grad_out[i] * SurrogateGradient(u[i], alpha);
  }
  return out;
}

double PlifWeightForTau(double tau) { return -std::log(tau - 1.0); }

StepResult lif_step(const Tensor& x, NeuronState state, const NeuronConfig& config) {
  config.Validate();
  x.validate_finite("lif_step input");
  if (static_cast<int64_t>(state.v.size()) != x.numel()) {
    throw DimensionError("lif_step: state has " + std::to_string(state.v.size()) +
                         " elements, input " + ShapeToString(x.shape()));
  }
  Tensor plif;
  if (config.kind == NeuronKind::kPlif) plif = Tensor::Scalar(PlifWeightForTau(config.tau));
  const Charge charge = MakeCharge(config, config.kind == NeuronKind::kPlif ? &plif : nullptr);
  Tensor spikes(x.shape()), membrane(x.shape());
  for (int64_t i = 0; i < x.numel(); ++i) {
    const double h = charge(state.v[i], x[i]);
    const bool fire = h - config.v_threshold >= 0.0;
    membrane[i] = h;
    spikes[i] = fire ? 1.0 : 0.0;
    state.v[i] = fire ? config.v_reset : h;
  }
  return {spikes, membrane, std::move(state)};
}

Tensor multistep_forward(const Tensor& x, const NeuronConfig& config,
                         const Tensor* plif_weight, NeuronTrace* trace,
                         int64_t time_steps) {
  if (x.rank() < 1) throw DimensionError("multistep_forward: input needs a time axis");
  const int64_t steps = time_steps > 0 ? time_steps : x.dim(0);
  if (steps == 0) throw DimensionError("multistep_forward: T must be >= 1");
  if (x.numel() % steps != 0) {
    throw DimensionError("multistep_forward: " + ShapeToString(x.shape()) +
                         " cannot be split into " + std::to_string(steps) + " steps");
  }
  const int64_t n = x.numel() / steps;
  const Charge charge = MakeCharge(config, plif_weight);
  const double v_th = config.v_threshold;
  const double v_reset = config.v_reset;

  auto xd = x.data();
  std::vector<double> spikes(xd.size());
  std::vector<double> charged(xd.size());
  std::vector<double> v(static_cast<size_t>(n), v_reset);
  for (int64_t t = 0; t < steps; ++t) {
    const double* xt = xd.data() + t * n;
    double* st = spikes.data() + t * n;
    double* ht = charged.data() + t * n;
    for (int64_t i = 0; i < n; ++i) {
      const double h = charge(v[i], xt[i]);
      const bool fire = h - v_th >= 0.0;
      ht[i] = h;
      st[i] = fire ? 1.0 : 0.0;
      v[i] = fire ? v_reset : h;
    }
    if (trace) trace->membrane.insert(trace->membrane.end(), v.begin(), v.end());
  }
  if (trace) trace->charged = charged;

  std::vector<Tensor> inputs{x};
  if (config.kind == NeuronKind::kPlif) inputs.push_back(*plif_weight);
  const double alpha = config.surrogate_alpha;
  const bool detach_reset = config.detach_reset;
  return MakeResult(
      "spiking_neuron", inputs, x.shape(), spikes,
      [x, spikes, charged = std::move(charged), charge, steps, n, v_th, v_reset, alpha,
       detach_reset](std::span<const double> g, GradSink& sink) {
        auto xd = x.data();
        const bool want_x = sink.wants(0);
        const bool want_k = sink.wants(1);
        std::vector<double> grad_v(static_cast<size_t>(n), 0.0);
        double grad_decay = 0.0;
        for (int64_t t = steps - 1; t >= 0; --t) {
          const int64_t base = t * n;
          for (int64_t i = 0; i < n; ++i) {
            const double h = charged[base + i];
            const double s = spikes[base + i];
            const double sg = SurrogateGradient(h - v_th, alpha);
            double gh = g[base + i] * sg + grad_v[i] * (1.0 - s);
            if (!detach_reset) gh += grad_v[i] * (v_reset - h) * sg;
            if (want_x) sink[0][base + i] += gh * charge.dx();
            if (want_k) {
              double v_prev = v_reset;
              if (t > 0) v_prev = spikes[base - n + i] != 0.0 ? v_reset : charged[base - n + i];
              grad_decay += gh * (xd[base + i] - (v_prev - v_reset));
            }
            grad_v[i] = gh * charge.dv();
          }
        }
        if (want_k) {
          const double k = charge.decay;
          sink[1][0] += grad_decay * k * (1.0 - k);
        }
      });
}

SpikingNeuron::SpikingNeuron(const NeuronConfig& config) : config_(config) {
  config_.Validate();
  if (config_.kind == NeuronKind::kPlif) {
    plif_weight_ = Tensor::Scalar(PlifWeightForTau(config_.tau));
    plif_weight_.set_requires_grad(true);
  }
}

Tensor SpikingNeuron::forward(const Tensor& x, NeuronTrace* trace, int64_t time_steps) const {
  return multistep_forward(x, config_, plif_weight(), trace, time_steps);
}

}  // namespace qkspike
