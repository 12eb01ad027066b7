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

#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "qkspike/model.h"
#include "qkspike/ops.h"
#include "test_support.h"

namespace qkspike {
namespace {

ModelConfig Mini() {
  ModelConfig c;
  c.image_height = 16;
  c.image_width = 16;
  c.in_channels = 1;
  c.channels = 16;
  c.blocks = {1, 1, 1};
  c.time_steps = 2;
  c.num_classes = 5;
  return c;
}

std::vector<double> Values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

Tensor* Find(std::vector<NamedTensor>& params, const std::string& name) {
  for (auto& p : params)
    if (p.name == name) return p.tensor;
  ADD_FAILURE() << "no parameter " << name;
  return nullptr;
}

// Fresh-statistics inference BN is a uniform rescale by 1/sqrt(1 + eps).
const double kNorm = 1.0 / std::sqrt(1.0 + 1e-5);

// SN(BN(x W^T)) by loops, LIF over the leading time axis.
Tensor ProjectOracle(const Tensor& x, const Tensor& w) {
  const int64_t t = x.dim(0), din = x.dim(-1), dout = w.dim(0);
  const int64_t rows = x.numel() / (t * din);
  Shape shape = x.shape();
  shape.back() = dout;
  Tensor out(shape);
  std::vector<double> seq(static_cast<size_t>(t));
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t o = 0; o < dout; ++o) {
      for (int64_t s = 0; s < t; ++s) {
        double acc = 0.0;
        for (int64_t c = 0; c < din; ++c) acc += w[o * din + c] * x[(s * rows + r) * din + c];
        seq[s] = acc * kNorm;
      }
      auto fired = qktest::LifOracle(seq, 2.0, 1.0, 0.0);
      for (int64_t s = 0; s < t; ++s) out[(s * rows + r) * dout + o] = fired[s];
    }
  return out;
}

Tensor Plus(const Tensor& a, const Tensor& b) {
  Tensor out(a.shape());
  for (int64_t i = 0; i < a.numel(); ++i) out[i] = a[i] + b[i];
  return out;
}

TEST(Block, ComposedOracle) {
  for (Mechanism m : {Mechanism::kQkta, Mechanism::kQkca, Mechanism::kSsa}) {
    Rng rng(1);
    qktest::Rng data(2);
    AttentionConfig ac;
    ac.mechanism = m;
    ac.embed_dim = 16;
    ac.heads = 2;
    Block block(ac, NeuronConfig{}, rng);
    std::vector<NamedTensor> params;
    block.Collect("b", params);
    // Larger weights so every sub-block fires under fresh BN statistics.
    for (auto& p : params)
      if (p.name.ends_with(".weight"))
        for (auto& v : p.tensor->mutable_data()) v *= 4.0;
    Tensor x = qktest::RandomSpikes({3, 2, 8, 16}, data);

    Tensor q = ProjectOracle(x, *Find(params, "b.attn.q_linear.weight"));
    Tensor k = ProjectOracle(x, *Find(params, "b.attn.k_linear.weight"));
    Tensor core;
    if (m == Mechanism::kQkta) core = qktest::QktaOracle(q, k, 2, 2.0, 1.0);
    if (m == Mechanism::kQkca) core = qktest::QkcaOracle(q, k, 2, 2.0, 1.0);
    if (m == Mechanism::kSsa) {
      Tensor v = ProjectOracle(x, *Find(params, "b.attn.v_linear.weight"));
      core = qktest::SsaOracle(q, k, v, 2, 1.0 / std::sqrt(8.0), 2.0, 1.0);
    }
    Tensor x1 = Plus(x, ProjectOracle(core, *Find(params, "b.attn.proj_linear.weight")));
    Tensor hidden = ProjectOracle(x1, *Find(params, "b.mlp.fc1.weight"));
    Tensor expected = Plus(x1, ProjectOracle(hidden, *Find(params, "b.mlp.fc2.weight")));

    Tensor y = block.forward(x, ForwardContext{false, 3, nullptr}, "b");
    EXPECT_EQ(y.shape(), x.shape());
    EXPECT_EQ(Values(y), Values(expected)) << MechanismName(m);
    EXPECT_GT(sum(sub(y, x)).item(), 0.0) << "sub-blocks never fired";
  }
}

TEST(Block, ZeroOutputProjectionsArePureResidual) {
  Rng rng(3);
  qktest::Rng data(4);
  AttentionConfig ac;
  ac.embed_dim = 32;
  ac.heads = 1;
  Block block(ac, NeuronConfig{}, rng);
  for (auto& v : block.attention().post_linear().weight().mutable_data()) v = 0.0;
  for (auto& v : block.fc2().weight().mutable_data()) v = 0.0;
  Tensor x = qktest::RandomSpikes({2, 3, 4, 32}, data);
  for (bool training : {true, false}) {
    EXPECT_EQ(Values(block.forward(x, ForwardContext{training, 2, nullptr}, "b")), Values(x));
  }
  Tensor zero({2, 1, 4, 32});
  EXPECT_EQ(Values(block_forward(block, zero, ForwardContext{})), Values(zero));
  EXPECT_THROW(block_forward(block, Tensor({2, 1, 4, 16}), ForwardContext{}), DimensionError);
}

TEST(Build, StageWidthsAndParameterShapes) {
  ModelConfig c = Mini();
  QKFormer model(c, 0);
  auto params = model.parameters();
  for (int s = 0; s < kNumStages; ++s) {
    const int64_t d = c.channels << s;
    EXPECT_EQ(c.stage_dim(s), d);
    const std::string block = "stage" + std::to_string(s + 1) + ".block1";
    EXPECT_EQ(Find(params, block + ".attn.q_linear.weight")->shape(), (Shape{d, d}));
    EXPECT_EQ(Find(params, block + ".mlp.fc1.weight")->shape(), (Shape{4 * d, d}));
    EXPECT_EQ(Find(params, block + ".mlp.fc2.weight")->shape(), (Shape{d, 4 * d}));
  }
  EXPECT_EQ(model.head().weight().shape(), (Shape{5, 4 * c.channels}));
  EXPECT_EQ(model.head().bias().shape(), (Shape{5}));
  EXPECT_GT(model.parameter_count(), 0);
}

class Shapes : public ForwardObserver {
 public:
  void OnActivation(std::string_view name, ActivationKind, const Tensor& value) override {
    shapes[std::string(name)] = value.shape();
  }
  std::map<std::string, Shape> shapes;
};

TEST(Build, TokenLadder) {
  ModelConfig c = Mini();
  c.image_height = 32;
  c.image_width = 48;
  c.in_channels = 2;
  QKFormer model(c, 1);
  qktest::Rng data(5);
  Shapes shapes;
  Tensor logits = model.forward(qktest::RandomTensor({2, 2, 32, 48}, data, 0, 1), &shapes);
  EXPECT_EQ(logits.shape(), (Shape{2, 5}));
  const int64_t expected[] = {8 * 12, 4 * 6, 2 * 3};
  for (int s = 0; s < kNumStages; ++s) {
    EXPECT_EQ(c.stage_tokens(s), expected[s]);
    const std::string name = "stage" + std::to_string(s + 1) + ".block1.residual2";
    ASSERT_TRUE(shapes.shapes.count(name)) << name;
    EXPECT_EQ(shapes.shapes[name], (Shape{2, 2, expected[s], c.channels << s}));
  }
}

TEST(Build, DeepRecipeBuilds) {
  ModelConfig c;
  c.blocks = {1, 2, 7};
  auto model = build(c, 0);
  EXPECT_EQ(model->num_blocks(0), 1);
  EXPECT_EQ(model->num_blocks(1), 2);
  EXPECT_EQ(model->num_blocks(2), 7);
  EXPECT_GT(model->parameter_count(), 0);
}

TEST(Build, StageThreeMechanismSwapCostsOnlyValueProjection) {
  ModelConfig ssa = Mini();
  ModelConfig qkca = ssa;
  qkca.mechanisms[2] = Mechanism::kQkca;
  const int64_t d = 4 * ssa.channels;
  // W_V is D x D, its BN adds gamma and beta.
  EXPECT_EQ(QKFormer(ssa, 0).parameter_count() - QKFormer(qkca, 0).parameter_count(),
            d * d + 2 * d);
}

TEST(Build, DeterministicFromSeed) {
  QKFormer a(Mini(), 42), b(Mini(), 42), c(Mini(), 43);
  auto pa = a.parameters(), pb = b.parameters(), pc = c.parameters();
  ASSERT_EQ(pa.size(), pb.size());
  bool any_differs = false;
  for (size_t i = 0; i < pa.size(); ++i) {
    EXPECT_EQ(pa[i].name, pb[i].name);
    EXPECT_EQ(Values(*pa[i].tensor), Values(*pb[i].tensor)) << pa[i].name;
    any_differs = any_differs || Values(*pa[i].tensor) != Values(*pc[i].tensor);
  }
  EXPECT_TRUE(any_differs);
  EXPECT_EQ(a.parameter_count(), b.parameter_count());
}

TEST(Build, InvalidConfigs) {
  ModelConfig c = Mini();
  c.image_height = 20;
  EXPECT_THROW(QKFormer(c, 0), ConfigError);
  c = Mini();
  c.heads = {3, 0, 0};
  EXPECT_THROW(QKFormer(c, 0), ConfigError);
  c = Mini();
  c.channels = 7;
  EXPECT_THROW(c.Validate(), ConfigError);
  nlohmann::json j = Mini().ToJson();
  EXPECT_EQ(ModelConfig::FromJson(j).ToJson(), j);
  j["depth"] = 3;
  EXPECT_THROW(ModelConfig::FromJson(j), ConfigError);
}

TEST(Forward, ZeroInputGivesClassifierBias) {
  QKFormer model(Mini(), 7);
  for (bool training : {false, true}) {
    model.set_training(training);
    Tensor logits = model.forward(Tensor({3, 1, 16, 16}));
    ASSERT_EQ(logits.shape(), (Shape{3, 5}));
    for (int64_t b = 0; b < 3; ++b)
      for (int64_t j = 0; j < 5; ++j) EXPECT_EQ(logits[b * 5 + j], model.head().bias()[j]);
  }
  EXPECT_THROW(model.forward(Tensor({3, 1, 16, 8})), DimensionError);
  EXPECT_THROW(model.forward(Tensor({3, 2, 16, 16})), DimensionError);
  EXPECT_THROW(model.forward(Tensor({16, 16})), DimensionError);
}

TEST(Forward, ClassifierGradientMatchesFiniteDifference) {
  QKFormer model(Mini(), 8);
  // Batch statistics keep the untrained features non-silent.
  model.set_training(true);
  qktest::Rng data(9);
  Tensor x = qktest::RandomTensor({4, 1, 16, 16}, data, 0, 1);
  const std::vector<int> labels = {0, 3, 1, 4};
  Tensor& w = model.head().weight();
  {
    Tape tape;
    tape.backward(cross_entropy(model.forward(x), labels));
  }
  std::vector<double> g(w.grad().begin(), w.grad().end());
  const double h = 1e-5;
  double diff = 0.0, norm_a = 0.0, norm_fd = 0.0;
  for (int64_t i = 0; i < w.numel(); ++i) {
    const double saved = w[i];
    w[i] = saved + h;
    const double plus = cross_entropy(model.forward(x), labels).item();
    w[i] = saved - h;
    const double minus = cross_entropy(model.forward(x), labels).item();
    w[i] = saved;
    const double fd = (plus - minus) / (2 * h);
    diff += (g[i] - fd) * (g[i] - fd);
    norm_a += g[i] * g[i];
    norm_fd += fd * fd;
  }
  ASSERT_GT(norm_a, 0.0);
  EXPECT_LT(std::sqrt(diff) / std::max(std::sqrt(norm_a), std::sqrt(norm_fd)), 1e-4);
}

// Independent domain checks on every observed activation.
class Purity : public ForwardObserver {
 public:
  void OnActivation(std::string_view name, ActivationKind kind, const Tensor& v) override {
    const std::string n(name);
    ++seen[kind];
    for (double x : v.data()) {
      bool ok = true;
      if (kind == ActivationKind::kSpike) ok = x == 0.0 || x == 1.0;
      if (kind == ActivationKind::kShortcutSum) ok = x == 0.0 || x == 1.0 || x == 2.0;
      if (kind == ActivationKind::kResidual) ok = x >= 0.0 && x == std::floor(x);
      if (!ok) {
        bad.push_back(n);
        break;
      }
    }
    double active = 0;
    for (double x : v.data()) active += x != 0.0;
    const double rate = active / static_cast<double>(v.numel());
    if (n.size() > 2 && n.ends_with(".k")) k_rate[n.substr(0, n.size() - 2)] = rate;
    if (n.ends_with(".a_t") || n.ends_with(".a_c")) qk.insert(n.substr(0, n.size() - 4));
    const std::string scope = n.substr(0, n.size() - std::min<size_t>(n.size(), 8));
    if (n.ends_with(".x_prime") && qk.count(scope)) {
      ++masks;
      if (!k_rate.count(scope) || rate > k_rate[scope]) bad.push_back(n);
    }
  }
  std::map<ActivationKind, int> seen;
  std::map<std::string, double> k_rate;
  std::set<std::string> qk;
  std::vector<std::string> bad;
  int masks = 0;
};

TEST(Forward, EveryActivationStaysInItsDomain) {
  ModelConfig c = Mini();
  c.blocks = {1, 1, 2};
  c.mechanisms = {Mechanism::kQkta, Mechanism::kQkca, Mechanism::kSsa};
  QKFormer model(c, 10);
  qktest::Rng data(11);
  for (bool training : {true, false}) {
    model.set_training(training);
    Purity purity;
    model.forward(qktest::RandomTensor({4, 1, 16, 16}, data, 0, 2), &purity);
    EXPECT_TRUE(purity.bad.empty()) << purity.bad.front();
    EXPECT_GT(purity.seen[ActivationKind::kSpike], 20);
    EXPECT_EQ(purity.seen[ActivationKind::kShortcutSum], 3);
    EXPECT_EQ(purity.seen[ActivationKind::kResidual], 8);
    EXPECT_EQ(purity.masks, 2);
  }
}

class SpikeCounter : public ForwardObserver {
 public:
  void OnActivation(std::string_view, ActivationKind kind, const Tensor& v) override {
    if (kind == ActivationKind::kSpike) total += sum(v).item();
  }
  double total = 0.0;
};

TEST(Forward, LongerSimulationEmitsMoreSpikes) {
  QKFormer model(Mini(), 12);
  qktest::Rng data(13);
  Tensor x = qktest::RandomTensor({8, 1, 16, 16}, data, 0, 1);
  double previous = 0.0;
  for (int64_t t : {1, 2, 4, 6}) {
    model.set_time_steps(t);
    SpikeCounter counter;
    model.forward(x, &counter);
    EXPECT_GT(counter.total, previous) << "T=" << t;
    previous = counter.total;
  }
  EXPECT_THROW(model.set_time_steps(0), ConfigError);
}

TEST(Forward, SequenceInputOverridesTimeSteps) {
  QKFormer model(Mini(), 14);
  qktest::Rng data(15);
  Tensor x = qktest::RandomTensor({2, 1, 16, 16}, data, 0, 1);
  Tensor seq = hadamard(Tensor::Ones({3, 1, 1, 1, 1}), reshape(x, {1, 2, 1, 16, 16}));
  model.set_time_steps(3);
  EXPECT_EQ(Values(model.forward(seq)), Values(model.forward(x)));
}

TEST(Training, EveryParameterReceivesAGradient) {
  // Stage 3 sees a single token here. Token-axis sums (QKCA, SSA) stay below
  // threshold at init and legitimately cut the gradient to their projections;
  // a channel-axis core (QKTA) must let it reach every parameter.
  for (Mechanism last : {Mechanism::kQkta, Mechanism::kQkca, Mechanism::kSsa}) {
    ModelConfig c = Mini();
    c.attention_neuron = NeuronKind::kPlif;
    c.mechanisms[2] = last;
    QKFormer model(c, 16);
    model.set_training(true);
    qktest::Rng data(17);
    Tensor x = qktest::RandomTensor({8, 1, 16, 16}, data, 0, 2);
    {
      Tape tape;
      tape.backward(cross_entropy(model.forward(x), std::vector<int>{0, 1, 2, 3, 4, 0, 1, 2}));
    }
    for (const auto& p : model.parameters()) {
      ASSERT_TRUE(p.tensor->has_grad()) << p.name;
      double norm = 0.0;
      for (double g : p.tensor->grad()) norm += g * g;
      EXPECT_TRUE(std::isfinite(norm)) << p.name;
      if (last == Mechanism::kQkta) EXPECT_GT(norm, 0.0) << p.name;
    }
  }
}

}  // namespace
}  // namespace qkspike
