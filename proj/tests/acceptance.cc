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

// Acceptance run: one PASS/FAIL line per criterion. Arguments optionally
// select criteria by number ("acceptance 3 5").

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "qkspike/analysis.h"
#include "qkspike/attention.h"
#include "qkspike/model.h"
#include "qkspike/neuron.h"
#include "qkspike/ops.h"
#include "qkspike/train.h"
#include "test_support.h"

namespace qkspike {
namespace {

namespace fs = std::filesystem;

// Test accuracy of configs/baseline.json at seed 0, measured once with this
// implementation and then enforced within kPinnedTolerance.
constexpr double kPinnedBaselineAccuracy = 0.99;
constexpr double kPinnedTolerance = 0.02;
constexpr double kTrainingCpuBudgetSeconds = 600.0;

// Reference SSA/QKTA memory ratio at sqrt(N) = 50, C = 256.
constexpr double kReferenceMemoryRatio = 10.70;

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void Require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

double Seconds(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - since).count();
}

std::vector<double> Values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

const double kGrid[] = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};

void MonteCarloGrid(Outcome& o) {
  const auto start = std::chrono::steady_clock::now();
  int rows = 0, failures = 0;
  auto check = [&](const StatParams& p, McSampler sampler) {
    McResult r = mc_verify(p, {.samples = 100000, .seed = 0, .threads = 1, .sampler = sampler});
    ++rows;
    if (!r.pass()) {
      ++failures;
      o.detail << " [" << StatKindName(p.kind) << " f=" << p.f_q << "," << p.f_k << "," << p.f_v
               << " mc_var=" << r.variance << " closed_var=" << r.closed.variance << "]";
    }
  };
  StatParams p;
  p.head_dim = 64;
  p.tokens = 196;
  double qkta_max = 0.0, qkta_argmax = 0.0, ssa_max = 0.0;
  for (StatKind kind : {StatKind::kQkta, StatKind::kQkca}) {
    p.kind = kind;
    for (double f : kGrid) {
      p.f_q = f;
      check(p, McSampler::kElement);
      const double var = closed_form_stats(p).variance;
      if (kind == StatKind::kQkta && var > qkta_max) qkta_max = var, qkta_argmax = f;
    }
  }
  p.kind = StatKind::kSsa;
  for (double fq : kGrid)
    for (double fk : kGrid)
      for (double fv : kGrid) {
        p.f_q = fq, p.f_k = fk, p.f_v = fv;
        check(p, McSampler::kProduct);
        ssa_max = std::max(ssa_max, closed_form_stats(p).variance);
      }
  // Independent samplers on the diagonal and the element-level anchor.
  for (double f : {0.1, 0.5, 0.9}) {
    p.f_q = p.f_k = p.f_v = f;
    check(p, McSampler::kHierarchical);
  }
  p.f_q = p.f_k = p.f_v = 0.5;
  check(p, McSampler::kElement);
  const double elapsed = Seconds(start);
  o.detail << rows - failures << "/" << rows << " rows; max Var(QKTA) " << qkta_max << " at f_Q "
           << qkta_argmax << "; max Var(SSA) " << ssa_max << "; " << std::setprecision(3)
           << elapsed << " s";
  o.Require(failures == 0, "Monte Carlo rows");
  o.Require(qkta_max == 16.0 && qkta_argmax == 0.5, "QKTA maximum 16 at 0.5");
  o.Require(ssa_max > 3000.0, "SSA maximum above 3000");
  o.Require(elapsed < 60.0, "runtime under one minute");
}

AttentionConfig Core(Mechanism m, int64_t dim, int64_t heads) {
  AttentionConfig c;
  c.mechanism = m;
  c.embed_dim = dim;
  c.heads = heads;
  return c;
}

void OracleEquivalence(Outcome& o) {
  qktest::Rng rng(2026);
  std::uniform_int_distribution<int64_t> steps(1, 4), tokens(1, 16), batch(1, 2);
  const int64_t head_options[] = {1, 2, 4};
  int instances = 0, mismatches = 0;
  for (int trial = 0; trial < 120; ++trial) {
    const int64_t h = head_options[trial % 3];
    const int64_t d = h * std::uniform_int_distribution<int64_t>(1, 16 / h)(rng);
    const int64_t t = steps(rng), n = tokens(rng), b = batch(rng);
    const double rate = std::uniform_real_distribution<double>(0.05, 0.95)(rng);
    Tensor q = qktest::RandomSpikes({t, b, n, d}, rng, rate);
    Tensor k = qktest::RandomSpikes({t, b, n, d}, rng, 0.5);
    if (Values(qkta_forward(q, k, Core(Mechanism::kQkta, d, h))) !=
        Values(qktest::QktaOracle(q, k, h, 2.0, 1.0)))
      ++mismatches;
    if (Values(qkca_forward(q, k, Core(Mechanism::kQkca, d, h))) !=
        Values(qktest::QkcaOracle(q, k, h, 2.0, 1.0)))
      ++mismatches;
    ++instances;
  }
  o.detail << instances << " instances per core, " << mismatches << " mismatches";
  o.Require(instances >= 100 && mismatches == 0, "exact equality");
}

void ComplexityScaling(Outcome& o) {
  const int64_t dim = 64, heads = 2;
  for (Mechanism m : {Mechanism::kQkta, Mechanism::kSsa}) {
    const ComplexityReport small = measure_complexity(m, 256, dim, heads);
    const ComplexityReport large = measure_complexity(m, 1024, dim, heads);
    const int64_t factor = m == Mechanism::kQkta ? 4 : 16;
    o.detail << MechanismName(m) << " ops " << small.attention_ops << " -> " << large.attention_ops
             << ", workspace " << small.workspace_elements << " -> " << large.workspace_elements
             << "; ";
    o.Require(large.attention_ops == factor * small.attention_ops,
              std::string(MechanismName(m)) + " ops ratio");
    o.Require(large.workspace_elements == factor * small.workspace_elements,
              std::string(MechanismName(m)) + " workspace ratio");
  }
}

void GradientCorrectness(Outcome& o) {
  using qktest::GradCheck;
  using qktest::RandomTensor;
  using Inputs = std::vector<Tensor>;
  qktest::Rng rng(4);
  struct Case {
    std::string name;
    qktest::TensorFn fn;
    Inputs inputs;
  };
  std::vector<Case> cases;
  cases.push_back({"matmul", [](const Inputs& in) { return matmul(in[0], in[1]); },
                   {RandomTensor({3, 4}, rng), RandomTensor({4, 2}, rng)}});
  cases.push_back({"linear", [](const Inputs& in) { return linear(in[0], in[1], &in[2]); },
                   {RandomTensor({2, 3, 4}, rng), RandomTensor({5, 4}, rng),
                    RandomTensor({5}, rng)}});
  for (auto algo : {ConvAlgorithm::kIm2col, ConvAlgorithm::kDirect}) {
    cases.push_back({algo == ConvAlgorithm::kIm2col ? "conv2d/im2col" : "conv2d/direct",
                     [algo](const Inputs& in) { return conv2d(in[0], in[1], {2, 1, algo}, &in[2]); },
                     {RandomTensor({2, 2, 5, 5}, rng), RandomTensor({3, 2, 3, 3}, rng),
                      RandomTensor({3}, rng)}});
  }
  cases.push_back({"batch_norm/train",
                   [](const Inputs& in) {
                     BatchNormStats stats(3);
                     return batch_norm(in[0], in[1], in[2], stats);
                   },
                   {RandomTensor({4, 3, 2, 2}, rng), RandomTensor({3}, rng, 0.5, 1.5),
                    RandomTensor({3}, rng)}});
  cases.push_back({"batch_norm/eval",
                   [](const Inputs& in) {
                     BatchNormStats stats(3);
                     stats.running_mean = {0.1, -0.2, 0.3};
                     stats.running_var = {0.5, 1.5, 2.0};
                     BatchNormOptions eval;
                     eval.training = false;
                     return batch_norm(in[0], in[1], in[2], stats, eval);
                   },
                   {RandomTensor({4, 3}, rng), RandomTensor({3}, rng), RandomTensor({3}, rng)}});
  cases.push_back({"max_pool2d", [](const Inputs& in) { return max_pool2d(in[0], 2, 2); },
                   {RandomTensor({2, 2, 4, 6}, rng)}});
  cases.push_back({"subsample2d", [](const Inputs& in) { return subsample2d(in[0], 2); },
                   {RandomTensor({2, 2, 6, 6}, rng)}});
  cases.push_back({"sum_axis", [](const Inputs& in) { return sum_axis(in[0], 1); },
                   {RandomTensor({2, 3, 4}, rng)}});
  cases.push_back({"mean_axis", [](const Inputs& in) { return mean_axis(in[0], -1, true); },
                   {RandomTensor({2, 3, 4}, rng)}});
  cases.push_back({"sum", [](const Inputs& in) { return sum(in[0]); }, {RandomTensor({3, 3}, rng)}});
  cases.push_back({"mean", [](const Inputs& in) { return mean(in[0]); }, {RandomTensor({3, 3}, rng)}});
  cases.push_back({"add", [](const Inputs& in) { return add(in[0], in[1]); },
                   {RandomTensor({2, 1, 4}, rng), RandomTensor({3, 4}, rng)}});
  cases.push_back({"sub", [](const Inputs& in) { return sub(in[0], in[1]); },
                   {RandomTensor({4}, rng), RandomTensor({2, 4}, rng)}});
  cases.push_back({"hadamard", [](const Inputs& in) { return hadamard(in[0], in[1]); },
                   {RandomTensor({2, 3, 4}, rng), RandomTensor({3, 1}, rng)}});
  cases.push_back({"scale", [](const Inputs& in) { return scale(in[0], -2.5); },
                   {RandomTensor({5}, rng)}});
  cases.push_back({"reshape", [](const Inputs& in) { return reshape(in[0], {6, 2}); },
                   {RandomTensor({2, 3, 2}, rng)}});
  cases.push_back({"permute", [](const Inputs& in) { return permute(in[0], {2, 0, 1}); },
                   {RandomTensor({2, 3, 4}, rng)}});
  const std::vector<int> labels{0, 2, 1};
  cases.push_back({"cross_entropy", [&labels](const Inputs& in) { return cross_entropy(in[0], labels); },
                   {RandomTensor({3, 4}, rng, -3, 3)}});
  double worst = 0.0;
  std::string worst_name;
  for (auto& c : cases) {
    const double err = GradCheck(c.fn, c.inputs).relative_error;
    if (err >= worst) worst = err, worst_name = c.name;
    o.Require(err < 1e-4, c.name);
  }
  // Surrogate: alpha sigma(alpha u)(1 - sigma(alpha u)) is d/du sigma(alpha u).
  double surrogate_worst = 0.0;
  auto sigma = [](double u) { return 1.0 / (1.0 + std::exp(-4.0 * u)); };
  const double h = 1e-5;
  for (double u = -2.0; u <= 2.0; u += 0.05) {
    const double fd = (sigma(u + h) - sigma(u - h)) / (2 * h);
    surrogate_worst = std::max(surrogate_worst, std::abs(SurrogateGradient(u, 4.0) - fd));
  }
  const Tensor at_zero = surrogate_backward(Tensor({1}, {1.0}), Tensor({1}, {0.0}), 4.0);
  o.detail << cases.size() << " primitives, worst rel. err " << std::scientific
           << std::setprecision(2) << worst << " (" << worst_name << "); surrogate factor at 0 "
           << std::defaultfloat << at_zero[0] << ", max |surrogate - FD| " << std::scientific
           << surrogate_worst;
  o.Require(at_zero[0] == 1.0, "surrogate factor 1 at u = 0");
  o.Require(surrogate_worst < 1e-8, "surrogate against FD");
}

void NeuronFixtures(Outcome& o) {
  NeuronConfig lif;  // tau 2, threshold 1, hard reset to 0
  NeuronConfig if_neuron;
  if_neuron.kind = NeuronKind::kIf;
  auto run = [](const std::vector<double>& x, const NeuronConfig& c) {
    return Values(multistep_forward(Tensor({static_cast<int64_t>(x.size()), 1}, x), c));
  };
  StepResult one = lif_step(Tensor({1}, {2.0}), NeuronState::Fresh(1, lif), lif);
  const bool spike_reset = one.spikes[0] == 1.0 && one.state.v[0] == 0.0;
  const bool silent = run({1.0, 1.0}, lif) == std::vector<double>{0, 0};
  // H = 2 / 2 equals the threshold exactly.
  const bool boundary = run({2.0}, lif) == std::vector<double>{1};
  const bool integrate = run({0.5, 0.5}, if_neuron) == std::vector<double>{0, 1};
  o.detail << "LIF [2] spike+reset " << spike_reset << ", LIF [1,1] silent " << silent
           << ", threshold boundary " << boundary << ", IF [0.5,0.5] " << integrate;
  o.Require(spike_reset && silent && boundary && integrate, "fixtures");
}

void EnergyArithmetic(Outcome& o) {
  auto layer = [](std::string name, LayerKind kind, int64_t flops, double fr, int64_t t) {
    return LayerRecord{std::move(name), kind, flops, fr, t};
  };
  EnergyModel single;
  single.layers = {layer("encoder", LayerKind::kFirstEncoder, 1000000, 0.3, 4)};
  const double micro = energy_estimate(single).total_pj * 1e-6;
  EnergyModel toy;
  toy.layers = {layer("encoder", LayerKind::kFirstEncoder, 1000, 1.0, 4),
                layer("fc", LayerKind::kLinear, 1000, 0.5, 4)};
  const double nano = energy_estimate(toy).total_pj * 1e-3;
  EnergyModel silent;
  silent.layers = {layer("encoder", LayerKind::kFirstEncoder, 5000, 0.0, 2),
                   layer("conv", LayerKind::kConv, 70000, 0.0, 2),
                   layer("core", LayerKind::kQktaCore, 900, 0.0, 2)};
  const EnergyReport quiet = energy_estimate(silent);
  o.detail << "single MAC layer " << micro << " uJ, toy " << nano << " nJ, zero firing "
           << quiet.total_pj << " pJ, E_MAC " << kEnergyMacPj << " pJ, E_AC " << kEnergyAcPj
           << " pJ";
  o.Require(std::abs(micro - 4.6) < 1e-12, "4.6 uJ");
  o.Require(std::abs(nano - 6.4) < 1e-12, "6.4 nJ");
  o.Require(quiet.total_pj == 4.6 * 5000 && quiet.ac_pj == 0.0, "first-layer energy only");
  o.Require(kEnergyMacPj == 4.6 && kEnergyAcPj == 0.9, "constants");
}

void MemoryTrend(Outcome& o) {
  std::vector<int64_t> roots;
  for (int64_t s = 10; s <= 200; s += 10) roots.push_back(s);
  const auto rows = memory_curve(roots, 256);
  bool increasing = true;
  for (size_t i = 1; i < rows.size(); ++i) increasing = increasing && rows[i].ratio > rows[i - 1].ratio;
  double at50 = 0.0;
  for (const auto& r : rows)
    if (r.sqrt_tokens == 50) at50 = r.ratio;
  o.detail << "ratio " << rows.front().ratio << " at 10 -> " << rows.back().ratio
           << " at 200; at 50 " << at50 << " vs reference " << kReferenceMemoryRatio;
  o.Require(increasing, "strictly increasing");
  o.Require(at50 >= kReferenceMemoryRatio / 3 && at50 <= kReferenceMemoryRatio * 3,
            "within a factor of 3");
}

RunConfig Baseline() {
  std::ifstream in(std::string(QKSPIKE_SOURCE_DIR) + "/configs/baseline.json");
  RunConfig c = RunConfig::FromJson(nlohmann::json::parse(in));
  c.out_dir.clear();
  return c;
}

struct TimedRun {
  TrainResult result;
  double cpu_seconds = 0.0;
};

TimedRun Train(const RunConfig& config) {
  const std::clock_t start = std::clock();
  TimedRun run{train(config), 0.0};
  run.cpu_seconds = static_cast<double>(std::clock() - start) / CLOCKS_PER_SEC;
  return run;
}

// Runs shared by several criteria, trained at most once.
struct Runs {
  std::map<std::string, TimedRun> cache;
  TimedRun& Get(const std::string& key, const RunConfig& config) {
    auto it = cache.find(key);
    if (it == cache.end()) it = cache.emplace(key, Train(config)).first;
    return it->second;
  }
  TimedRun& Baseline0() { return Get("baseline/0", Baseline()); }
};

void DeskTraining(Outcome& o, Runs& runs) {
  const TimedRun& run = runs.Baseline0();
  const double acc = run.result.final_eval.accuracy;
  int64_t epoch_best = 0;
  for (const auto& m : run.result.metrics)
    if (m.test_acc >= 0.85) {
      epoch_best = m.epoch;
      break;
    }
  o.detail << "test accuracy " << acc << " after " << run.result.metrics.size()
           << " epochs (first >= 0.85 at epoch " << epoch_best << "), " << std::setprecision(3)
           << run.cpu_seconds << " CPU s; pinned " << kPinnedBaselineAccuracy;
  o.Require(run.result.metrics.size() <= 20, "at most 20 epochs");
  o.Require(acc >= 0.85, "accuracy at least 0.85");
  o.Require(run.cpu_seconds <= kTrainingCpuBudgetSeconds, "CPU budget");
  o.Require(std::abs(acc - kPinnedBaselineAccuracy) <= kPinnedTolerance, "pinned accuracy");
}

void SpikePurity(Outcome& o, Runs& runs) {
  const RunConfig config = Baseline();
  const SplitDataset data = load_dataset(config.dataset, config.seed ^ 0x5851f42d4c957f2dULL);
  std::unique_ptr<QKFormer> fresh = build(config.model, config.seed);
  QKFormer& trained = *runs.Baseline0().result.model;
  SpikePurityObserver observer;
  int64_t forwards = 0;
  auto sweep = [&](QKFormer& model, const Dataset& split, bool training) {
    const bool was = model.training();
    model.set_training(training);
    for (int64_t start = 0; start < split.size(); start += config.batch_size) {
      std::vector<int64_t> rows;
      for (int64_t i = start; i < std::min(split.size(), start + config.batch_size); ++i)
        rows.push_back(i);
      model.forward(split.Select(rows).images, &observer);
      ++forwards;
    }
    model.set_training(was);
  };
  sweep(*fresh, data.train, true);
  sweep(*fresh, data.test, false);
  sweep(trained, data.test, false);
  const ModelProfile profile = firing_rate_profile(trained, data.test.images);
  const auto rate_violations = profile.rates.sparsification_violations();
  int qk_layers = 0;
  for (const auto& e : profile.rates.entries())
    if (e.name.ends_with(".a_t") || e.name.ends_with(".a_c")) ++qk_layers;
  o.detail << forwards << " forwards, " << observer.checked() << " tensors checked, "
           << observer.violations().size() << " violations; " << qk_layers
           << " Q-K attention layers profiled, " << rate_violations.size()
           << " with rate(X') > rate(K)";
  for (size_t i = 0; i < std::min<size_t>(3, observer.violations().size()); ++i)
    o.detail << " [" << observer.violations()[i] << "]";
  o.Require(observer.checked() > 0 && observer.violations().empty(), "domains");
  o.Require(qk_layers > 0 && rate_violations.empty(), "sparsification");
}

void AblationTrends(Outcome& o, Runs& runs) {
  double t1 = 0.0, t4 = 0.0, aba = 0.0, pa = 0.0;
  o.detail << "per seed (T1, T4, ABA, PA):";
  for (uint64_t seed = 0; seed < 3; ++seed) {
    RunConfig c = Baseline();
    c.seed = seed;
    const std::string tag = "/" + std::to_string(seed);
    const double a = seed == 0 ? runs.Baseline0().result.final_eval.accuracy
                               : runs.Get("baseline" + tag, c).result.final_eval.accuracy;
    RunConfig short_sim = c, long_sim = c, pre = c;
    short_sim.model.time_steps = 1;
    long_sim.model.time_steps = 4;
    pre.model.residual_style = ResidualStyle::kPa;
    const double s1 = runs.Get("t1" + tag, short_sim).result.final_eval.accuracy;
    const double s4 = runs.Get("t4" + tag, long_sim).result.final_eval.accuracy;
    const double p = runs.Get("pa" + tag, pre).result.final_eval.accuracy;
    o.detail << " (" << s1 << ", " << s4 << ", " << a << ", " << p << ")";
    t1 += s1 / 3, t4 += s4 / 3, aba += a / 3, pa += p / 3;
  }
  o.detail << "; mean T1 " << t1 << ", T4 " << t4 << ", ABA " << aba << ", PA " << pa;
  o.Require(t4 >= t1, "T4 at least T1");
  o.Require(std::abs(aba - pa) <= 0.02 + 1e-12, "PA within 2% of ABA");
}

std::string MetricsWithoutWallTime(const fs::path& path) {
  std::ifstream in(path);
  std::ostringstream out;
  for (std::string line; std::getline(in, line);) out << line.substr(0, line.rfind(',')) << '\n';
  return out.str();
}

void Determinism(Outcome& o) {
  const fs::path root = qktest::TempDir("acceptance_determinism");
  std::vector<fs::path> dirs = {root / "a", root / "b"};
  for (const auto& dir : dirs) {
    RunConfig c = Baseline();
    c.out_dir = dir.string();
    train(c);
  }
  int64_t files = 0, differing = 0;
  for (const auto& entry : fs::directory_iterator(dirs[0] / "weights")) {
    ++files;
    if (qktest::ReadFile(entry.path()) !=
        qktest::ReadFile(dirs[1] / "weights" / entry.path().filename()))
      ++differing;
  }
  const bool config_same =
      qktest::ReadFile(dirs[0] / "config.json") == qktest::ReadFile(dirs[1] / "config.json");
  const bool metrics_same = MetricsWithoutWallTime(dirs[0] / "metrics.csv") ==
                            MetricsWithoutWallTime(dirs[1] / "metrics.csv");
  o.detail << files << " weight files, " << differing << " differ; config identical "
           << config_same << "; metrics identical (excluding wall_seconds) " << metrics_same;
  o.Require(files > 0 && differing == 0, "weights");
  o.Require(config_same && metrics_same, "config and metrics");
  fs::remove_all(root);
}

}  // namespace
}  // namespace qkspike

int main(int argc, char** argv) {
  using namespace qkspike;
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::stoi(argv[i]));
  Runs runs;
  const std::vector<std::pair<std::string, std::function<void(Outcome&)>>> criteria = {
      {"variance closed forms vs Monte Carlo", MonteCarloGrid},
      {"attention oracle equivalence", OracleEquivalence},
      {"complexity scaling", ComplexityScaling},
      {"gradient correctness", GradientCorrectness},
      {"neuron dynamics", NeuronFixtures},
      {"energy arithmetic", EnergyArithmetic},
      {"memory model trend", MemoryTrend},
      {"desk-scale training", [&](Outcome& o) { DeskTraining(o, runs); }},
      {"spike purity and sparsification", [&](Outcome& o) { SpikePurity(o, runs); }},
      {"ablation trends", [&](Outcome& o) { AblationTrends(o, runs); }},
      {"determinism", Determinism},
  };
  int failures = 0;
  for (size_t i = 0; i < criteria.size(); ++i) {
    const int number = static_cast<int>(i) + 1;
    if (!selected.empty() && !selected.count(number)) continue;
    Outcome o;
    const auto start = std::chrono::steady_clock::now();
    try {
      criteria[i].second(o);
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << " [exception: " << e.what() << "]";
    }
    if (!o.pass) ++failures;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << number << " ("
              << criteria[i].first << "): " << o.detail.str() << " {"
              << std::fixed << std::setprecision(1) << Seconds(start) << " s}" << std::defaultfloat
              << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
