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

// Closed-form attention statistics and their Monte Carlo check, the SOP /
// energy model, firing-rate profiling and the analytic memory model.

#ifndef QKSPIKE_ANALYSIS_H_
#define QKSPIKE_ANALYSIS_H_

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "qkspike/attention.h"
#include "qkspike/layers.h"
#include "qkspike/tensor.h"

namespace qkspike {

class QKFormer;

// ---------------------------------------------------------------------------
// Statistics of the attention pre-activations under independent Bernoulli
// spikes.

enum class StatKind { kQkta, kQkca, kSsa };

const char* StatKindName(StatKind kind);
StatKind ParseStatKind(std::string_view name);

struct StatParams {
  StatKind kind = StatKind::kQkta;
  // Channels summed per head (QKTA) or per token (SSA).
  int64_t head_dim = 64;
  // Tokens summed per channel (QKCA) or per row (SSA).
  int64_t tokens = 196;
  double f_q = 0.5;
  double f_k = 0.5;
  double f_v = 0.5;

  // Throws ConfigError for f outside [0, 1] or non-positive sizes.
  void Validate() const;
};

struct StatResult {
  double expectation = 0.0;
  double variance = 0.0;
  StatParams params;
};

enum class QkAxis { kToken, kChannel };

// Sum of `dim` Bernoulli(f_q) spikes: E = dim f, Var = dim f (1 - f).
StatResult qk_attention_stats(QkAxis axis, int64_t dim, double f_q);

// Sum over N*d products Q K V of independent spikes, variance in its
// seven-term expanded form.
StatResult ssa_stats(int64_t tokens, int64_t head_dim, double f_q, double f_k, double f_v);

StatResult closed_form_stats(const StatParams& params);

enum class McSampler {
  kAuto,          // element-level for QKTA/QKCA, kProduct for SSA
  kElement,       // one Bernoulli draw per spike (bit-parallel at f = 0.5)
  kHierarchical,  // SSA only: Q ones ~ Bin(Nd, f_Q), then thinned by f_K, f_V
  kProduct,       // SSA only: one Bin(Nd, f_Q f_K f_V) draw per sample
};

struct McOptions {
  int64_t samples = 100000;
  uint64_t seed = 0;
  int threads = 1;
  McSampler sampler = McSampler::kAuto;
  double relative_tolerance = 0.02;
  double standard_errors = 3.0;
};

struct McResult {
  StatResult closed;
  double mean = 0.0;
  double variance = 0.0;  // unbiased sample variance
  double se_mean = 0.0;
  double se_variance = 0.0;
  bool mean_ok = false;
  bool variance_ok = false;
  bool pass() const { return mean_ok && variance_ok; }
};

// Draws `samples` independent pre-activations and compares their moments to
// the closed form with tolerance max(relative * |closed|, k * SE). Samples are
// split into fixed chunks, each with its own RNG stream derived from
// (seed, chunk), so results do not depend on the thread count.
McResult mc_verify(const StatParams& params, const McOptions& options = {});

// ---------------------------------------------------------------------------
// Energy.

inline constexpr double kEnergyMacPj = 4.6;
inline constexpr double kEnergyAcPj = 0.9;

struct EnergyModel {
  double e_mac_pj = kEnergyMacPj;
  double e_ac_pj = kEnergyAcPj;
  std::vector<LayerRecord> layers;

  void Validate() const;
};

// fr * T * FLOPs.
double sop_count(const LayerRecord& layer);

struct LayerEnergy {
  LayerRecord layer;
  bool mac_domain = false;
  double sops = 0.0;  // 0 for the MAC-domain layer
  double energy_pj = 0.0;
};

struct EnergyReport {
  std::vector<LayerEnergy> layers;
  double mac_pj = 0.0;
  double ac_pj = 0.0;
  double total_pj = 0.0;
  double total_sops = 0.0;
  int64_t total_flops = 0;
  // Same network with every layer as MACs: E_MAC * sum FLOPs.
  double ann_pj = 0.0;

  nlohmann::json ToJson() const;
  std::string ToCsv() const;
};

// E = E_AC * sum SOP (spike-driven layers) + E_MAC * FLOPs (first encoder).
// Exactly one layer must be flagged kFirstEncoder.
EnergyReport energy_estimate(const EnergyModel& model);

// ---------------------------------------------------------------------------
// Firing-rate profiling.

struct RateEntry {
  std::string name;
  ActivationKind kind = ActivationKind::kSpike;
  int64_t active = 0;  // elements != 0
  int64_t total = 0;
  double rate() const { return total > 0 ? static_cast<double>(active) / total : 0.0; }
};

class FiringRateReport {
 public:
  void Add(std::string_view name, ActivationKind kind, const Tensor& value);
  // Rate of a recorded tensor; throws std::out_of_range when absent.
  double rate(std::string_view name) const;
  bool contains(std::string_view name) const;
  const std::vector<RateEntry>& entries() const { return entries_; }

  // Q-K attention scopes (".../attn") whose masked output fires more than K.
  std::vector<std::string> sparsification_violations() const;

  nlohmann::json ToJson() const;
  std::string ToCsv() const;
  // Entries given as {"name": rate} pairs, for reference profiles.
  static FiringRateReport FromRates(const std::map<std::string, double>& rates);

 private:
  std::vector<RateEntry> entries_;
  std::map<std::string, size_t, std::less<>> index_;
};

struct ModelProfile {
  FiringRateReport rates;
  // One record per synaptic layer; firing rates averaged over the pass.
  std::vector<LayerRecord> layers;
  int64_t samples = 0;
};

// Runs the model in inference mode (restoring its mode afterwards) over
// inputs[S, n, H, W] in batches. Analog tensors are not rated.
ModelProfile firing_rate_profile(QKFormer& model, const Tensor& inputs,
                                 int64_t batch_size = 32);

// Checks every observed activation against its declared domain: kSpike
// binary, kShortcutSum in {0, 1, 2}, kResidual non-negative integer.
// Also checks that X' is a sub-mask of K in every Q-K attention layer.
class SpikePurityObserver : public ForwardObserver {
 public:
  void OnActivation(std::string_view name, ActivationKind kind, const Tensor& value) override;
  const std::vector<std::string>& violations() const { return violations_; }
  int64_t checked() const { return checked_; }

 private:
  std::vector<std::string> violations_;
  std::map<std::string, Tensor, std::less<>> k_tensors_;
  std::set<std::string, std::less<>> qk_scopes_;
  int64_t checked_ = 0;
};

// ---------------------------------------------------------------------------
// Memory and complexity.

// Elements held by one attention layer forward (projections, core, post
// projection) for [T, B, N, C] input with h heads:
//   QKTA: 10 N C + 2 h N       QKCA: 10 N C + 2 C
//   SSA:  14 N C + h N^2
// each times T * B. `heads` 0 selects C / 32 (at least 1).
struct MemoryEstimate {
  Mechanism mechanism = Mechanism::kQkta;
  int64_t tokens = 0, channels = 0, heads = 0, time_steps = 1, batch = 1;
  int64_t activation_elements = 0;  // O(N C) part
  int64_t attention_elements = 0;   // attention vector or attention map
  int64_t total() const { return activation_elements + attention_elements; }
};

MemoryEstimate memory_model(Mechanism mechanism, int64_t tokens, int64_t channels,
                            int64_t time_steps = 1, int64_t batch = 1, int64_t heads = 0);

struct MemoryRow {
  int64_t sqrt_tokens;
  int64_t qkta_elements;
  int64_t ssa_elements;
  double ratio;
};

std::vector<MemoryRow> memory_curve(const std::vector<int64_t>& sqrt_tokens, int64_t channels,
                                    int64_t time_steps = 1, int64_t batch = 1,
                                    int64_t heads = 0);
// Header "sqrt_n,qkta_elements,ssa_elements,ratio".
std::string MemoryCurveCsv(const std::vector<MemoryRow>& rows);

// Runs the attention core on random spikes of shape [T, B, N, D] and returns
// its instrumented counters.
ComplexityReport measure_complexity(Mechanism mechanism, int64_t tokens, int64_t embed_dim,
                                    int64_t heads, int64_t time_steps = 1, int64_t batch = 1,
                                    uint64_t seed = 0);

}  // namespace qkspike

#endif  // QKSPIKE_ANALYSIS_H_
