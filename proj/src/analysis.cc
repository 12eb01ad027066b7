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

#include "qkspike/analysis.h"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "qkspike/model.h"

namespace qkspike {

namespace {

std::string Fixed(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string_view StripSuffix(std::string_view name, std::string_view suffix) {
  if (name.size() < suffix.size() || name.substr(name.size() - suffix.size()) != suffix) {
    return {};
  }
  return name.substr(0, name.size() - suffix.size());
}

Tensor SliceRows(const Tensor& x, int64_t begin, int64_t end) {
  const int64_t row = x.numel() / x.dim(0);
  Shape shape = x.shape();
  shape[0] = end - begin;
  auto d = x.data();
  return Tensor(std::move(shape),
                std::vector<double>(d.begin() + begin * row, d.begin() + end * row));
}

class ProfileObserver : public ForwardObserver {
 public:
  explicit ProfileObserver(ModelProfile& profile) : profile_(profile) {}
  void set_weight(double w) { weight_ = w; }

  void OnActivation(std::string_view name, ActivationKind kind, const Tensor& value) override {
    if (kind != ActivationKind::kAnalog) profile_.rates.Add(name, kind, value);
  }
  void OnLayer(const LayerRecord& record) override {
    auto it = index_.find(record.name);
    if (it == index_.end()) {
      index_.emplace(record.name, layers_.size());
      layers_.push_back({record, 0.0, 0.0});
      it = index_.find(record.name);
    }
    Acc& a = layers_[it->second];
    a.rate_sum += record.firing_rate * weight_;
    a.weight += weight_;
  }
  void Finish() {
    for (const Acc& a : layers_) {
      LayerRecord r = a.record;
      r.firing_rate = a.weight > 0 ? a.rate_sum / a.weight : 0.0;
      profile_.layers.push_back(r);
    }
  }

 private:
  struct Acc {
    LayerRecord record;
    double rate_sum;
    double weight;
  };
  ModelProfile& profile_;
  double weight_ = 1.0;
  std::vector<Acc> layers_;
  std::map<std::string, size_t, std::less<>> index_;
};

}  // namespace

// ---------------------------------------------------------------------------

void EnergyModel::Validate() const {
  if (!(e_mac_pj > 0.0) || !(e_ac_pj > 0.0)) {
    throw ConfigError("energy constants must be positive");
  }
  int first = 0;
  for (const auto& l : layers) {
    sop_count(l);
    if (l.kind == LayerKind::kFirstEncoder) ++first;
  }
  if (first != 1) {
    throw ConfigError("energy profile needs exactly one first-encoder (MAC) layer, found " +
                      std::to_string(first));
  }
}

double sop_count(const LayerRecord& layer) {
  if (layer.flops < 0) throw ConfigError("layer '" + layer.name + "': negative FLOPs");
  if (!(layer.firing_rate >= 0.0 && layer.firing_rate <= 1.0)) {
    throw ConfigError("layer '" + layer.name + "': firing rate outside [0, 1]");
  }
  if (layer.time_steps < 1) throw ConfigError("layer '" + layer.name + "': T must be >= 1");
  return layer.firing_rate * static_cast<double>(layer.time_steps) *
         static_cast<double>(layer.flops);
}

EnergyReport energy_estimate(const EnergyModel& model) {
  model.Validate();
  EnergyReport report;
  for (const auto& l : model.layers) {
    LayerEnergy e;
    e.layer = l;
    e.mac_domain = l.kind == LayerKind::kFirstEncoder;
    if (e.mac_domain) {
      e.energy_pj = model.e_mac_pj * static_cast<double>(l.flops);
      report.mac_pj += e.energy_pj;
    } else {
      e.sops = sop_count(l);
      e.energy_pj = model.e_ac_pj * e.sops;
      report.ac_pj += e.energy_pj;
      report.total_sops += e.sops;
    }
    report.total_flops += l.flops;
    report.layers.push_back(e);
  }
  report.total_pj = report.mac_pj + report.ac_pj;
  report.ann_pj = model.e_mac_pj * static_cast<double>(report.total_flops);
  return report;
}

nlohmann::json EnergyReport::ToJson() const {
  nlohmann::json layers_json = nlohmann::json::array();
  for (const auto& e : layers) {
    layers_json.push_back({{"name", e.layer.name},
                           {"kind", LayerKindName(e.layer.kind)},
                           {"flops", e.layer.flops},
                           {"firing_rate", e.layer.firing_rate},
                           {"time_steps", e.layer.time_steps},
                           {"domain", e.mac_domain ? "MAC" : "AC"},
                           {"sops", e.sops},
                           {"energy_pj", e.energy_pj}});
  }
  return {{"e_mac_pj", kEnergyMacPj}, {"e_ac_pj", kEnergyAcPj},
          {"mac_pj", mac_pj},         {"ac_pj", ac_pj},
          {"total_pj", total_pj},     {"total_mj", total_pj * 1e-9},
          {"total_sops", total_sops}, {"total_flops", total_flops},
          {"ann_pj", ann_pj},         {"layers", layers_json}};
}

std::string EnergyReport::ToCsv() const {
  std::ostringstream os;
  os << "name,kind,flops,firing_rate,time_steps,domain,sops,energy_pj\n";
  for (const auto& e : layers) {
    os << e.layer.name << ',' << LayerKindName(e.layer.kind) << ',' << e.layer.flops << ','
       << Fixed(e.layer.firing_rate) << ',' << e.layer.time_steps << ','
       << (e.mac_domain ? "MAC" : "AC") << ',' << Fixed(e.sops, 3) << ','
       << Fixed(e.energy_pj, 3) << '\n';
  }
  return os.str();
}

// ---------------------------------------------------------------------------

void FiringRateReport::Add(std::string_view name, ActivationKind kind, const Tensor& value) {
  auto it = index_.find(name);
  if (it == index_.end()) {
    it = index_.emplace(std::string(name), entries_.size()).first;
    entries_.push_back({std::string(name), kind, 0, 0});
  }
  RateEntry& e = entries_[it->second];
  auto d = value.data();
  e.active += std::count_if(d.begin(), d.end(), [](double v) { return v != 0.0; });
  e.total += value.numel();
}

double FiringRateReport::rate(std::string_view name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("no firing rate for '" + std::string(name) + "'");
  return entries_[it->second].rate();
}

bool FiringRateReport::contains(std::string_view name) const {
  return index_.find(name) != index_.end();
}

std::vector<std::string> FiringRateReport::sparsification_violations() const {
  std::vector<std::string> out;
  for (const auto& e : entries_) {
    std::string_view scope = StripSuffix(e.name, ".x_prime");
    if (scope.empty()) continue;
    const std::string base(scope), k = base + ".k";
    // Only Q-K attention masks K; an SSA core output is unrelated to it.
    if (!contains(base + ".a_t") && !contains(base + ".a_c")) continue;
    if (contains(k) && e.rate() > rate(k)) out.emplace_back(scope);
  }
  return out;
}

nlohmann::json FiringRateReport::ToJson() const {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& e : entries_) j[e.name] = e.rate();
  return j;
}

std::string FiringRateReport::ToCsv() const {
  std::ostringstream os;
  os << "name,rate,active,total\n";
  for (const auto& e : entries_) {
    os << e.name << ',' << Fixed(e.rate()) << ',' << e.active << ',' << e.total << '\n';
  }
  return os.str();
}

FiringRateReport FiringRateReport::FromRates(const std::map<std::string, double>& rates) {
  constexpr int64_t kScale = 1000000;
  FiringRateReport r;
  for (const auto& [name, rate] : rates) {
    if (!(rate >= 0.0 && rate <= 1.0)) {
      throw ConfigError("reference rate for '" + name + "' outside [0, 1]");
    }
    r.index_.emplace(name, r.entries_.size());
    r.entries_.push_back({name, ActivationKind::kSpike,
                          static_cast<int64_t>(std::llround(rate * kScale)), kScale});
  }
  return r;
}

ModelProfile firing_rate_profile(QKFormer& model, const Tensor& inputs, int64_t batch_size) {
  if (inputs.rank() != 4) {
    throw DimensionError("firing_rate_profile: inputs must be [S, n, H, W], got " +
                         ShapeToString(inputs.shape()));
  }
  if (inputs.dim(0) == 0) throw ConfigError("firing_rate_profile: empty dataset");
  if (batch_size < 1) throw ConfigError("firing_rate_profile: batch_size must be >= 1");
  ModelProfile profile;
  ProfileObserver observer(profile);
  NoGradGuard no_grad;
  const bool was_training = model.training();
  model.set_training(false);
  const int64_t total = inputs.dim(0);
  for (int64_t begin = 0; begin < total; begin += batch_size) {
    const int64_t end = std::min(total, begin + batch_size);
    observer.set_weight(static_cast<double>(end - begin));
    model.forward(SliceRows(inputs, begin, end), &observer);
  }
  model.set_training(was_training);
  observer.Finish();
  profile.samples = total;
  return profile;
}

void SpikePurityObserver::OnActivation(std::string_view name, ActivationKind kind,
                                       const Tensor& value) {
  ++checked_;
  const std::string n(name);
  switch (kind) {
    case ActivationKind::kSpike:
      if (!value.is_binary()) violations_.push_back(n + ": non-binary spikes");
      break;
    case ActivationKind::kShortcutSum:
      if (!value.is_small_integer(2)) violations_.push_back(n + ": shortcut sum outside {0,1,2}");
      break;
    case ActivationKind::kResidual:
      if (!value.is_small_integer(1 << 20)) {
        violations_.push_back(n + ": residual is not a non-negative spike count");
      }
      break;
    case ActivationKind::kAnalog:
      break;
  }
  if (std::string_view scope = StripSuffix(name, ".k"); !scope.empty()) {
    k_tensors_[std::string(scope)] = value;
  } else if (std::string_view scope = StripSuffix(name, ".a_t"); !scope.empty()) {
    qk_scopes_.emplace(scope);
  } else if (std::string_view scope = StripSuffix(name, ".a_c"); !scope.empty()) {
    qk_scopes_.emplace(scope);
  } else if (std::string_view scope = StripSuffix(name, ".x_prime");
             !scope.empty() && qk_scopes_.count(scope)) {
    auto it = k_tensors_.find(scope);
    if (it == k_tensors_.end()) {
      violations_.push_back(n + ": no K recorded for this attention layer");
      return;
    }
    const Tensor& k = it->second;
    bool masked = k.shape() == value.shape();
    for (int64_t i = 0; masked && i < value.numel(); ++i) masked = value[i] <= k[i];
    if (!masked) violations_.push_back(n + ": X' is not a sub-mask of K");
    if (value.firing_rate() > k.firing_rate()) violations_.push_back(n + ": rate(X') > rate(K)");
  }
}

// ---------------------------------------------------------------------------

MemoryEstimate memory_model(Mechanism mechanism, int64_t tokens, int64_t channels,
                            int64_t time_steps, int64_t batch, int64_t heads) {
  if (tokens < 1 || channels < 1 || time_steps < 1 || batch < 1 || heads < 0) {
    throw ConfigError("memory_model: dimensions must be positive");
  }
  MemoryEstimate m;
  m.mechanism = mechanism;
  m.tokens = tokens;
  m.channels = channels;
  m.heads = heads > 0 ? heads : std::max<int64_t>(1, channels / 32);
  m.time_steps = time_steps;
  m.batch = batch;
  const int64_t reps = time_steps * batch;
  const int64_t nc = tokens * channels;
  switch (mechanism) {
    case Mechanism::kQkta:
      m.activation_elements = 10 * nc * reps;
      m.attention_elements = 2 * m.heads * tokens * reps;
      break;
    case Mechanism::kQkca:
      m.activation_elements = 10 * nc * reps;
      m.attention_elements = 2 * channels * reps;
      break;
    case Mechanism::kSsa:
      m.activation_elements = 14 * nc * reps;
      m.attention_elements = m.heads * tokens * tokens * reps;
      break;
  }
  return m;
}

std::vector<MemoryRow> memory_curve(const std::vector<int64_t>& sqrt_tokens, int64_t channels,
                                    int64_t time_steps, int64_t batch, int64_t heads) {
  std::vector<MemoryRow> rows;
  for (int64_t s : sqrt_tokens) {
    const int64_t n = s * s;
    const int64_t a = memory_model(Mechanism::kQkta, n, channels, time_steps, batch, heads).total();
    const int64_t b = memory_model(Mechanism::kSsa, n, channels, time_steps, batch, heads).total();
    rows.push_back({s, a, b, static_cast<double>(b) / static_cast<double>(a)});
  }
  return rows;
}

std::string MemoryCurveCsv(const std::vector<MemoryRow>& rows) {
  std::ostringstream os;
  os << "sqrt_n,qkta_elements,ssa_elements,ratio\n";
  for (const auto& r : rows) {
    os << r.sqrt_tokens << ',' << r.qkta_elements << ',' << r.ssa_elements << ','
       << Fixed(r.ratio) << '\n';
  }
  return os.str();
}

ComplexityReport measure_complexity(Mechanism mechanism, int64_t tokens, int64_t embed_dim,
                                    int64_t heads, int64_t time_steps, int64_t batch,
                                    uint64_t seed) {
  AttentionConfig cfg;
  cfg.mechanism = mechanism;
  cfg.embed_dim = embed_dim;
  cfg.heads = heads;
  cfg.Validate();
  Rng rng(seed);
  auto spikes = [&]() {
    Tensor t({time_steps, batch, tokens, embed_dim});
    for (double& v : t.mutable_data()) v = static_cast<double>(rng() & 1);
    return t;
  };
  NoGradGuard no_grad;
  ComplexityReport counters;
  Tensor q = spikes(), k = spikes();
  switch (mechanism) {
    case Mechanism::kQkta: qkta_forward(q, k, cfg, &counters); break;
    case Mechanism::kQkca: qkca_forward(q, k, cfg, &counters); break;
    case Mechanism::kSsa: ssa_forward(q, k, spikes(), cfg, &counters); break;
  }
  return counters;
}

}  // namespace qkspike
