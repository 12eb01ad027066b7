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

#include "qkspike/cli.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "qkspike/analysis.h"
#include "qkspike/data.h"
#include "qkspike/model.h"
#include "qkspike/serialize.h"
#include "qkspike/train.h"

namespace qkspike {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

struct Common {
  std::string config;
  std::optional<uint64_t> seed;
  std::string out;
};

void AddCommon(CLI::App* cmd, Common& c, bool config_required) {
  auto* opt = cmd->add_option("--config", c.config, "JSON configuration file");
  if (config_required) opt->required();
  cmd->add_option("--seed", c.seed, "Seed override (fallback: QKF_SEED, then the config)");
  cmd->add_option("--out", c.out, "Output directory");
}

json LoadConfig(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
  }
}

uint64_t ResolveSeed(const Common& c, uint64_t from_config) {
  if (c.seed) return *c.seed;
  if (const char* env = std::getenv("QKF_SEED"); env && *env) {
    try {
      size_t used = 0;
      const uint64_t v = std::stoull(env, &used);
      if (used == std::string(env).size()) return v;
    } catch (const std::exception&) {
    }
    throw ConfigError(std::string("QKF_SEED is not an unsigned integer: '") + env + "'");
  }
  return from_config;
}

fs::path OutDir(const Common& c, const std::string& fallback) {
  fs::path dir = c.out.empty() ? fs::path(fallback) : fs::path(c.out);
  fs::create_directories(dir);
  return dir;
}

void WriteText(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  out << text;
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
}

template <typename T>
T Get(const json& j, const char* key, T fallback) {
  try {
    return j.value(key, fallback);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

void RejectUnknown(const json& j, std::initializer_list<const char*> keys, const char* what) {
  if (!j.is_object()) throw ConfigError(std::string(what) + " config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    bool known = false;
    for (const char* k : keys) known = known || key == k;
    if (!known) throw ConfigError("unknown key '" + key + "' in " + what + " config");
  }
}

std::vector<int64_t> ParseList(const std::string& text) {
  std::vector<int64_t> values;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      size_t used = 0;
      values.push_back(std::stoll(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError("'" + item + "' is not an integer");
    }
  }
  if (values.empty()) throw ConfigError("empty list");
  return values;
}

// Model and data for eval / profile-energy: a checkpoint, or a fresh model.
struct Subject {
  RunConfig run;
  std::unique_ptr<QKFormer> model;
};

Subject LoadSubject(const json& cfg, const std::string& checkpoint_flag, const Common& common) {
  const std::string checkpoint =
      checkpoint_flag.empty() ? Get<std::string>(cfg, "checkpoint", "") : checkpoint_flag;
  Subject s;
  if (!checkpoint.empty()) {
    Checkpoint c = LoadCheckpoint(checkpoint);
    s.run = c.config;
    s.model = std::move(c.model);
  } else if (cfg.contains("run")) {
    s.run = RunConfig::FromJson(cfg["run"]);
    s.run.seed = ResolveSeed(common, s.run.seed);
    s.model = build(s.run.model, s.run.seed);
  } else {
    throw ConfigError("give a checkpoint (--checkpoint or \"checkpoint\") or a \"run\" config");
  }
  if (cfg.contains("dataset")) {
    s.run.dataset = DatasetSpec::FromJson(cfg["dataset"]);
    s.run.Validate();
  }
  return s;
}

Dataset PickSplit(const SplitDataset& data, const std::string& split) {
  if (split == "test") return data.test;
  if (split == "train") return data.train;
  throw ConfigError("split must be 'train' or 'test'");
}

// The same data stream train() uses, so eval sees the held-out split.
SplitDataset SubjectData(const RunConfig& run) {
  constexpr uint64_t kDataStream = 0x5851f42d4c957f2dULL;
  return load_dataset(run.dataset, run.seed ^ kDataStream);
}

int RunTrain(const Common& c, std::ostream& out) {
  json cfg = LoadConfig(c.config);
  RunConfig run = RunConfig::FromJson(cfg);
  run.seed = ResolveSeed(c, run.seed);
  run.out_dir = OutDir(c, run.out_dir.empty() ? "runs/train" : run.out_dir).string();
  TrainResult r = train(run, &out);
  out << "checkpoint: " << run.out_dir << "\n"
      << "final test accuracy: " << std::fixed << std::setprecision(4)
      << r.final_eval.accuracy << "\n";
  return kExitOk;
}

int RunEval(const Common& c, const std::string& checkpoint, std::ostream& out) {
  json cfg = LoadConfig(c.config);
  RejectUnknown(cfg, {"checkpoint", "run", "dataset", "split", "batch_size"}, "eval");
  Subject s = LoadSubject(cfg, checkpoint, c);
  Dataset data = PickSplit(SubjectData(s.run), Get<std::string>(cfg, "split", "test"));
  EvalResult r = evaluate(*s.model, data, Get<int64_t>(cfg, "batch_size", 64));
  json report = {{"accuracy", r.accuracy}, {"loss", r.loss}, {"samples", r.samples},
                 {"confusion", r.confusion}};
  out << report.dump(2) << "\n";
  if (!c.out.empty()) WriteText(OutDir(c, ".") / "eval.json", report.dump(2) + "\n");
  return kExitOk;
}

int RunProfileEnergy(const Common& c, const std::string& checkpoint, std::ostream& out) {
  json cfg = LoadConfig(c.config);
  RejectUnknown(cfg, {"checkpoint", "run", "dataset", "split", "batch_size"}, "profile-energy");
  Subject s = LoadSubject(cfg, checkpoint, c);
  Dataset data = PickSplit(SubjectData(s.run), Get<std::string>(cfg, "split", "test"));
  ModelProfile profile =
      firing_rate_profile(*s.model, data.images, Get<int64_t>(cfg, "batch_size", 32));
  EnergyModel em;
  em.layers = profile.layers;
  EnergyReport report = energy_estimate(em);
  json j = report.ToJson();
  j["samples"] = profile.samples;
  j["firing_rates"] = profile.rates.ToJson();
  j["sparsification_violations"] = profile.rates.sparsification_violations();
  const fs::path dir = OutDir(c, ".");
  WriteText(dir / "energy.json", j.dump(2) + "\n");
  WriteText(dir / "energy_layers.csv", report.ToCsv());
  WriteText(dir / "firing_rates.csv", profile.rates.ToCsv());
  out << std::fixed << std::setprecision(6) << "layers: " << report.layers.size()
      << "\nMAC energy (pJ): " << report.mac_pj << "\nAC energy (pJ): " << report.ac_pj
      << "\ntotal energy (pJ): " << report.total_pj << "\nANN equivalent (pJ): " << report.ann_pj
      << "\nwritten: " << (dir / "energy.json").string() << "\n";
  return kExitOk;
}

// Captures token (or channel) attention vectors and K / X' rates of one
// forward pass.
class AttentionCapture : public ForwardObserver {
 public:
  struct Layer {
    std::string scope;
    Tensor vector;  // [T, B, N, h] for QKTA, [T, B, 1, D] for QKCA
    bool token = true;
    double k_rate = 0.0, x_prime_rate = 0.0;
  };
  void OnActivation(std::string_view name, ActivationKind, const Tensor& value) override {
    const std::string n(name);
    auto ends = [&](const std::string& suffix) {
      return n.size() > suffix.size() && n.compare(n.size() - suffix.size(), suffix.size(),
                                                   suffix) == 0;
    };
    auto scope = [&](size_t cut) { return n.substr(0, n.size() - cut); };
    if (ends(".a_t") || ends(".a_c")) {
      Layer& l = At(scope(4));
      l.vector = value;
      l.token = ends(".a_t");
    }
    if (ends(".attn.k")) At(scope(2)).k_rate = value.firing_rate();
    if (ends(".x_prime")) At(scope(8)).x_prime_rate = value.firing_rate();
  }
  std::vector<Layer> layers;

 private:
  Layer& At(const std::string& scope) {
    for (auto& l : layers)
      if (l.scope == scope) return l;
    layers.push_back({scope, {}, true, 0.0, 0.0});
    return layers.back();
  }
};

// Per-token attention vectors of one sample: stage,block,time_step,head,index,value.
void ExportAttentionVectors(const json& cfg, const std::string& checkpoint, const Common& c,
                            const fs::path& dir, std::ostream& out) {
  json subject = json::object();
  for (const char* key : {"checkpoint", "run", "dataset"})
    if (cfg.contains(key)) subject[key] = cfg[key];
  Subject s = LoadSubject(subject, checkpoint, c);
  Dataset data = PickSplit(SubjectData(s.run), Get<std::string>(cfg, "split", "test"));
  const int64_t index = Get<int64_t>(cfg, "sample", 0);
  if (index < 0 || index >= data.size()) {
    throw ConfigError("sample index " + std::to_string(index) + " outside the split");
  }
  AttentionCapture capture;
  s.model->set_training(false);
  {
    NoGradGuard no_grad;
    s.model->forward(data.Select({index}).images, &capture);
  }
  std::ostringstream vec, summary;
  vec << "stage,block,kind,time_step,head,index,value\n";
  summary << "stage,block,kind,k_rate,x_prime_rate,attention_rate\n";
  for (const auto& l : capture.layers) {
    // scope "stageS.blockK.attn"
    const std::string stage = l.scope.substr(5, l.scope.find('.') - 5);
    const size_t b0 = l.scope.find(".block") + 6;
    const std::string block = l.scope.substr(b0, l.scope.find('.', b0) - b0);
    if (!l.vector.defined()) {
      summary << stage << ',' << block << ",ssa," << l.k_rate << ',' << l.x_prime_rate << ",\n";
      continue;
    }
    const bool token = l.token;
    const int64_t steps = l.vector.dim(0), rows = l.vector.dim(2), cols = l.vector.dim(3);
    for (int64_t t = 0; t < steps; ++t)
      for (int64_t r = 0; r < rows; ++r)
        for (int64_t h = 0; h < cols; ++h) {
          const double v = l.vector[(t * rows + r) * cols + h];
          // Token vectors are indexed by token per head; channel vectors by channel.
          vec << stage << ',' << block << ',' << (token ? "token" : "channel") << ',' << t << ','
              << (token ? h : 0) << ',' << (token ? r : h) << ',' << v << '\n';
        }
    summary << stage << ',' << block << ',' << (token ? "qkta" : "qkca") << ',' << l.k_rate << ','
            << l.x_prime_rate << ',' << l.vector.firing_rate() << '\n';
  }
  WriteText(dir / "attention_vectors.csv", vec.str());
  WriteText(dir / "attention_summary.csv", summary.str());
  out << summary.str() << "written: " << (dir / "attention_vectors.csv").string() << "\n";
}

int RunAnalyzeAttention(const Common& c, const std::string& checkpoint, std::ostream& out) {
  json cfg = LoadConfig(c.config);
  RejectUnknown(cfg, {"tokens", "head_dim", "rates", "checkpoint", "run", "dataset", "split",
                      "sample"},
                "analyze-attention");
  const int64_t n = Get<int64_t>(cfg, "tokens", 196);
  const int64_t d = Get<int64_t>(cfg, "head_dim", 64);
  std::vector<double> rates = Get<std::vector<double>>(
      cfg, "rates", {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9});
  std::ostringstream csv;
  csv << "kind,f_q,f_k,f_v,expectation,variance\n";
  double max_qkta = 0, max_qkca = 0, max_ssa = 0;
  auto row = [&](const char* kind, const StatResult& r) {
    csv << kind << ',' << r.params.f_q << ',' << r.params.f_k << ',' << r.params.f_v << ','
        << r.expectation << ',' << r.variance << '\n';
  };
  for (double f : rates) {
    StatResult a = qk_attention_stats(QkAxis::kToken, d, f);
    StatResult b = qk_attention_stats(QkAxis::kChannel, n, f);
    row("qkta", a);
    row("qkca", b);
    max_qkta = std::max(max_qkta, a.variance);
    max_qkca = std::max(max_qkca, b.variance);
  }
  for (double fq : rates)
    for (double fk : rates)
      for (double fv : rates) {
        StatResult s = ssa_stats(n, d, fq, fk, fv);
        row("ssa", s);
        max_ssa = std::max(max_ssa, s.variance);
      }
  const fs::path dir = OutDir(c, ".");
  WriteText(dir / "attention_stats.csv", csv.str());
  out << "tokens " << n << ", head_dim " << d << "\n"
      << "max Var(QKTA) = " << max_qkta << "\nmax Var(QKCA) = " << max_qkca
      << "\nmax Var(SSA)  = " << max_ssa << "\nwritten: "
      << (dir / "attention_stats.csv").string() << "\n";
  if (!checkpoint.empty() || cfg.contains("checkpoint") || cfg.contains("run")) {
    ExportAttentionVectors(cfg, checkpoint, c, dir, out);
  }
  return kExitOk;
}

int RunBenchComplexity(const Common& c, std::string mechanism_flag, std::string n_flag,
                       int64_t dim_flag, int64_t heads_flag, std::ostream& out) {
  json cfg = LoadConfig(c.config);
  RejectUnknown(cfg, {"mechanism", "tokens", "embed_dim", "heads", "time_steps"},
                "bench-complexity");
  if (mechanism_flag.empty()) mechanism_flag = Get<std::string>(cfg, "mechanism", "qkta");
  const Mechanism mech = ParseMechanism(mechanism_flag);
  std::vector<int64_t> tokens =
      n_flag.empty() ? Get<std::vector<int64_t>>(cfg, "tokens", {256, 1024}) : ParseList(n_flag);
  const int64_t dim = dim_flag > 0 ? dim_flag : Get<int64_t>(cfg, "embed_dim", 64);
  const int64_t heads =
      heads_flag > 0 ? heads_flag : Get<int64_t>(cfg, "heads", std::max<int64_t>(1, dim / 32));
  const int64_t steps = Get<int64_t>(cfg, "time_steps", 1);
  const uint64_t seed = ResolveSeed(c, 0);
  std::ostringstream csv;
  csv << "mechanism,tokens,embed_dim,heads,attention_ops,workspace_elements\n";
  out << "mechanism " << MechanismName(mech) << ", D " << dim << ", h " << heads << "\n";
  std::vector<ComplexityReport> reports;
  for (int64_t n : tokens) {
    ComplexityReport r = measure_complexity(mech, n, dim, heads, steps, 1, seed);
    if (!(r == complexity_of(mech, n, dim, heads, steps))) {
      throw std::runtime_error("instrumented counters disagree with the closed form at N=" +
                               std::to_string(n));
    }
    reports.push_back(r);
    csv << MechanismName(mech) << ',' << n << ',' << dim << ',' << heads << ','
        << r.attention_ops << ',' << r.workspace_elements << '\n';
    out << "N=" << n << "  attention_ops=" << r.attention_ops
        << "  workspace_elements=" << r.workspace_elements << "\n";
  }
  if (reports.size() >= 2) {
    const double ops = static_cast<double>(reports.back().attention_ops) /
                       static_cast<double>(reports.front().attention_ops);
    const double ws = static_cast<double>(reports.back().workspace_elements) /
                      static_cast<double>(reports.front().workspace_elements);
    out << "ratio " << ops << "\nworkspace ratio " << ws << "\n";
  }
  if (!c.out.empty()) WriteText(OutDir(c, ".") / "complexity.csv", csv.str());
  return kExitOk;
}

int RunBenchMemory(const Common& c, int64_t channels_flag, std::string sqrt_flag,
                   std::ostream& out) {
  json cfg = LoadConfig(c.config);
  RejectUnknown(cfg, {"channels", "sqrt_tokens", "time_steps", "batch", "heads"}, "bench-memory");
  const int64_t channels = channels_flag > 0 ? channels_flag : Get<int64_t>(cfg, "channels", 256);
  std::vector<int64_t> sqrt_n;
  if (!sqrt_flag.empty()) {
    sqrt_n = ParseList(sqrt_flag);
  } else {
    std::vector<int64_t> def;
    for (int64_t s = 10; s <= 200; s += 10) def.push_back(s);
    sqrt_n = Get<std::vector<int64_t>>(cfg, "sqrt_tokens", def);
  }
  auto rows = memory_curve(sqrt_n, channels, Get<int64_t>(cfg, "time_steps", 1),
                           Get<int64_t>(cfg, "batch", 1), Get<int64_t>(cfg, "heads", 0));
  const std::string csv = MemoryCurveCsv(rows);
  out << csv;
  if (!c.out.empty()) WriteText(OutDir(c, ".") / "memory.csv", csv);
  return kExitOk;
}

McSampler ParseSampler(const std::string& name) {
  if (name == "auto") return McSampler::kAuto;
  if (name == "element") return McSampler::kElement;
  if (name == "hierarchical") return McSampler::kHierarchical;
  if (name == "product") return McSampler::kProduct;
  throw ConfigError("unknown sampler '" + name + "'");
}

int RunMcVerify(const Common& c, std::ostream& out) {
  json cfg = LoadConfig(c.config);
  RejectUnknown(cfg, {"samples", "seed", "threads", "rows", "grid"}, "mc-verify");
  McOptions base;
  base.samples = Get<int64_t>(cfg, "samples", base.samples);
  base.seed = ResolveSeed(c, Get<uint64_t>(cfg, "seed", 0));
  base.threads = Get<int>(cfg, "threads", 1);
  std::vector<std::pair<StatParams, McSampler>> rows;
  if (cfg.contains("rows")) {
    for (const json& r : cfg["rows"]) {
      RejectUnknown(r, {"kind", "head_dim", "tokens", "f_q", "f_k", "f_v", "sampler"}, "mc row");
      StatParams p;
      p.kind = ParseStatKind(Get<std::string>(r, "kind", "qkta"));
      p.head_dim = Get<int64_t>(r, "head_dim", p.head_dim);
      p.tokens = Get<int64_t>(r, "tokens", p.tokens);
      p.f_q = Get<double>(r, "f_q", p.f_q);
      p.f_k = Get<double>(r, "f_k", p.f_k);
      p.f_v = Get<double>(r, "f_v", p.f_v);
      rows.emplace_back(p, ParseSampler(Get<std::string>(r, "sampler", "auto")));
    }
  }
  if (cfg.contains("grid")) {
    const json& g = cfg["grid"];
    RejectUnknown(g, {"kinds", "rates", "head_dim", "tokens"}, "mc grid");
    const auto kinds =
        Get<std::vector<std::string>>(g, "kinds", {"qkta", "qkca", "ssa"});
    const auto rates = Get<std::vector<double>>(g, "rates", {0.1, 0.2, 0.3, 0.4, 0.5, 0.6,
                                                            0.7, 0.8, 0.9});
    StatParams p;
    p.head_dim = Get<int64_t>(g, "head_dim", p.head_dim);
    p.tokens = Get<int64_t>(g, "tokens", p.tokens);
    for (const auto& k : kinds) {
      p.kind = ParseStatKind(k);
      if (p.kind != StatKind::kSsa) {
        for (double f : rates) {
          p.f_q = f;
          rows.emplace_back(p, McSampler::kAuto);
        }
        continue;
      }
      for (double fq : rates)
        for (double fk : rates)
          for (double fv : rates) {
            p.f_q = fq;
            p.f_k = fk;
            p.f_v = fv;
            rows.emplace_back(p, McSampler::kAuto);
          }
    }
  }
  if (rows.empty()) throw ConfigError("mc-verify config needs \"rows\" or \"grid\"");
  std::ostringstream csv;
  csv << "kind,head_dim,tokens,f_q,f_k,f_v,closed_mean,mc_mean,closed_var,mc_var,se_var,pass\n";
  int failures = 0;
  for (const auto& [p, sampler] : rows) {
    McOptions o = base;
    o.sampler = sampler;
    McResult r = mc_verify(p, o);
    failures += !r.pass();
    csv << StatKindName(p.kind) << ',' << p.head_dim << ',' << p.tokens << ',' << p.f_q << ','
        << p.f_k << ',' << p.f_v << ',' << r.closed.expectation << ',' << r.mean << ','
        << r.closed.variance << ',' << r.variance << ',' << r.se_variance << ','
        << (r.pass() ? "PASS" : "FAIL") << '\n';
  }
  out << csv.str() << rows.size() - failures << "/" << rows.size() << " rows pass\n";
  if (!c.out.empty()) WriteText(OutDir(c, ".") / "mc_verify.csv", csv.str());
  return failures == 0 ? kExitOk : kExitRuntime;
}

int RunGenData(const Common& c, std::ostream& out) {
  json cfg = LoadConfig(c.config);
  json spec_json = cfg.contains("dataset") ? cfg["dataset"] : cfg;
  uint64_t seed = 0;
  if (cfg.contains("dataset")) {
    seed = Get<uint64_t>(cfg, "seed", 0);
  } else if (spec_json.contains("seed")) {
    seed = Get<uint64_t>(spec_json, "seed", 0);
    spec_json.erase("seed");
  }
  DatasetSpec spec = DatasetSpec::FromJson(spec_json);
  if (spec.source != DatasetSpec::Source::kSynthetic) {
    throw ConfigError("gen-data produces synthetic datasets only");
  }
  SplitDataset data = generate_synthetic(spec, ResolveSeed(c, seed));
  const fs::path dir = OutDir(c, "data/synthetic");
  WriteIdxImages((dir / "train-images.idx").string(), data.train.images);
  WriteIdxLabels((dir / "train-labels.idx").string(), data.train.labels);
  WriteIdxImages((dir / "test-images.idx").string(), data.test.images);
  WriteIdxLabels((dir / "test-labels.idx").string(), data.test.labels);
  out << "train " << data.train.size() << ", test " << data.test.size() << " samples -> "
      << dir.string() << "\n";
  return kExitOk;
}

}  // namespace

int cli_dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Spiking transformer kernels: training, evaluation and analysis", "qkspike"};
  app.require_subcommand(1);
  Common common;
  std::string checkpoint, mechanism, n_list, sqrt_list;
  int64_t dim = 0, heads = 0, channels = 0;

  auto* train_cmd = app.add_subcommand("train", "Train a model from a run config");
  AddCommon(train_cmd, common, true);
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint");
  AddCommon(eval_cmd, common, false);
  eval_cmd->add_option("--checkpoint", checkpoint, "Checkpoint directory");
  auto* energy_cmd = app.add_subcommand("profile-energy", "Firing-rate profile and energy");
  AddCommon(energy_cmd, common, false);
  energy_cmd->add_option("--checkpoint", checkpoint, "Checkpoint directory");
  auto* attn_cmd = app.add_subcommand("analyze-attention",
                                      "Attention statistics and attention-vector export");
  AddCommon(attn_cmd, common, false);
  attn_cmd->add_option("--checkpoint", checkpoint, "Checkpoint directory");
  auto* cx_cmd = app.add_subcommand("bench-complexity", "Instrumented attention op counts");
  AddCommon(cx_cmd, common, false);
  cx_cmd->add_option("--mechanism", mechanism, "qkta, qkca or ssa");
  cx_cmd->add_option("--n", n_list, "Comma-separated token counts");
  cx_cmd->add_option("--dim", dim, "Embedding dimension D");
  cx_cmd->add_option("--heads", heads, "Number of heads");
  auto* mem_cmd = app.add_subcommand("bench-memory", "Memory model curve as CSV");
  AddCommon(mem_cmd, common, false);
  mem_cmd->add_option("--channels", channels, "Channels C");
  mem_cmd->add_option("--sqrt-n", sqrt_list, "Comma-separated sqrt(N) values");
  auto* mc_cmd = app.add_subcommand("mc-verify", "Monte Carlo check of the closed forms");
  AddCommon(mc_cmd, common, true);
  auto* gen_cmd = app.add_subcommand("gen-data", "Write a synthetic dataset as IDX files");
  AddCommon(gen_cmd, common, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitValidation;
  }

  try {
    if (*train_cmd) return RunTrain(common, out);
    if (*eval_cmd) return RunEval(common, checkpoint, out);
    if (*energy_cmd) return RunProfileEnergy(common, checkpoint, out);
    if (*attn_cmd) return RunAnalyzeAttention(common, checkpoint, out);
    if (*cx_cmd) return RunBenchComplexity(common, mechanism, n_list, dim, heads, out);
    if (*mem_cmd) return RunBenchMemory(common, channels, sqrt_list, out);
    if (*mc_cmd) return RunMcVerify(common, out);
    if (*gen_cmd) return RunGenData(common, out);
  } catch (const ConfigError& e) {
    err << "configuration error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const DimensionError& e) {
    err << "dimension error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitValidation;
}

}  // namespace qkspike
