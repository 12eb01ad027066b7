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

#include "qkspike/train.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <ostream>
#include <sstream>

#include "qkspike/ops.h"
#include "qkspike/serialize.h"

namespace qkspike {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

constexpr uint64_t kDataStream = 0x5851f42d4c957f2dULL;
constexpr uint64_t kShuffleStream = 0x14057b7ef767814fULL;

std::string Fixed(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::vector<int64_t> Range(int64_t begin, int64_t end) {
  std::vector<int64_t> r;
  for (int64_t i = begin; i < end; ++i) r.push_back(i);
  return r;
}

int Argmax(std::span<const double> row) {
  return static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
}

std::string ReadFile(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void WriteFile(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
}

}  // namespace

void OptimizerConfig::Validate() const {
  if (name != "adamw" && name != "sgd") throw ConfigError("optimizer must be 'adamw' or 'sgd'");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("betas must be in [0, 1)");
  }
  if (!(eps > 0.0)) throw ConfigError("eps must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must be in [0, 1)");
}

void RunConfig::Validate() const {
  model.Validate();
  optimizer.Validate();
  dataset.Validate();
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (dataset.image_size != model.image_height || dataset.image_size != model.image_width) {
    throw ConfigError("dataset image_size " + std::to_string(dataset.image_size) +
                      " does not match model input " + std::to_string(model.image_height) +
                      "x" + std::to_string(model.image_width));
  }
  if (model.in_channels != 1) throw ConfigError("datasets are single-channel; set in_channels 1");
  if (dataset.classes != model.num_classes) {
    throw ConfigError("dataset has " + std::to_string(dataset.classes) +
                      " classes but the model predicts " + std::to_string(model.num_classes));
  }
}

json RunConfig::ToJson() const {
  return {{"model", model.ToJson()},
          {"optimizer",
           {{"name", optimizer.name},
            {"learning_rate", optimizer.learning_rate},
            {"weight_decay", optimizer.weight_decay},
            {"beta1", optimizer.beta1},
            {"beta2", optimizer.beta2},
            {"eps", optimizer.eps},
            {"momentum", optimizer.momentum},
            {"cosine_schedule", optimizer.cosine_schedule}}},
          {"dataset", dataset.ToJson()},
          {"epochs", epochs},
          {"batch_size", batch_size},
          {"seed", seed}};
}

RunConfig RunConfig::FromJson(const json& j) {
  if (!j.is_object()) throw ConfigError("run config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (key != "model" && key != "optimizer" && key != "dataset" && key != "epochs" &&
        key != "batch_size" && key != "seed" && key != "out_dir") {
      throw ConfigError("unknown key '" + key + "' in run config");
    }
  }
  RunConfig c;
  try {
    if (j.contains("model")) c.model = ModelConfig::FromJson(j["model"]);
    if (j.contains("dataset")) c.dataset = DatasetSpec::FromJson(j["dataset"]);
    if (j.contains("optimizer")) {
      const json& o = j["optimizer"];
      if (!o.is_object()) throw ConfigError("optimizer must be a JSON object");
      for (const auto& [key, value] : o.items()) {
        static const char* kKeys[] = {"name",  "learning_rate", "weight_decay", "beta1",
                                      "beta2", "eps",           "momentum",     "cosine_schedule"};
        if (std::find(std::begin(kKeys), std::end(kKeys), key) == std::end(kKeys)) {
          throw ConfigError("unknown key '" + key + "' in optimizer");
        }
      }
      OptimizerConfig& p = c.optimizer;
      p.name = o.value("name", p.name);
      p.learning_rate = o.value("learning_rate", p.learning_rate);
      p.weight_decay = o.value("weight_decay", p.weight_decay);
      p.beta1 = o.value("beta1", p.beta1);
      p.beta2 = o.value("beta2", p.beta2);
      p.eps = o.value("eps", p.eps);
      p.momentum = o.value("momentum", p.momentum);
      p.cosine_schedule = o.value("cosine_schedule", p.cosine_schedule);
    }
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.seed = j.value("seed", c.seed);
    c.out_dir = j.value("out_dir", c.out_dir);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("run config: ") + e.what());
  }
  c.Validate();
  return c;
}

AdamW::AdamW(std::vector<NamedTensor> params, const OptimizerConfig& config)
    : params_(std::move(params)), config_(config) {
  config_.Validate();
  for (const auto& p : params_) {
    m_.emplace_back(p.tensor->numel(), 0.0);
    v_.emplace_back(config_.name == "adamw" ? p.tensor->numel() : 0, 0.0);
  }
}

void AdamW::step(double lr) {
  ++t_;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = *params_[i].tensor;
    if (!p.has_grad()) continue;
    auto g = p.grad();
    auto w = p.mutable_data();
    const bool decay = p.rank() >= 2 && config_.weight_decay > 0.0;
    if (config_.name == "sgd") {
      for (size_t j = 0; j < w.size(); ++j) {
        const double grad = g[j] + (decay ? config_.weight_decay * w[j] : 0.0);
        m_[i][j] = config_.momentum * m_[i][j] + grad;
        w[j] -= lr * m_[i][j];
      }
      continue;
    }
    for (size_t j = 0; j < w.size(); ++j) {
      if (decay) w[j] -= lr * config_.weight_decay * w[j];
      m_[i][j] = config_.beta1 * m_[i][j] + (1.0 - config_.beta1) * g[j];
      v_[i][j] = config_.beta2 * v_[i][j] + (1.0 - config_.beta2) * g[j] * g[j];
      w[j] -= lr * (m_[i][j] / c1) / (std::sqrt(v_[i][j] / c2) + config_.eps);
    }
  }
}

void AdamW::zero_grad() {
  for (auto& p : params_) p.tensor->zero_grad();
}

std::string MetricsCsv(const std::vector<EpochMetrics>& metrics) {
  std::ostringstream os;
  os << "epoch,train_loss,train_acc,test_acc,wall_seconds\n";
  for (const auto& m : metrics) {
    os << m.epoch << ',' << Fixed(m.train_loss) << ',' << Fixed(m.train_acc) << ','
       << Fixed(m.test_acc) << ',' << Fixed(m.wall_seconds) << '\n';
  }
  return os.str();
}

EvalResult evaluate(QKFormer& model, const Dataset& data, int64_t batch_size) {
  const ModelConfig& mc = model.config();
  if (data.images.rank() != 4 || data.images.dim(1) != mc.in_channels ||
      data.images.dim(2) != mc.image_height || data.images.dim(3) != mc.image_width) {
    throw ConfigError("evaluate: dataset images " + ShapeToString(data.images.shape()) +
                      " do not match the model input");
  }
  if (data.classes > mc.num_classes) {
    throw ConfigError("evaluate: dataset has more classes than the model predicts");
  }
  if (batch_size < 1) throw ConfigError("evaluate: batch_size must be >= 1");
  EvalResult r;
  r.samples = data.size();
  r.confusion.assign(mc.num_classes, std::vector<int64_t>(mc.num_classes, 0));
  NoGradGuard no_grad;
  const bool was_training = model.training();
  model.set_training(false);
  int64_t correct = 0;
  double loss_sum = 0.0;
  for (int64_t begin = 0; begin < r.samples; begin += batch_size) {
    const int64_t end = std::min(r.samples, begin + batch_size);
    Dataset batch = data.Select(Range(begin, end));
    Tensor logits = model.forward(batch.images);
    loss_sum += cross_entropy(logits, batch.labels).item() * static_cast<double>(end - begin);
    const int64_t classes = logits.dim(1);
    for (int64_t i = 0; i < end - begin; ++i) {
      const int pred = Argmax(logits.data().subspan(i * classes, classes));
      ++r.confusion[batch.labels[i]][pred];
      correct += pred == batch.labels[i];
    }
  }
  model.set_training(was_training);
  if (r.samples > 0) {
    r.accuracy = static_cast<double>(correct) / static_cast<double>(r.samples);
    r.loss = loss_sum / static_cast<double>(r.samples);
  }
  return r;
}

TrainResult train(const RunConfig& config, std::ostream* log) {
  config.Validate();
  return train(config, load_dataset(config.dataset, config.seed ^ kDataStream), log);
}

TrainResult train(const RunConfig& config, const SplitDataset& data, std::ostream* log) {
  config.Validate();
  if (data.train.size() == 0) throw ConfigError("training split is empty");
  TrainResult result;
  result.model = build(config.model, config.seed);
  QKFormer& model = *result.model;
  AdamW optimizer(model.parameters(), config.optimizer);
  Rng shuffle_rng(config.seed ^ kShuffleStream);
  const auto start = std::chrono::steady_clock::now();
  std::vector<int64_t> order = Range(0, data.train.size());

  for (int64_t epoch = 1; epoch <= config.epochs; ++epoch) {
    double lr = config.optimizer.learning_rate;
    if (config.optimizer.cosine_schedule) {
      lr *= 0.5 * (1.0 + std::cos(std::numbers::pi * static_cast<double>(epoch - 1) /
                                  static_cast<double>(config.epochs)));
    }
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    model.set_training(true);
    double loss_sum = 0.0;
    int64_t correct = 0;
    for (size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      const size_t end = std::min(order.size(), begin + static_cast<size_t>(config.batch_size));
      Dataset batch = data.train.Select({order.begin() + begin, order.begin() + end});
      Tape tape;
      Tensor logits = model.forward(batch.images);
      Tensor loss = cross_entropy(logits, batch.labels);
      if (!std::isfinite(loss.item())) {
        throw TrainingError("loss became non-finite at epoch " + std::to_string(epoch) +
                            ", batch starting at sample " + std::to_string(begin) +
                            "; lower the learning rate");
      }
      optimizer.zero_grad();
      tape.backward(loss);
      optimizer.step(lr);
      const int64_t n = static_cast<int64_t>(end - begin);
      loss_sum += loss.item() * static_cast<double>(n);
      for (int64_t i = 0; i < n; ++i) {
        correct += Argmax(logits.data().subspan(i * logits.dim(1), logits.dim(1))) ==
                   batch.labels[i];
      }
    }
    EpochMetrics m;
    m.epoch = epoch;
    m.train_loss = loss_sum / static_cast<double>(order.size());
    m.train_acc = static_cast<double>(correct) / static_cast<double>(order.size());
    m.test_acc = data.test.size() > 0 ? evaluate(model, data.test).accuracy : 0.0;
    m.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.metrics.push_back(m);
    if (log) {
      *log << "epoch " << m.epoch << "  loss " << Fixed(m.train_loss) << "  train_acc "
           << Fixed(m.train_acc) << "  test_acc " << Fixed(m.test_acc) << "  ("
           << Fixed(m.wall_seconds) << " s)\n";
    }
  }
  model.set_training(false);
  if (data.test.size() > 0) result.final_eval = evaluate(model, data.test);
  if (!config.out_dir.empty()) SaveCheckpoint(config.out_dir, model, config, result.metrics);
  return result;
}

void SaveCheckpoint(const std::string& dir, QKFormer& model, const RunConfig& config,
                    const std::vector<EpochMetrics>& metrics) {
  const fs::path root(dir);
  fs::create_directories(root / "weights");
  WriteFile(root / "config.json", config.ToJson().dump(2) + "\n");
  for (const auto& p : model.parameters()) SaveTensor(root / "weights" / (p.name + ".bin"), *p.tensor);
  for (const auto& b : model.buffers()) {
    SaveTensor(root / "weights" / (b.name + ".bin"),
               Tensor({static_cast<int64_t>(b.values->size())}, *b.values));
  }
  WriteFile(root / "metrics.csv", MetricsCsv(metrics));
}

Checkpoint LoadCheckpoint(const std::string& dir) {
  const fs::path root(dir);
  if (!fs::is_directory(root)) throw ConfigError("checkpoint directory '" + dir + "' not found");
  json j;
  try {
    j = json::parse(ReadFile(root / "config.json"));
  } catch (const json::exception& e) {
    throw ConfigError("checkpoint config.json: " + std::string(e.what()));
  }
  Checkpoint c;
  c.config = RunConfig::FromJson(j);
  c.model = build(c.config.model, c.config.seed);
  for (auto& p : c.model->parameters()) {
    Tensor t = LoadTensor(root / "weights" / (p.name + ".bin"));
    if (t.shape() != p.tensor->shape()) {
      throw SerializationError("weight '" + p.name + "' has shape " + ShapeToString(t.shape()) +
                               ", model expects " + ShapeToString(p.tensor->shape()));
    }
    std::copy(t.data().begin(), t.data().end(), p.tensor->mutable_data().begin());
  }
  for (auto& b : c.model->buffers()) {
    Tensor t = LoadTensor(root / "weights" / (b.name + ".bin"));
    if (t.numel() != static_cast<int64_t>(b.values->size())) {
      throw SerializationError("buffer '" + b.name + "' has the wrong length");
    }
    std::copy(t.data().begin(), t.data().end(), b.values->begin());
  }
  return c;
}

}  // namespace qkspike
