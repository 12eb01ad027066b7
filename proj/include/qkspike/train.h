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

// Training loop, evaluation and checkpoint directories.

#ifndef QKSPIKE_TRAIN_H_
#define QKSPIKE_TRAIN_H_

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"
#include "qkspike/data.h"
#include "qkspike/model.h"

namespace qkspike {

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct OptimizerConfig {
  std::string name = "adamw";  // "adamw" or "sgd"
  double learning_rate = 1e-3;
  double weight_decay = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double momentum = 0.9;  // sgd only
  bool cosine_schedule = false;

  void Validate() const;
};

struct RunConfig {
  ModelConfig model;
  OptimizerConfig optimizer;
  DatasetSpec dataset;
  int64_t epochs = 20;
  int64_t batch_size = 32;
  uint64_t seed = 0;
  std::string out_dir;

  // Also checks that the dataset matches the model input and class count.
  void Validate() const;
  nlohmann::json ToJson() const;
  static RunConfig FromJson(const nlohmann::json& j);
};

// Decoupled weight decay Adam. Decay applies to tensors of rank >= 2.
class AdamW {
 public:
  AdamW(std::vector<NamedTensor> params, const OptimizerConfig& config);
  void step(double learning_rate);
  void zero_grad();

 private:
  std::vector<NamedTensor> params_;
  OptimizerConfig config_;
  std::vector<std::vector<double>> m_, v_;
  int64_t t_ = 0;
};

struct EpochMetrics {
  int64_t epoch = 0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  double test_acc = 0.0;
  double wall_seconds = 0.0;
};

// Header "epoch,train_loss,train_acc,test_acc,wall_seconds".
std::string MetricsCsv(const std::vector<EpochMetrics>& metrics);

struct EvalResult {
  double accuracy = 0.0;
  double loss = 0.0;
  int64_t samples = 0;
  // confusion[true][predicted]
  std::vector<std::vector<int64_t>> confusion;
};

// Inference-mode top-1 accuracy; restores the model's mode afterwards.
EvalResult evaluate(QKFormer& model, const Dataset& data, int64_t batch_size = 64);

struct TrainResult {
  std::unique_ptr<QKFormer> model;
  std::vector<EpochMetrics> metrics;
  EvalResult final_eval;
};

// Single-threaded and deterministic for a fixed config. Writes a checkpoint
// to config.out_dir when it is non-empty. Throws TrainingError on a
// non-finite loss.
TrainResult train(const RunConfig& config, std::ostream* log = nullptr);
TrainResult train(const RunConfig& config, const SplitDataset& data, std::ostream* log = nullptr);

// <dir>/config.json, <dir>/weights/<name>.bin, <dir>/metrics.csv.
void SaveCheckpoint(const std::string& dir, QKFormer& model, const RunConfig& config,
                    const std::vector<EpochMetrics>& metrics);

struct Checkpoint {
  RunConfig config;
  std::unique_ptr<QKFormer> model;
};

Checkpoint LoadCheckpoint(const std::string& dir);

}  // namespace qkspike

#endif  // QKSPIKE_TRAIN_H_
