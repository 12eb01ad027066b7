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
#include <filesystem>
#include <fstream>
#include <limits>

#include <gtest/gtest.h>

#include "qkspike/data.h"
#include "qkspike/serialize.h"
#include "qkspike/train.h"
#include "test_support.h"

namespace qkspike {
namespace {

namespace fs = std::filesystem;

std::vector<double> Values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

DatasetSpec Synthetic(int64_t classes, int64_t per_class, double noise, int64_t size = 16) {
  DatasetSpec s;
  s.classes = classes;
  s.samples_per_class = per_class;
  s.noise = noise;
  s.image_size = size;
  return s;
}

TEST(Synthetic, NoiselessSetIsSolvedByNearestTemplate) {
  for (int64_t size : {16, 32}) {
    const int64_t classes = 26;
    SplitDataset d = generate_synthetic(Synthetic(classes, 5, 0.0, size), 1);
    std::vector<std::vector<uint8_t>> templates;
    for (int64_t c = 0; c < classes; ++c) templates.push_back(ClassTemplate(c, size));
    const int64_t pixels = size * size;
    for (const Dataset* part : {&d.train, &d.test}) {
      for (int64_t i = 0; i < part->size(); ++i) {
        int64_t best = -1, best_dist = std::numeric_limits<int64_t>::max();
        for (int64_t c = 0; c < classes; ++c) {
          int64_t dist = 0;
          for (int64_t p = 0; p < pixels; ++p)
            dist += part->images[i * pixels + p] != templates[c][p];
          if (dist < best_dist) best_dist = dist, best = c;
        }
        EXPECT_EQ(best, part->labels[i]) << "size " << size << " sample " << i;
        EXPECT_EQ(best_dist, 0);
      }
    }
  }
}

TEST(Synthetic, TemplatesAreDistinct) {
  for (int64_t a = 0; a < 26; ++a)
    for (int64_t b = a + 1; b < 26; ++b) EXPECT_NE(ClassTemplate(a, 16), ClassTemplate(b, 16));
  EXPECT_THROW(ClassTemplate(26, 16), ConfigError);
}

TEST(Synthetic, SameSeedIsByteIdentical) {
  const DatasetSpec spec = Synthetic(10, 20, 0.1);
  SplitDataset a = generate_synthetic(spec, 5), b = generate_synthetic(spec, 5);
  SplitDataset c = generate_synthetic(spec, 6);
  EXPECT_EQ(Values(a.train.images), Values(b.train.images));
  EXPECT_EQ(Values(a.test.images), Values(b.test.images));
  EXPECT_EQ(a.train.labels, b.train.labels);
  EXPECT_EQ(a.test.labels, b.test.labels);
  EXPECT_NE(Values(a.train.images), Values(c.train.images));
}

TEST(Synthetic, ClassesBalancedAndSplit) {
  SplitDataset d = generate_synthetic(Synthetic(7, 10, 0.2), 2);
  EXPECT_EQ(d.train.size(), 56);
  EXPECT_EQ(d.test.size(), 14);
  EXPECT_EQ(d.train.images.shape(), (Shape{56, 1, 16, 16}));
  std::vector<int> train(7, 0), test(7, 0);
  for (int l : d.train.labels) ++train[l];
  for (int l : d.test.labels) ++test[l];
  for (int c = 0; c < 7; ++c) {
    EXPECT_EQ(train[c], 8);
    EXPECT_EQ(test[c], 2);
  }
  for (double v : d.train.images.data()) EXPECT_TRUE(v == 0.0 || v == 1.0);
  // Noise flips roughly the requested fraction of pixels.
  int64_t flips = 0;
  for (int64_t i = 0; i < d.train.size(); ++i) {
    auto t = ClassTemplate(d.train.labels[i], 16);
    for (int64_t p = 0; p < 256; ++p) flips += d.train.images[i * 256 + p] != t[p];
  }
  EXPECT_NEAR(static_cast<double>(flips) / (56.0 * 256.0), 0.2, 0.02);
}

TEST(Synthetic, InvalidSpecs) {
  EXPECT_THROW(generate_synthetic(Synthetic(10, 5, 0.1, 20), 0), ConfigError);
  EXPECT_THROW(generate_synthetic(Synthetic(27, 5, 0.1), 0), ConfigError);
  EXPECT_THROW(generate_synthetic(Synthetic(10, 5, 0.9), 0), ConfigError);
  nlohmann::json j = Synthetic(10, 5, 0.1).ToJson();
  EXPECT_EQ(DatasetSpec::FromJson(j).ToJson(), j);
  j["augment"] = true;
  EXPECT_THROW(DatasetSpec::FromJson(j), ConfigError);
}

TEST(Idx, RoundTripAndErrors) {
  const fs::path dir = qktest::TempDir("idx");
  SplitDataset d = generate_synthetic(Synthetic(4, 5, 0.1), 3);
  const std::string images = (dir / "img.idx").string(), labels = (dir / "lbl.idx").string();
  WriteIdxImages(images, d.train.images);
  WriteIdxLabels(labels, d.train.labels);
  EXPECT_EQ(fs::file_size(images), 16u + 16 * 256);
  EXPECT_EQ(fs::file_size(labels), 8u + 16);
  Tensor back = ReadIdxImages(images);
  EXPECT_EQ(back.shape(), (Shape{16, 16, 16}));
  EXPECT_EQ(Values(back), Values(d.train.images));
  EXPECT_EQ(ReadIdxLabels(labels), d.train.labels);

  EXPECT_THROW(ReadIdxImages(labels), DataError);
  EXPECT_THROW(ReadIdxImages((dir / "missing").string()), DataError);
  std::string bytes = qktest::ReadFile(images);
  std::ofstream((dir / "short.idx").string(), std::ios::binary) << bytes.substr(0, 100);
  EXPECT_THROW(ReadIdxImages((dir / "short.idx").string()), DataError);

  // An IDX-backed spec loads the same samples.
  WriteIdxImages((dir / "test_img.idx").string(), d.test.images);
  WriteIdxLabels((dir / "test_lbl.idx").string(), d.test.labels);
  DatasetSpec spec;
  spec.source = DatasetSpec::Source::kIdx;
  spec.classes = 4;
  spec.train_images = images;
  spec.train_labels = labels;
  spec.test_images = (dir / "test_img.idx").string();
  spec.test_labels = (dir / "test_lbl.idx").string();
  SplitDataset loaded = load_dataset(spec, 0);
  EXPECT_EQ(Values(loaded.train.images), Values(d.train.images));
  EXPECT_EQ(loaded.test.labels, d.test.labels);
  fs::remove_all(dir);
}

RunConfig TinyRun() {
  RunConfig r;
  r.model.image_height = 16;
  r.model.image_width = 16;
  r.model.in_channels = 1;
  r.model.channels = 8;
  r.model.blocks = {1, 1, 1};
  r.model.time_steps = 2;
  r.model.num_classes = 2;
  r.dataset = Synthetic(2, 5, 0.1);
  r.epochs = 1;
  r.batch_size = 4;
  r.seed = 11;
  return r;
}

TEST(Train, OneEpochSmokeOnTenSamples) {
  RunConfig r = TinyRun();
  TrainResult t = train(r);
  ASSERT_EQ(t.metrics.size(), 1u);
  EXPECT_EQ(t.metrics[0].epoch, 1);
  EXPECT_TRUE(std::isfinite(t.metrics[0].train_loss));
  EXPECT_GE(t.metrics[0].train_acc, 0.0);
  EXPECT_LE(t.metrics[0].train_acc, 1.0);
  EXPECT_EQ(t.final_eval.samples, 2);
  const std::string csv = MetricsCsv(t.metrics);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "epoch,train_loss,train_acc,test_acc,wall_seconds");
}

TEST(Train, DivergenceAborts) {
  RunConfig r = TinyRun();
  r.epochs = 3;
  r.optimizer.learning_rate = 1e308;
  EXPECT_THROW(train(r), TrainingError);
}

TEST(Train, LearnsTheNoiselessTask) {
  RunConfig r = TinyRun();
  r.dataset = Synthetic(4, 20, 0.0);
  r.model.num_classes = 4;
  r.model.channels = 32;
  r.epochs = 10;
  r.batch_size = 8;
  r.optimizer.learning_rate = 3e-3;
  TrainResult t = train(r);
  EXPECT_LT(t.metrics.back().train_loss, t.metrics.front().train_loss);
  EXPECT_GE(t.final_eval.accuracy, 0.9);
}

TEST(Train, SameSeedGivesIdenticalMetricsAndWeights) {
  RunConfig r = TinyRun();
  r.epochs = 2;
  TrainResult a = train(r), b = train(r);
  ASSERT_EQ(a.metrics.size(), b.metrics.size());
  for (size_t i = 0; i < a.metrics.size(); ++i) {
    EXPECT_EQ(a.metrics[i].train_loss, b.metrics[i].train_loss);
    EXPECT_EQ(a.metrics[i].train_acc, b.metrics[i].train_acc);
    EXPECT_EQ(a.metrics[i].test_acc, b.metrics[i].test_acc);
  }
  auto pa = a.model->parameters(), pb = b.model->parameters();
  for (size_t i = 0; i < pa.size(); ++i)
    EXPECT_EQ(Values(*pa[i].tensor), Values(*pb[i].tensor)) << pa[i].name;
  r.seed = 12;
  TrainResult c = train(r);
  EXPECT_NE(Values(*c.model->parameters()[0].tensor), Values(*pa[0].tensor));
}

TEST(Train, ConfigValidation) {
  RunConfig r = TinyRun();
  r.dataset.classes = 3;
  EXPECT_THROW(r.Validate(), ConfigError);
  r = TinyRun();
  r.dataset.image_size = 32;
  EXPECT_THROW(r.Validate(), ConfigError);
  r = TinyRun();
  r.optimizer.name = "lbfgs";
  EXPECT_THROW(r.Validate(), ConfigError);
  r = TinyRun();
  r.batch_size = 0;
  EXPECT_THROW(r.Validate(), ConfigError);
  nlohmann::json j = TinyRun().ToJson();
  EXPECT_EQ(RunConfig::FromJson(j).ToJson(), j);
  j["warmup"] = 5;
  EXPECT_THROW(RunConfig::FromJson(j), ConfigError);
}

TEST(Optimizer, FirstAdamWStepByHand) {
  OptimizerConfig oc;
  oc.learning_rate = 0.1;
  oc.weight_decay = 0.01;
  Tensor matrix({1, 1}, {1.0}), vector({1}, {1.0});
  std::vector<NamedTensor> params = {{"m", &matrix}, {"v", &vector}};
  for (auto& p : params) p.tensor->set_requires_grad(true);
  {
    Tape tape;
    tape.backward(add(scale(sum(matrix), 2.0), scale(sum(vector), 2.0)));
  }
  AdamW opt(params, oc);
  opt.step(0.1);
  // Bias-corrected first step moves by lr * g / |g|; decay hits matrices only.
  EXPECT_NEAR(matrix[0], 1.0 * (1 - 0.1 * 0.01) - 0.1, 1e-9);
  EXPECT_NEAR(vector[0], 1.0 - 0.1, 1e-9);
}

TEST(Evaluate, DeterministicAndConsistent) {
  RunConfig r = TinyRun();
  r.model.num_classes = 10;
  r.model.channels = 16;
  r.dataset = Synthetic(10, 100, 0.1);
  SplitDataset d = load_dataset(r.dataset, 0);
  QKFormer model(r.model, 3);
  EvalResult a = evaluate(model, d.test, 64), b = evaluate(model, d.test, 17);
  EXPECT_EQ(a.accuracy, b.accuracy);
  EXPECT_EQ(a.confusion, b.confusion);
  EXPECT_NEAR(a.loss, b.loss, 1e-12);
  ASSERT_EQ(a.samples, 200);
  for (int c = 0; c < 10; ++c) {
    int64_t row = 0;
    for (int64_t v : a.confusion[c]) row += v;
    EXPECT_EQ(row, 20) << c;
  }
  // Untrained: within a 3.3-sigma binomial band around chance.
  const double sigma = std::sqrt(0.1 * 0.9 / 200.0);
  EXPECT_LT(std::abs(a.accuracy - 0.1), 3.3 * sigma);
  EXPECT_FALSE(model.training());

  SplitDataset wrong = generate_synthetic(Synthetic(10, 5, 0.1, 32), 0);
  EXPECT_THROW(evaluate(model, wrong.test), ConfigError);
}

TEST(Checkpoint, RoundTripAndErrors) {
  const fs::path dir = qktest::TempDir("ckpt");
  RunConfig r = TinyRun();
  r.out_dir = (dir / "run").string();
  TrainResult t = train(r);
  ASSERT_TRUE(fs::exists(dir / "run" / "config.json"));
  ASSERT_TRUE(fs::exists(dir / "run" / "metrics.csv"));
  ASSERT_TRUE(fs::is_directory(dir / "run" / "weights"));

  Checkpoint c = LoadCheckpoint(r.out_dir);
  EXPECT_EQ(c.config.ToJson(), r.ToJson());
  auto pa = t.model->parameters(), pb = c.model->parameters();
  ASSERT_EQ(pa.size(), pb.size());
  for (size_t i = 0; i < pa.size(); ++i) EXPECT_EQ(Values(*pa[i].tensor), Values(*pb[i].tensor));
  auto ba = t.model->buffers(), bb = c.model->buffers();
  for (size_t i = 0; i < ba.size(); ++i) EXPECT_EQ(*ba[i].values, *bb[i].values) << ba[i].name;
  SplitDataset d = load_dataset(r.dataset, r.seed);
  EXPECT_EQ(evaluate(*c.model, d.test).accuracy, t.final_eval.accuracy);

  // A weight with the wrong shape is rejected.
  const fs::path weight = dir / "run" / "weights" / (pa[0].name + ".bin");
  SaveTensor(weight, Tensor({3}));
  EXPECT_THROW(LoadCheckpoint(r.out_dir), SerializationError);
  EXPECT_THROW(LoadCheckpoint((dir / "absent").string()), ConfigError);
  fs::remove_all(dir);
}

}  // namespace
}  // namespace qkspike
