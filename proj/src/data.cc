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

#include "qkspike/data.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include "qkspike/layers.h"
#include "qkspike/ops.h"

namespace qkspike {

namespace {

using nlohmann::json;

bool Pattern(int64_t cls, double u, double v) {
  auto near = [](double a, double b, double w) { return std::abs(a - b) < w; };
  auto disk = [](double u, double v, double cu, double cv, double r) {
    return (u - cu) * (u - cu) + (v - cv) * (v - cv) < r * r;
  };
  const double r = std::hypot(u - 0.5, v - 0.5);
  switch (cls) {
    case 0: return near(v, 0.5, 0.15);
    case 1: return near(u, 0.5, 0.15);
    case 2: return near(u, v, 0.12);
    case 3: return near(u + v, 1.0, 0.12);
    case 4: return r < 0.25;
    case 5: return r > 0.25 && r < 0.42;
    case 6: return near(v, 0.5, 0.1) || near(u, 0.5, 0.1);
    case 7: return near(u, v, 0.08) || near(u + v, 1.0, 0.08);
    case 8: return std::min({u, v, 1.0 - u, 1.0 - v}) < 0.12;
    case 9: return (static_cast<int>(4 * u) + static_cast<int>(4 * v)) % 2 == 0;
    case 10: return v < 0.5;
    case 11: return u < 0.5;
    case 12: return near(v, 0.25, 0.1) || near(v, 0.75, 0.1);
    case 13: return near(u, 0.25, 0.1) || near(u, 0.75, 0.1);
    case 14: return disk(u, v, 0.27, 0.27, 0.2);
    case 15: return disk(u, v, 0.73, 0.73, 0.2);
    case 16: return disk(u, v, 0.73, 0.27, 0.2);
    case 17: return disk(u, v, 0.27, 0.73, 0.2);
    case 18:
      return disk(u, v, 0.2, 0.2, 0.15) || disk(u, v, 0.8, 0.2, 0.15) ||
             disk(u, v, 0.2, 0.8, 0.15) || disk(u, v, 0.8, 0.8, 0.15);
    case 19: return static_cast<int>(8 * v) % 2 == 0;
    case 20: return static_cast<int>(8 * u) % 2 == 0;
    case 21: return u < v;
    case 22: return v < 0.22 || near(u, 0.5, 0.1);
    case 23: return u < 0.22 || v > 0.78;
    case 24: return near(u, 0.5, 0.14) && near(v, 0.5, 0.14);
    case 25: return (static_cast<int>(2 * u) + static_cast<int>(2 * v)) % 2 == 0;
  }
  return false;
}

void WriteBigEndian32(std::ostream& out, uint32_t v) {
  const char bytes[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16),
                         static_cast<char>(v >> 8), static_cast<char>(v)};
  out.write(bytes, 4);
}

uint32_t ReadBigEndian32(std::istream& in, const std::string& path) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw DataError(path + ": truncated IDX header");
  return (uint32_t{b[0]} << 24) | (uint32_t{b[1]} << 16) | (uint32_t{b[2]} << 8) | b[3];
}

std::ifstream OpenIn(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "'");
  return in;
}

std::ofstream OpenOut(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write '" + path + "'");
  return out;
}

}  // namespace

void DatasetSpec::Validate() const {
  if (image_size < 16 || image_size % 16 != 0) {
    throw ConfigError("dataset image_size must be a positive multiple of 16, got " +
                      std::to_string(image_size));
  }
  if (source == Source::kSynthetic) {
    if (classes < 2 || classes > 26) throw ConfigError("synthetic classes must be in [2, 26]");
    if (samples_per_class < 2) throw ConfigError("samples_per_class must be >= 2");
    if (!(noise >= 0.0 && noise <= 0.5)) throw ConfigError("noise must be in [0, 0.5]");
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
      throw ConfigError("train_fraction must be in (0, 1)");
    }
  } else if (train_images.empty() || train_labels.empty() || test_images.empty() ||
             test_labels.empty()) {
    throw ConfigError("idx dataset needs train/test image and label paths");
  }
}

json DatasetSpec::ToJson() const {
  json j = {{"source", source == Source::kSynthetic ? "synthetic" : "idx"},
            {"image_size", image_size},
            {"classes", classes},
            {"samples_per_class", samples_per_class},
            {"noise", noise},
            {"train_fraction", train_fraction}};
  if (source == Source::kIdx) {
    j["train_images"] = train_images;
    j["train_labels"] = train_labels;
    j["test_images"] = test_images;
    j["test_labels"] = test_labels;
  }
  return j;
}

DatasetSpec DatasetSpec::FromJson(const json& j) {
  if (!j.is_object()) throw ConfigError("dataset must be a JSON object");
  static const char* kKeys[] = {"source", "image_size", "classes", "samples_per_class",
                                "noise", "train_fraction", "train_images", "train_labels",
                                "test_images", "test_labels"};
  for (const auto& [key, value] : j.items()) {
    if (std::find(std::begin(kKeys), std::end(kKeys), key) == std::end(kKeys)) {
      throw ConfigError("unknown key '" + key + "' in dataset");
    }
  }
  DatasetSpec s;
  try {
    const std::string source = j.value("source", std::string("synthetic"));
    if (source == "synthetic") s.source = Source::kSynthetic;
    else if (source == "idx") s.source = Source::kIdx;
    else throw ConfigError("dataset source must be 'synthetic' or 'idx'");
    s.image_size = j.value("image_size", s.image_size);
    s.classes = j.value("classes", s.classes);
    s.samples_per_class = j.value("samples_per_class", s.samples_per_class);
    s.noise = j.value("noise", s.noise);
    s.train_fraction = j.value("train_fraction", s.train_fraction);
    s.train_images = j.value("train_images", std::string());
    s.train_labels = j.value("train_labels", std::string());
    s.test_images = j.value("test_images", std::string());
    s.test_labels = j.value("test_labels", std::string());
  } catch (const json::exception& e) {
    throw ConfigError(std::string("dataset: ") + e.what());
  }
  s.Validate();
  return s;
}

Dataset Dataset::Select(const std::vector<int64_t>& rows) const {
  const int64_t row = images.numel() / std::max<int64_t>(1, images.dim(0));
  Shape shape = images.shape();
  shape[0] = static_cast<int64_t>(rows.size());
  std::vector<double> data;
  data.reserve(rows.size() * row);
  std::vector<int> out_labels;
  auto src = images.data();
  for (int64_t r : rows) {
    data.insert(data.end(), src.begin() + r * row, src.begin() + (r + 1) * row);
    out_labels.push_back(labels[r]);
  }
  return {Tensor(std::move(shape), std::move(data)), std::move(out_labels), classes};
}

std::vector<uint8_t> ClassTemplate(int64_t cls, int64_t size) {
  if (cls < 0 || cls >= 26) throw ConfigError("template class must be in [0, 26)");
  std::vector<uint8_t> t(static_cast<size_t>(size * size));
  for (int64_t y = 0; y < size; ++y)
    for (int64_t x = 0; x < size; ++x) {
      const double u = (x + 0.5) / size, v = (y + 0.5) / size;
      t[y * size + x] = Pattern(cls, u, v) ? 1 : 0;
    }
  return t;
}

SplitDataset generate_synthetic(const DatasetSpec& spec, uint64_t seed) {
  spec.Validate();
  if (spec.source != DatasetSpec::Source::kSynthetic) {
    throw ConfigError("generate_synthetic needs a synthetic dataset spec");
  }
  const int64_t s = spec.image_size, pixels = s * s;
  const int64_t n_train = std::clamp<int64_t>(
      std::llround(spec.train_fraction * spec.samples_per_class), 1, spec.samples_per_class - 1);
  Rng rng(seed);
  std::bernoulli_distribution flip(spec.noise);
  std::vector<double> train, test;
  std::vector<int> train_labels, test_labels;
  for (int64_t c = 0; c < spec.classes; ++c) {
    const auto tmpl = ClassTemplate(c, s);
    for (int64_t i = 0; i < spec.samples_per_class; ++i) {
      auto& dst = i < n_train ? train : test;
      for (int64_t p = 0; p < pixels; ++p) {
        const bool on = tmpl[p] != 0;
        dst.push_back((flip(rng) ? !on : on) ? 1.0 : 0.0);
      }
      (i < n_train ? train_labels : test_labels).push_back(static_cast<int>(c));
    }
  }
  auto make = [&](std::vector<double>& data, std::vector<int>& labels) {
    const int64_t count = static_cast<int64_t>(labels.size());
    Dataset d{Tensor({count, 1, s, s}, std::move(data)), std::move(labels), spec.classes};
    std::vector<int64_t> order(count);
    for (int64_t i = 0; i < count; ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    return d.Select(order);
  };
  SplitDataset out;
  out.train = make(train, train_labels);
  out.test = make(test, test_labels);
  return out;
}

SplitDataset load_dataset(const DatasetSpec& spec, uint64_t seed) {
  spec.Validate();
  if (spec.source == DatasetSpec::Source::kSynthetic) return generate_synthetic(spec, seed);
  auto load = [&](const std::string& images, const std::string& labels) {
    Tensor raw = ReadIdxImages(images);
    std::vector<int> y = ReadIdxLabels(labels);
    if (raw.dim(0) != static_cast<int64_t>(y.size())) {
      throw DataError(images + ": " + std::to_string(raw.dim(0)) + " images but " +
                      std::to_string(y.size()) + " labels");
    }
    if (raw.dim(1) != spec.image_size || raw.dim(2) != spec.image_size) {
      throw ConfigError(images + ": images are " + std::to_string(raw.dim(1)) + "x" +
                        std::to_string(raw.dim(2)) + ", dataset spec says " +
                        std::to_string(spec.image_size));
    }
    for (int label : y) {
      if (label < 0 || label >= spec.classes) {
        throw DataError(labels + ": label " + std::to_string(label) + " outside [0, classes)");
      }
    }
    return Dataset{reshape(raw, {raw.dim(0), 1, raw.dim(1), raw.dim(2)}), std::move(y),
                   spec.classes};
  };
  return {load(spec.train_images, spec.train_labels), load(spec.test_images, spec.test_labels)};
}

void WriteIdxImages(const std::string& path, const Tensor& images) {
  const int r = images.rank();
  if (r != 3 && r != 4) throw DimensionError("IDX images must be [S, H, W] or [S, 1, H, W]");
  if (r == 4 && images.dim(1) != 1) throw DimensionError("IDX images must be single-channel");
  std::ofstream out = OpenOut(path);
  WriteBigEndian32(out, 0x00000803);
  WriteBigEndian32(out, static_cast<uint32_t>(images.dim(0)));
  WriteBigEndian32(out, static_cast<uint32_t>(images.dim(-2)));
  WriteBigEndian32(out, static_cast<uint32_t>(images.dim(-1)));
  std::vector<char> bytes(static_cast<size_t>(images.numel()));
  auto d = images.data();
  for (size_t i = 0; i < bytes.size(); ++i) {
    bytes[i] = static_cast<char>(std::lround(std::clamp(d[i], 0.0, 1.0) * 255.0));
  }
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("failed writing '" + path + "'");
}

void WriteIdxLabels(const std::string& path, const std::vector<int>& labels) {
  std::ofstream out = OpenOut(path);
  WriteBigEndian32(out, 0x00000801);
  WriteBigEndian32(out, static_cast<uint32_t>(labels.size()));
  for (int label : labels) {
    if (label < 0 || label > 255) throw DataError("IDX labels must fit in a byte");
    out.put(static_cast<char>(label));
  }
  if (!out) throw DataError("failed writing '" + path + "'");
}

Tensor ReadIdxImages(const std::string& path) {
  std::ifstream in = OpenIn(path);
  if (ReadBigEndian32(in, path) != 0x00000803) throw DataError(path + ": not an IDX image file");
  const int64_t n = ReadBigEndian32(in, path);
  const int64_t h = ReadBigEndian32(in, path);
  const int64_t w = ReadBigEndian32(in, path);
  std::vector<unsigned char> bytes(static_cast<size_t>(n * h * w));
  if (!in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()))) {
    throw DataError(path + ": truncated image data");
  }
  std::vector<double> data(bytes.size());
  for (size_t i = 0; i < bytes.size(); ++i) data[i] = bytes[i] / 255.0;
  return Tensor({n, h, w}, std::move(data));
}

std::vector<int> ReadIdxLabels(const std::string& path) {
  std::ifstream in = OpenIn(path);
  if (ReadBigEndian32(in, path) != 0x00000801) throw DataError(path + ": not an IDX label file");
  const int64_t n = ReadBigEndian32(in, path);
  std::vector<unsigned char> bytes(static_cast<size_t>(n));
  if (!in.read(reinterpret_cast<char*>(bytes.data()), n)) {
    throw DataError(path + ": truncated label data");
  }
  return std::vector<int>(bytes.begin(), bytes.end());
}

}  // namespace qkspike
