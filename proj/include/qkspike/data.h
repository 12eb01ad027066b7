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

// Datasets: deterministic synthetic image classes and IDX file I/O.

#ifndef QKSPIKE_DATA_H_
#define QKSPIKE_DATA_H_

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "qkspike/tensor.h"

namespace qkspike {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DatasetSpec {
  enum class Source { kSynthetic, kIdx };
  Source source = Source::kSynthetic;
  int64_t image_size = 16;
  int64_t classes = 10;
  int64_t samples_per_class = 50;
  // Probability of flipping each pixel of the class template.
  double noise = 0.1;
  double train_fraction = 0.8;
  // IDX sources: images (ubyte, [S, H, W]) and labels for each split.
  std::string train_images, train_labels, test_images, test_labels;

  void Validate() const;
  nlohmann::json ToJson() const;
  static DatasetSpec FromJson(const nlohmann::json& j);
};

struct Dataset {
  Tensor images;  // [S, 1, H, W], values in [0, 1]
  std::vector<int> labels;
  int64_t classes = 0;

  int64_t size() const { return static_cast<int64_t>(labels.size()); }
  // Rows in the given order.
  Dataset Select(const std::vector<int64_t>& rows) const;
};

struct SplitDataset {
  Dataset train;
  Dataset test;
};

// Binary template of `cls` on a size x size grid (row-major, 0/1).
std::vector<uint8_t> ClassTemplate(int64_t cls, int64_t size);

// Each class draws samples_per_class noisy copies of its template; the first
// train_fraction of every class goes to the training split.
SplitDataset generate_synthetic(const DatasetSpec& spec, uint64_t seed);

// Synthetic or IDX, per spec.source.
SplitDataset load_dataset(const DatasetSpec& spec, uint64_t seed);

// IDX (big-endian, ubyte) images [S, H, W] scaled by 255 and labels [S].
void WriteIdxImages(const std::string& path, const Tensor& images);
void WriteIdxLabels(const std::string& path, const std::vector<int>& labels);
Tensor ReadIdxImages(const std::string& path);
std::vector<int> ReadIdxLabels(const std::string& path);

}  // namespace qkspike

#endif  // QKSPIKE_DATA_H_
