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

#ifndef QKSPIKE_SERIALIZE_H_
#define QKSPIKE_SERIALIZE_H_

#include <filesystem>
#include <iosfwd>
#include <stdexcept>

#include "qkspike/tensor.h"

namespace qkspike {

// Snapshot layout, all little-endian:
//   "QKT1" | u32 rank | u64 dims[rank] | f64 payload[numel]
class SerializationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void WriteTensor(std::ostream& out, const Tensor& tensor);
Tensor ReadTensor(std::istream& in);

void SaveTensor(const std::filesystem::path& path, const Tensor& tensor);
Tensor LoadTensor(const std::filesystem::path& path);

}  // namespace qkspike

#endif  // QKSPIKE_SERIALIZE_H_
