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

#include "qkspike/serialize.h"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace qkspike {

namespace {

constexpr std::array<char, 4> kMagic{'Q', 'K', 'T', '1'};

template <typename T>
void PutLittle(std::ostream& out, T value) {
  std::array<unsigned char, sizeof(T)> bytes;
  std::memcpy(bytes.data(), &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) {
    std::reverse(bytes.begin(), bytes.end());
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), sizeof(T));
}

template <typename T>
T GetLittle(std::istream& in) {
  std::array<unsigned char, sizeof(T)> bytes;
  in.read(reinterpret_cast<char*>(bytes.data()), sizeof(T));
  if (!in) throw SerializationError("tensor snapshot truncated");
  if constexpr (std::endian::native == std::endian::big) {
    std::reverse(bytes.begin(), bytes.end());
  }
  T value;
  std::memcpy(&value, bytes.data(), sizeof(T));
  return value;
}

}  // namespace

void WriteTensor(std::ostream& out, const Tensor& tensor) {
  out.write(kMagic.data(), kMagic.size());
  PutLittle<uint32_t>(out, static_cast<uint32_t>(tensor.rank()));
  for (int64_t d : tensor.shape()) PutLittle<uint64_t>(out, static_cast<uint64_t>(d));
  for (double v : tensor.data()) PutLittle<double>(out, v);
  if (!out) throw SerializationError("failed writing tensor snapshot");
}

Tensor ReadTensor(std::istream& in) {
  std::array<char, 4> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) throw SerializationError("bad tensor snapshot magic");
  const uint32_t rank = GetLittle<uint32_t>(in);
  if (rank > 16) throw SerializationError("implausible tensor rank " + std::to_string(rank));
  Shape shape(rank);
  for (auto& d : shape) {
    const uint64_t v = GetLittle<uint64_t>(in);
    if (v > (uint64_t{1} << 40)) throw SerializationError("implausible dimension");
    d = static_cast<int64_t>(v);
  }
  std::vector<double> data(static_cast<size_t>(NumElements(shape)));
  for (double& v : data) v = GetLittle<double>(in);
  return Tensor(std::move(shape), std::move(data));
}

void SaveTensor(const std::filesystem::path& path, const Tensor& tensor) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw SerializationError("cannot open " + path.string() + " for writing");
  WriteTensor(out, tensor);
}

Tensor LoadTensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SerializationError("cannot open " + path.string());
  return ReadTensor(in);
}

}  // namespace qkspike
