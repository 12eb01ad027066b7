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

#ifndef QKSPIKE_TENSOR_H_
#define QKSPIKE_TENSOR_H_

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace qkspike {

using Shape = std::vector<int64_t>;

// Shape or broadcast mismatch between operands.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Invalid layer / model / run configuration.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A value-level precondition was violated (non-binary spikes, NaN, ...).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Misuse of the gradient tape.
class AutogradError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

std::string ShapeToString(const Shape& shape);
int64_t NumElements(const Shape& shape);

class Tape;

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  bool requires_grad = false;
  std::optional<std::vector<double>> grad;
  // Producing node on `tape`, or -1 for leaves and untracked results.
  int64_t node = -1;
  const Tape* tape = nullptr;
};

// Dense row-major tensor of 64-bit floats with shared (handle) semantics:
// copies of a Tensor refer to the same storage. Spike tensors store 0.0/1.0.
class Tensor {
 public:
  Tensor();
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor Zeros(Shape shape) { return Tensor(std::move(shape), 0.0); }
  static Tensor Ones(Shape shape) { return Tensor(std::move(shape), 1.0); }
  static Tensor Scalar(double value) { return Tensor(Shape{}, {value}); }

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  int64_t dim(int axis) const;
  int rank() const { return static_cast<int>(impl_->shape.size()); }
  int64_t numel() const { return static_cast<int64_t>(impl_->data.size()); }

  std::span<const double> data() const { return impl_->data; }
  std::span<double> mutable_data() { return impl_->data; }
  double operator[](int64_t i) const { return impl_->data[i]; }
  double& operator[](int64_t i) { return impl_->data[i]; }
  // Value of a single-element tensor.
  double item() const;

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor& set_requires_grad(bool value = true);
  bool has_grad() const { return impl_->grad.has_value(); }
  // Gradient buffer; throws AutogradError when none has been populated.
  std::span<const double> grad() const;
  Tensor grad_tensor() const;
  void zero_grad();
  // True when this tensor was produced by a recorded operation.
  bool is_tracked() const { return impl_->node >= 0; }

  // Same values, no graph history, fresh storage.
  Tensor detach() const;
  Tensor clone() const { return detach(); }

  bool is_binary() const;
  // Values restricted to {0, 1, ..., max_value}.
  bool is_small_integer(int max_value) const;
  // Throws ContractError on the first NaN/Inf.
  void validate_finite(std::string_view what = "tensor") const;
  // Throws ContractError unless every element is 0 or 1.
  void validate_binary(std::string_view what = "spike tensor") const;
  // Mean of x != 0 over all elements; 0 for an empty tensor.
  double firing_rate() const;

  TensorImpl* impl() const { return impl_.get(); }
  const std::shared_ptr<TensorImpl>& shared_impl() const { return impl_; }

 private:
  std::shared_ptr<TensorImpl> impl_;
};

// Per-input gradient destinations handed to a backward rule. An input that
// does not need a gradient yields an empty span.
class GradSink {
 public:
  explicit GradSink(std::vector<std::span<double>> slots)
      : slots_(std::move(slots)) {}
  size_t size() const { return slots_.size(); }
  bool wants(size_t input) const {
    return input < slots_.size() && !slots_[input].empty();
  }
  std::span<double> operator[](size_t input) const { return slots_[input]; }

 private:
  std::vector<std::span<double>> slots_;
};

using BackwardFn =
    std::function<void(std::span<const double> grad_output, GradSink& sink)>;

// Ordered record of primitive applications. Constructing a Tape makes it the
// active tape of the current thread until it is destroyed; operations whose
// inputs require gradients are appended to it. A tape supports exactly one
// backward pass.
class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* Active();

  // Seeds d loss/d loss = 1 and runs every backward rule in reverse order.
  void backward(const Tensor& loss);

  size_t size() const { return nodes_.size(); }
  bool consumed() const { return consumed_; }
  std::vector<std::string> op_names() const;
  // Total elements of all recorded outputs (saved-activation footprint).
  int64_t recorded_elements() const;

  // Appends a node; returns its index.
  int64_t record(std::string_view name, const std::vector<Tensor>& inputs,
                 const Tensor& output, BackwardFn backward);

 private:
  struct Node {
    std::string name;
    int64_t elements = 0;
    std::vector<std::shared_ptr<TensorImpl>> inputs;
    std::shared_ptr<TensorImpl> output;
    BackwardFn backward;
  };

  std::vector<Node> nodes_;
  bool consumed_ = false;
  Tape* previous_ = nullptr;
};

// Scope within which no operation is recorded even if a Tape is active.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool GradRecordingEnabled();

// Builds the result tensor of a primitive and, when any input requires a
// gradient and recording is enabled, records `backward` on the active tape.
// This is the extension point used by the neuron and attention kernels.
Tensor MakeResult(std::string_view name, const std::vector<Tensor>& inputs,
                  Shape shape, std::vector<double> data, BackwardFn backward);

}  // namespace qkspike

#endif  // QKSPIKE_TENSOR_H_
