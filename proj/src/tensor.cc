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

#include "qkspike/tensor.h"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace qkspike {

namespace {
thread_local Tape* active_tape = nullptr;
thread_local bool grad_enabled = true;
}  // namespace

std::string ShapeToString(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

int64_t NumElements(const Shape& shape) {
  int64_t n = 1;
  for (int64_t d : shape) {
    if (d < 0) throw DimensionError("negative dimension in " + ShapeToString(shape));
    n *= d;
  }
  return n;
}

Tensor::Tensor() = default;

Tensor::Tensor(Shape shape, double fill) : impl_(std::make_shared<TensorImpl>()) {
  const int64_t n = NumElements(shape);
  impl_->shape = std::move(shape);
  impl_->data.assign(static_cast<size_t>(n), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : impl_(std::make_shared<TensorImpl>()) {
  const int64_t n = NumElements(shape);
  if (n != static_cast<int64_t>(data.size())) {
    throw DimensionError("data length " + std::to_string(data.size()) +
                         " does not match shape " + ShapeToString(shape));
  }
  impl_->shape = std::move(shape);
  impl_->data = std::move(data);
}

int64_t Tensor::dim(int axis) const {
  const int r = rank();
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for " +
                         ShapeToString(shape()));
  }
  return impl_->shape[axis];
}

double Tensor::item() const {
  if (numel() != 1) {
    throw DimensionError("item() on tensor of shape " + ShapeToString(shape()));
  }
  return impl_->data[0];
}

Tensor& Tensor::set_requires_grad(bool value) {
  impl_->requires_grad = value;
  return *this;
}

std::span<const double> Tensor::grad() const {
  if (!impl_->grad) throw AutogradError("tensor has no gradient");
  return *impl_->grad;
}

Tensor Tensor::grad_tensor() const {
  auto g = grad();
  return Tensor(shape(), std::vector<double>(g.begin(), g.end()));
}

void Tensor::zero_grad() { impl_->grad.reset(); }

Tensor Tensor::detach() const { return Tensor(shape(), impl_->data); }

bool Tensor::is_binary() const {
  return std::all_of(impl_->data.begin(), impl_->data.end(),
                     [](double v) { return v == 0.0 || v == 1.0; });
}

bool Tensor::is_small_integer(int max_value) const {
  return std::all_of(impl_->data.begin(), impl_->data.end(), [&](double v) {
    return v >= 0.0 && v <= max_value && v == std::floor(v);
  });
}

void Tensor::validate_finite(std::string_view what) const {
  for (size_t i = 0; i < impl_->data.size(); ++i) {
    if (!std::isfinite(impl_->data[i])) {
      throw ContractError(std::string(what) + ": non-finite value at index " +
                          std::to_string(i));
    }
  }
}

void Tensor::validate_binary(std::string_view what) const {
  for (size_t i = 0; i < impl_->data.size(); ++i) {
    const double v = impl_->data[i];
    if (v != 0.0 && v != 1.0) {
      throw ContractError(std::string(what) + ": non-binary value " +
                          std::to_string(v) + " at index " + std::to_string(i));
    }
  }
}

double Tensor::firing_rate() const {
  if (impl_->data.empty()) return 0.0;
  const auto active = std::count_if(impl_->data.begin(), impl_->data.end(),
                                    [](double v) { return v != 0.0; });
  return static_cast<double>(active) / static_cast<double>(impl_->data.size());
}

Tape::Tape() : previous_(active_tape) { active_tape = this; }

Tape::~Tape() {
  if (active_tape == this) active_tape = previous_;
}

Tape* Tape::Active() { return active_tape; }

std::vector<std::string> Tape::op_names() const {
  std::vector<std::string> names;
  names.reserve(nodes_.size());
  for (const auto& n : nodes_) names.push_back(n.name);
  return names;
}

int64_t Tape::recorded_elements() const {
  int64_t total = 0;
  for (const auto& n : nodes_) total += n.elements;
  return total;
}

int64_t Tape::record(std::string_view name, const std::vector<Tensor>& inputs,
                     const Tensor& output, BackwardFn backward) {
  if (consumed_) throw AutogradError("recording on a tape that was already consumed");
  Node node;
  node.name = std::string(name);
  node.elements = output.numel();
  node.inputs.reserve(inputs.size());
  for (const auto& t : inputs) node.inputs.push_back(t.shared_impl());
  node.output = output.shared_impl();
  node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return static_cast<int64_t>(nodes_.size()) - 1;
}

void Tape::backward(const Tensor& loss) {
  if (consumed_) {
    throw AutogradError("backward called twice on the same tape; re-record the graph");
  }
  if (!loss.defined() || loss.numel() != 1) {
    throw AutogradError("backward requires a scalar loss");
  }
  TensorImpl* root = loss.impl();
  if (root->tape != this || root->node < 0) {
    throw AutogradError("loss is not attached to this tape (detached graph)");
  }
  consumed_ = true;
  root->grad = std::vector<double>{1.0};

  for (int64_t i = root->node; i >= 0; --i) {
    Node& node = nodes_[static_cast<size_t>(i)];
    if (!node.output->grad || !node.backward) continue;
    std::vector<std::span<double>> slots;
    slots.reserve(node.inputs.size());
    for (const auto& in : node.inputs) {
      if (!in->requires_grad) {
        slots.emplace_back();
        continue;
      }
      if (!in->grad) in->grad = std::vector<double>(in->data.size(), 0.0);
      slots.emplace_back(*in->grad);
    }
    GradSink sink(std::move(slots));
    node.backward(*node.output->grad, sink);
  }
  // Free saved activations; names stay for inspection.
  for (auto& node : nodes_) {
    node.backward = nullptr;
    node.inputs.clear();
    node.output.reset();
  }
}

NoGradGuard::NoGradGuard() : previous_(grad_enabled) { grad_enabled = false; }
NoGradGuard::~NoGradGuard() { grad_enabled = previous_; }

bool GradRecordingEnabled() { return grad_enabled; }

Tensor MakeResult(std::string_view name, const std::vector<Tensor>& inputs,
                  Shape shape, std::vector<double> data, BackwardFn backward) {
  Tensor out(std::move(shape), std::move(data));
  Tape* tape = active_tape;
  if (!grad_enabled || tape == nullptr || !backward) return out;
  const bool any = std::any_of(inputs.begin(), inputs.end(),
                               [](const Tensor& t) { return t.requires_grad(); });
  if (!any) return out;
  out.set_requires_grad(true);
  out.impl()->tape = tape;
  out.impl()->node = tape->record(name, inputs, out, std::move(backward));
  return out;
}

}  // namespace qkspike
