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

// Differentiable primitives. Every function records a backward rule on the
// active Tape when one of its inputs requires a gradient.

#ifndef QKSPIKE_OPS_H_
#define QKSPIKE_OPS_H_

#include <cstdint>
#include <span>
#include <vector>

#include "qkspike/tensor.h"

namespace qkspike {

// C[M,P] = A[M,K] * B[K,P].
Tensor matmul(const Tensor& a, const Tensor& b);

// y[..., P] = x[..., K] * w[P, K]^T (+ bias[P]).
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor* bias = nullptr);

enum class ConvAlgorithm { kIm2col, kDirect };

struct Conv2dOptions {
  int64_t stride = 1;
  int64_t padding = 0;
  ConvAlgorithm algorithm = ConvAlgorithm::kIm2col;
};

// Cross-correlation of x[B,Cin,H,W] with w[Cout,Cin,kh,kw].
Tensor conv2d(const Tensor& x, const Tensor& weight, const Conv2dOptions& options = {},
              const Tensor* bias = nullptr);

// Output spatial extent; throws ConfigError when not integral.
int64_t ConvOutputSize(int64_t input, int64_t kernel, int64_t stride, int64_t padding);

struct BatchNormStats {
  std::vector<double> running_mean;
  std::vector<double> running_var;
  explicit BatchNormStats(int64_t channels = 0)
      : running_mean(static_cast<size_t>(channels), 0.0),
        running_var(static_cast<size_t>(channels), 1.0) {}
};

struct BatchNormOptions {
  int channel_axis = 1;
  bool training = true;
  double eps = 1e-5;
  double momentum = 0.1;
};

// Per-channel normalization. Training mode uses biased batch statistics and
// updates the running statistics (unbiased variance) by `momentum`.
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  BatchNormStats& stats, const BatchNormOptions& options = {});

// Max over kernel x kernel windows of x[B,C,H,W]; ties go to the first index
// in row-major scan order.
Tensor max_pool2d(const Tensor& x, int64_t kernel, int64_t stride);

// x[:, :, ::stride, ::stride]; together with a 1x1 convolution this is the
// strided 1x1 projection used by downsampling shortcuts.
Tensor subsample2d(const Tensor& x, int64_t stride);

Tensor sum_axis(const Tensor& x, int axis, bool keepdim = false);
Tensor mean_axis(const Tensor& x, int axis, bool keepdim = false);
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

// Element-wise with numpy-style broadcasting.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor hadamard(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);

Tensor reshape(const Tensor& x, Shape shape);
Tensor permute(const Tensor& x, const std::vector<int>& order);

// Mean softmax cross-entropy of logits[B,C] against integer labels.
Tensor cross_entropy(const Tensor& logits, std::span<const int> labels);

// Broadcast result shape; throws DimensionError on mismatch.
Shape BroadcastShape(const Shape& a, const Shape& b);

namespace kernels {
// Row-major GEMM: C = alpha * op(A) * op(B) + beta * C with op(A) of size MxK.
void Gemm(bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k, double alpha,
          const double* a, const double* b, double beta, double* c);
}  // namespace kernels

}  // namespace qkspike

#endif  // QKSPIKE_OPS_H_
