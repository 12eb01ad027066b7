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

#include "qkspike/ops.h"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace qkspike {

namespace kernels {

namespace {
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

template <typename A, typename B>
void Accumulate(MutMap& c, const A& a, const B& b, double alpha, double beta) {
  if (beta == 0.0) {
    c.noalias() = alpha * (a * b);
  } else {
    if (beta != 1.0) c *= beta;
    c.noalias() += alpha * (a * b);
  }
}
}  // namespace

void Gemm(bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k, double alpha,
          const double* a, const double* b, double beta, double* c) {
  if (m == 0 || n == 0) return;
  MutMap cm(c, m, n);
  if (k == 0) {
    if (beta == 0.0) cm.setZero(); else cm *= beta;
    return;
  }
  ConstMap am(a, trans_a ? k : m, trans_a ? m : k);
  ConstMap bm(b, trans_b ? n : k, trans_b ? k : n);
  if (!trans_a && !trans_b) Accumulate(cm, am, bm, alpha, beta);
  else if (!trans_a && trans_b) Accumulate(cm, am, bm.transpose(), alpha, beta);
  else if (trans_a && !trans_b) Accumulate(cm, am.transpose(), bm, alpha, beta);
  else Accumulate(cm, am.transpose(), bm.transpose(), alpha, beta);
}

}  // namespace kernels

namespace {

void RequireRank(const Tensor& t, int rank, const char* op) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) +
                         " tensor, got " + ShapeToString(t.shape()));
  }
}

// Output-index -> operand-index mapping for a broadcast operand.
std::vector<int64_t> BroadcastMap(const Shape& in, const Shape& out) {
  const size_t r = out.size();
  std::vector<int64_t> strides(r, 0);
  int64_t s = 1;
  for (size_t i = 0; i < in.size(); ++i) {
    const size_t oi = r - 1 - i;
    const size_t ii = in.size() - 1 - i;
    strides[oi] = in[ii] == 1 ? 0 : s;
    s *= in[ii];
  }
  const int64_t n = NumElements(out);
  std::vector<int64_t> map(static_cast<size_t>(n));
  std::vector<int64_t> idx(r, 0);
  int64_t offset = 0;
  for (int64_t flat = 0; flat < n; ++flat) {
    map[flat] = offset;
    for (size_t d = r; d-- > 0;) {
      ++idx[d];
      offset += strides[d];
      if (idx[d] < out[d]) break;
      offset -= strides[d] * idx[d];
      idx[d] = 0;
    }
  }
  return map;
}

enum class BinaryKind { kAdd, kSub, kMul };

Tensor BinaryOp(const Tensor& a, const Tensor& b, BinaryKind kind, const char* name) {
  const Shape out_shape = BroadcastShape(a.shape(), b.shape());
  const int64_t n = NumElements(out_shape);
  const bool same = a.shape() == out_shape && b.shape() == out_shape;
  std::vector<int64_t> amap, bmap;
  if (!same) {
    amap = BroadcastMap(a.shape(), out_shape);
    bmap = BroadcastMap(b.shape(), out_shape);
  }
  auto ai = [&](int64_t i) { return same ? i : amap[i]; };
  auto bi = [&](int64_t i) { return same ? i : bmap[i]; };
  std::vector<double> out(static_cast<size_t>(n));
  auto ad = a.data();
  auto bd = b.data();
  for (int64_t i = 0; i < n; ++i) {
    const double x = ad[ai(i)];
    const double y = bd[bi(i)];
    out[i] = kind == BinaryKind::kAdd ? x + y : kind == BinaryKind::kSub ? x - y : x * y;
  }
  return MakeResult(
      name, {a, b}, out_shape, std::move(out),
      [a, b, kind, same, amap = std::move(amap), bmap = std::move(bmap)](
          std::span<const double> g, GradSink& sink) {
        const int64_t n = static_cast<int64_t>(g.size());
        auto ga = sink[0];
        auto gb = sink[1];
        auto ad = a.data();
        auto bd = b.data();
        for (int64_t i = 0; i < n; ++i) {
          const int64_t ia = same ? i : amap[i];
          const int64_t ib = same ? i : bmap[i];
          switch (kind) {
            case BinaryKind::kAdd:
              if (!ga.empty()) ga[ia] += g[i];
              if (!gb.empty()) gb[ib] += g[i];
              break;
            case BinaryKind::kSub:
              if (!ga.empty()) ga[ia] += g[i];
              if (!gb.empty()) gb[ib] -= g[i];
              break;
            case BinaryKind::kMul:
              if (!ga.empty()) ga[ia] += g[i] * bd[ib];
              if (!gb.empty()) gb[ib] += g[i] * ad[ia];
              break;
          }
        }
      });
}

// Unfolds x_b[C,H,W] into col[C*kh*kw, Ho*Wo].
void Im2col(const double* x, int64_t channels, int64_t height, int64_t width, int64_t kh,
            int64_t kw, int64_t stride, int64_t pad, int64_t out_h, int64_t out_w,
            double* col) {
  for (int64_t c = 0; c < channels; ++c) {
    for (int64_t i = 0; i < kh; ++i) {
      for (int64_t j = 0; j < kw; ++j) {
        double* row = col + ((c * kh + i) * kw + j) * out_h * out_w;
        for (int64_t oy = 0; oy < out_h; ++oy) {
          const int64_t y = oy * stride - pad + i;
          if (y < 0 || y >= height) {
            std::fill(row + oy * out_w, row + (oy + 1) * out_w, 0.0);
            continue;
          }
          const double* src = x + (c * height + y) * width;
          for (int64_t ox = 0; ox < out_w; ++ox) {
            const int64_t xx = ox * stride - pad + j;
            row[oy * out_w + ox] = (xx >= 0 && xx < width) ? src[xx] : 0.0;
          }
        }
      }
    }
  }
}

void Col2im(const double* col, int64_t channels, int64_t height, int64_t width, int64_t kh,
            int64_t kw, int64_t stride, int64_t pad, int64_t out_h, int64_t out_w,
            double* x) {
  for (int64_t c = 0; c < channels; ++c) {
    for (int64_t i = 0; i < kh; ++i) {
      for (int64_t j = 0; j < kw; ++j) {
        const double* row = col + ((c * kh + i) * kw + j) * out_h * out_w;
        for (int64_t oy = 0; oy < out_h; ++oy) {
          const int64_t y = oy * stride - pad + i;
          if (y < 0 || y >= height) continue;
          double* dst = x + (c * height + y) * width;
          for (int64_t ox = 0; ox < out_w; ++ox) {
            const int64_t xx = ox * stride - pad + j;
            if (xx >= 0 && xx < width) dst[xx] += row[oy * out_w + ox];
          }
        }
      }
    }
  }
}

struct ConvGeometry {
  int64_t batch, in_c, h, w, out_c, kh, kw, out_h, out_w, stride, pad;
};

void ConvForwardDirect(const ConvGeometry& g, const double* x, const double* w, double* y) {
  for (int64_t b = 0; b < g.batch; ++b)
    for (int64_t o = 0; o < g.out_c; ++o)
      for (int64_t oy = 0; oy < g.out_h; ++oy)
        for (int64_t ox = 0; ox < g.out_w; ++ox) {
          double acc = 0.0;
          for (int64_t c = 0; c < g.in_c; ++c)
            for (int64_t i = 0; i < g.kh; ++i) {
              const int64_t yy = oy * g.stride - g.pad + i;
              if (yy < 0 || yy >= g.h) continue;
              for (int64_t j = 0; j < g.kw; ++j) {
                const int64_t xx = ox * g.stride - g.pad + j;
                if (xx < 0 || xx >= g.w) continue;
                acc += x[((b * g.in_c + c) * g.h + yy) * g.w + xx] *
                       w[((o * g.in_c + c) * g.kh + i) * g.kw + j];
              }
            }
          y[((b * g.out_c + o) * g.out_h + oy) * g.out_w + ox] = acc;
        }
}

void ConvBackwardDirect(const ConvGeometry& g, const double* x, const double* w,
                        const double* dy, double* dx, double* dw) {
  for (int64_t b = 0; b < g.batch; ++b)
    for (int64_t o = 0; o < g.out_c; ++o)
      for (int64_t oy = 0; oy < g.out_h; ++oy)
        for (int64_t ox = 0; ox < g.out_w; ++ox) {
          const double go = dy[((b * g.out_c + o) * g.out_h + oy) * g.out_w + ox];
          if (go == 0.0) continue;
          for (int64_t c = 0; c < g.in_c; ++c)
            for (int64_t i = 0; i < g.kh; ++i) {
              const int64_t yy = oy * g.stride - g.pad + i;
              if (yy < 0 || yy >= g.h) continue;
              for (int64_t j = 0; j < g.kw; ++j) {
                const int64_t xx = ox * g.stride - g.pad + j;
                if (xx < 0 || xx >= g.w) continue;
                const int64_t xi = ((b * g.in_c + c) * g.h + yy) * g.w + xx;
                const int64_t wi = ((o * g.in_c + c) * g.kh + i) * g.kw + j;
                if (dx) dx[xi] += go * w[wi];
                if (dw) dw[wi] += go * x[xi];
              }
            }
        }
}

void ConvForwardIm2col(const ConvGeometry& g, const double* x, const double* w, double* y) {
  const int64_t ckk = g.in_c * g.kh * g.kw;
  const int64_t spatial = g.out_h * g.out_w;
  std::vector<double> col(static_cast<size_t>(ckk * spatial));
  for (int64_t b = 0; b < g.batch; ++b) {
    Im2col(x + b * g.in_c * g.h * g.w, g.in_c, g.h, g.w, g.kh, g.kw, g.stride, g.pad,
           g.out_h, g.out_w, col.data());
    kernels::Gemm(false, false, g.out_c, spatial, ckk, 1.0, w, col.data(), 0.0,
                  y + b * g.out_c * spatial);
  }
}

void ConvBackwardIm2col(const ConvGeometry& g, const double* x, const double* w,
                        const double* dy, double* dx, double* dw) {
  const int64_t ckk = g.in_c * g.kh * g.kw;
  const int64_t spatial = g.out_h * g.out_w;
  std::vector<double> col(static_cast<size_t>(ckk * spatial));
  for (int64_t b = 0; b < g.batch; ++b) {
    const double* dyb = dy + b * g.out_c * spatial;
    if (dw) {
      Im2col(x + b * g.in_c * g.h * g.w, g.in_c, g.h, g.w, g.kh, g.kw, g.stride, g.pad,
             g.out_h, g.out_w, col.data());
      kernels::Gemm(false, true, g.out_c, ckk, spatial, 1.0, dyb, col.data(), 1.0, dw);
    }
    if (dx) {
      kernels::Gemm(true, false, ckk, spatial, g.out_c, 1.0, w, dyb, 0.0, col.data());
      Col2im(col.data(), g.in_c, g.h, g.w, g.kh, g.kw, g.stride, g.pad, g.out_h, g.out_w,
             dx + b * g.in_c * g.h * g.w);
    }
  }
}

}  // namespace

Shape BroadcastShape(const Shape& a, const Shape& b) {
  const size_t r = std::max(a.size(), b.size());
  Shape out(r, 1);
  for (size_t i = 0; i < r; ++i) {
    const int64_t da = i < a.size() ? a[a.size() - 1 - i] : 1;
    const int64_t db = i < b.size() ? b[b.size() - 1 - i] : 1;
    if (da != db && da != 1 && db != 1) {
      throw DimensionError("cannot broadcast " + ShapeToString(a) + " with " +
                           ShapeToString(b));
    }
    out[r - 1 - i] = da == 1 ? db : da;
  }
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  RequireRank(a, 2, "matmul");
  RequireRank(b, 2, "matmul");
  const int64_t m = a.dim(0), k = a.dim(1), p = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul: inner dimensions differ: " + ShapeToString(a.shape()) +
                         " x " + ShapeToString(b.shape()));
  }
  std::vector<double> out(static_cast<size_t>(m * p));
  kernels::Gemm(false, false, m, p, k, 1.0, a.data().data(), b.data().data(), 0.0,
                out.data());
  return MakeResult("matmul", {a, b}, {m, p}, std::move(out),
                    [a, b, m, k, p](std::span<const double> g, GradSink& sink) {
                      if (sink.wants(0))
                        kernels::Gemm(false, true, m, k, p, 1.0, g.data(),
                                      b.data().data(), 1.0, sink[0].data());
                      if (sink.wants(1))
                        kernels::Gemm(true, false, k, p, m, 1.0, a.data().data(),
                                      g.data(), 1.0, sink[1].data());
                    });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor* bias) {
  RequireRank(weight, 2, "linear");
  if (x.rank() < 1) throw DimensionError("linear: input must have rank >= 1");
  const int64_t k = x.shape().back();
  const int64_t p = weight.dim(0);
  if (weight.dim(1) != k) {
    throw DimensionError("linear: input " + ShapeToString(x.shape()) +
                         " incompatible with weight " + ShapeToString(weight.shape()));
  }
  if (bias && (bias->rank() != 1 || bias->dim(0) != p)) {
    throw DimensionError("linear: bias shape " + ShapeToString(bias->shape()));
  }
  const int64_t m = k == 0 ? 0 : x.numel() / k;
  Shape out_shape = x.shape();
  out_shape.back() = p;
  std::vector<double> out(static_cast<size_t>(m * p));
  kernels::Gemm(false, true, m, p, k, 1.0, x.data().data(), weight.data().data(), 0.0,
                out.data());
  if (bias) {
    auto bd = bias->data();
    for (int64_t r = 0; r < m; ++r)
      for (int64_t c = 0; c < p; ++c) out[r * p + c] += bd[c];
  }
  std::vector<Tensor> inputs{x, weight};
  if (bias) inputs.push_back(*bias);
  return MakeResult("linear", inputs, out_shape, std::move(out),
                    [x, weight, m, k, p, has_bias = bias != nullptr](
                        std::span<const double> g, GradSink& sink) {
                      if (sink.wants(0))
                        kernels::Gemm(false, false, m, k, p, 1.0, g.data(),
                                      weight.data().data(), 1.0, sink[0].data());
                      if (sink.wants(1))
                        kernels::Gemm(true, false, p, k, m, 1.0, g.data(),
                                      x.data().data(), 1.0, sink[1].data());
                      if (has_bias && sink.wants(2)) {
                        auto gb = sink[2];
                        for (int64_t r = 0; r < m; ++r)
                          for (int64_t c = 0; c < p; ++c) gb[c] += g[r * p + c];
                      }
                    });
}

int64_t ConvOutputSize(int64_t input, int64_t kernel, int64_t stride, int64_t padding) {
  if (stride < 1) throw ConfigError("conv2d: stride must be >= 1");
  const int64_t span = input + 2 * padding - kernel;
  if (span < 0 || span % stride != 0) {
    throw ConfigError("conv2d: output size (" + std::to_string(input) + " + 2*" +
                      std::to_string(padding) + " - " + std::to_string(kernel) + ")/" +
                      std::to_string(stride) + " + 1 is not integral");
  }
  return span / stride + 1;
}

Tensor conv2d(const Tensor& x, const Tensor& weight, const Conv2dOptions& options,
              const Tensor* bias) {
  RequireRank(x, 4, "conv2d");
  RequireRank(weight, 4, "conv2d");
  if (weight.dim(1) != x.dim(1)) {
    throw DimensionError("conv2d: input " + ShapeToString(x.shape()) +
                         " incompatible with weight " + ShapeToString(weight.shape()));
  }
  ConvGeometry g{};
  g.batch = x.dim(0);
  g.in_c = x.dim(1);
  g.h = x.dim(2);
  g.w = x.dim(3);
  g.out_c = weight.dim(0);
  g.kh = weight.dim(2);
  g.kw = weight.dim(3);
  g.stride = options.stride;
  g.pad = options.padding;
  g.out_h = ConvOutputSize(g.h, g.kh, g.stride, g.pad);
  g.out_w = ConvOutputSize(g.w, g.kw, g.stride, g.pad);
  if (bias && (bias->rank() != 1 || bias->dim(0) != g.out_c)) {
    throw DimensionError("conv2d: bias shape " + ShapeToString(bias->shape()));
  }
  const int64_t spatial = g.out_h * g.out_w;
  std::vector<double> out(static_cast<size_t>(g.batch * g.out_c * spatial));
  if (options.algorithm == ConvAlgorithm::kDirect) {
    ConvForwardDirect(g, x.data().data(), weight.data().data(), out.data());
  } else {
    ConvForwardIm2col(g, x.data().data(), weight.data().data(), out.data());
  }
  if (bias) {
    auto bd = bias->data();
    for (int64_t b = 0; b < g.batch; ++b)
      for (int64_t o = 0; o < g.out_c; ++o) {
        double* row = out.data() + (b * g.out_c + o) * spatial;
        for (int64_t s = 0; s < spatial; ++s) row[s] += bd[o];
      }
  }
  std::vector<Tensor> inputs{x, weight};
  if (bias) inputs.push_back(*bias);
  return MakeResult(
      "conv2d", inputs, {g.batch, g.out_c, g.out_h, g.out_w}, std::move(out),
      [x, weight, g, algorithm = options.algorithm, has_bias = bias != nullptr](
          std::span<const double> dy, GradSink& sink) {
        double* dx = sink.wants(0) ? sink[0].data() : nullptr;
        double* dw = sink.wants(1) ? sink[1].data() : nullptr;
        if (algorithm == ConvAlgorithm::kDirect) {
          ConvBackwardDirect(g, x.data().data(), weight.data().data(), dy.data(), dx, dw);
        } else {
          ConvBackwardIm2col(g, x.data().data(), weight.data().data(), dy.data(), dx, dw);
        }
        if (has_bias && sink.wants(2)) {
          auto gb = sink[2];
          const int64_t spatial = g.out_h * g.out_w;
          for (int64_t b = 0; b < g.batch; ++b)
            for (int64_t o = 0; o < g.out_c; ++o) {
              const double* row = dy.data() + (b * g.out_c + o) * spatial;
              for (int64_t s = 0; s < spatial; ++s) gb[o] += row[s];
            }
        }
      });
}

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  BatchNormStats& stats, const BatchNormOptions& options) {
  if (options.eps <= 0.0) throw ConfigError("batch_norm: eps must be > 0");
  const int axis = options.channel_axis < 0 ? options.channel_axis + x.rank()
                                            : options.channel_axis;
  const int64_t channels = x.dim(axis);
  if (gamma.numel() != channels || beta.numel() != channels ||
      static_cast<int64_t>(stats.running_mean.size()) != channels ||
      static_cast<int64_t>(stats.running_var.size()) != channels) {
    throw DimensionError("batch_norm: parameter size does not match " +
                         std::to_string(channels) + " channels");
  }
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= x.dim(i);
  for (int i = axis + 1; i < x.rank(); ++i) inner *= x.dim(i);
  const int64_t count = outer * inner;
  if (options.training && count == 0) {
    throw ConfigError("batch_norm: zero-size batch in training mode");
  }
  auto xd = x.data();
  auto gd = gamma.data();
  auto bd = beta.data();
  std::vector<double> mean(channels), inv_std(channels);
  if (options.training) {
    for (int64_t c = 0; c < channels; ++c) {
      double s = 0.0;
      for (int64_t o = 0; o < outer; ++o) {
        const double* p = xd.data() + (o * channels + c) * inner;
        for (int64_t i = 0; i < inner; ++i) s += p[i];
      }
      const double mu = s / count;
      double v = 0.0;
      for (int64_t o = 0; o < outer; ++o) {
        const double* p = xd.data() + (o * channels + c) * inner;
        for (int64_t i = 0; i < inner; ++i) v += (p[i] - mu) * (p[i] - mu);
      }
      const double var = v / count;
      mean[c] = mu;
      inv_std[c] = 1.0 / std::sqrt(var + options.eps);
      const double unbiased = count > 1 ? v / (count - 1) : var;
      stats.running_mean[c] =
          (1.0 - options.momentum) * stats.running_mean[c] + options.momentum * mu;
      stats.running_var[c] =
          (1.0 - options.momentum) * stats.running_var[c] + options.momentum * unbiased;
    }
  } else {
    for (int64_t c = 0; c < channels; ++c) {
      mean[c] = stats.running_mean[c];
      inv_std[c] = 1.0 / std::sqrt(stats.running_var[c] + options.eps);
    }
  }
  std::vector<double> xhat(xd.size()), out(xd.size());
  for (int64_t o = 0; o < outer; ++o)
    for (int64_t c = 0; c < channels; ++c) {
      const int64_t base = (o * channels + c) * inner;
      for (int64_t i = 0; i < inner; ++i) {
        const double h = (xd[base + i] - mean[c]) * inv_std[c];
        xhat[base + i] = h;
        out[base + i] = gd[c] * h + bd[c];
      }
    }
  return MakeResult(
      "batch_norm", {x, gamma, beta}, x.shape(), std::move(out),
      [gamma, xhat = std::move(xhat), inv_std = std::move(inv_std), outer, inner,
       channels, count, training = options.training](std::span<const double> g,
                                                     GradSink& sink) {
        auto gd = gamma.data();
        std::vector<double> sum_g(channels, 0.0), sum_gx(channels, 0.0);
        for (int64_t o = 0; o < outer; ++o)
          for (int64_t c = 0; c < channels; ++c) {
            const int64_t base = (o * channels + c) * inner;
            for (int64_t i = 0; i < inner; ++i) {
              sum_g[c] += g[base + i];
              sum_gx[c] += g[base + i] * xhat[base + i];
            }
          }
        if (sink.wants(1))
          for (int64_t c = 0; c < channels; ++c) sink[1][c] += sum_gx[c];
        if (sink.wants(2))
          for (int64_t c = 0; c < channels; ++c) sink[2][c] += sum_g[c];
        if (!sink.wants(0)) return;
        auto dx = sink[0];
        for (int64_t o = 0; o < outer; ++o)
          for (int64_t c = 0; c < channels; ++c) {
            const int64_t base = (o * channels + c) * inner;
            const double k = gd[c] * inv_std[c];
            if (training) {
              const double mg = sum_g[c] / count;
              const double mgx = sum_gx[c] / count;
              for (int64_t i = 0; i < inner; ++i)
                dx[base + i] += k * (g[base + i] - mg - xhat[base + i] * mgx);
            } else {
              for (int64_t i = 0; i < inner; ++i) dx[base + i] += k * g[base + i];
            }
          }
      });
}

Tensor max_pool2d(const Tensor& x, int64_t kernel, int64_t stride) {
  RequireRank(x, 4, "max_pool2d");
  if (kernel < 1 || stride < 1) throw ConfigError("max_pool2d: kernel and stride must be >= 1");
  const int64_t b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (h < kernel || w < kernel) {
    throw DimensionError("max_pool2d: input " + ShapeToString(x.shape()) +
                         " smaller than kernel");
  }
  const int64_t oh = (h - kernel) / stride + 1;
  const int64_t ow = (w - kernel) / stride + 1;
  std::vector<double> out(static_cast<size_t>(b * c * oh * ow));
  std::vector<int64_t> argmax(out.size());
  auto xd = x.data();
  for (int64_t p = 0; p < b * c; ++p) {
    const double* plane = xd.data() + p * h * w;
    for (int64_t oy = 0; oy < oh; ++oy)
      for (int64_t ox = 0; ox < ow; ++ox) {
        int64_t best = (oy * stride) * w + ox * stride;
        for (int64_t i = 0; i < kernel; ++i)
          for (int64_t j = 0; j < kernel; ++j) {
            const int64_t idx = (oy * stride + i) * w + ox * stride + j;
            if (plane[idx] > plane[best]) best = idx;
          }
        const int64_t o = (p * oh + oy) * ow + ox;
        out[o] = plane[best];
        argmax[o] = p * h * w + best;
      }
  }
  return MakeResult("max_pool2d", {x}, {b, c, oh, ow}, std::move(out),
                    [argmax = std::move(argmax)](std::span<const double> g,
                                                 GradSink& sink) {
                      if (!sink.wants(0)) return;
                      for (size_t i = 0; i < g.size(); ++i) sink[0][argmax[i]] += g[i];
                    });
}

Tensor subsample2d(const Tensor& x, int64_t stride) {
  RequireRank(x, 4, "subsample2d");
  if (stride < 1) throw ConfigError("subsample2d: stride must be >= 1");
  const int64_t b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int64_t oh = (h + stride - 1) / stride, ow = (w + stride - 1) / stride;
  std::vector<double> out(static_cast<size_t>(b * c * oh * ow));
  std::vector<int64_t> source(out.size());
  auto xd = x.data();
  for (int64_t p = 0; p < b * c; ++p)
    for (int64_t oy = 0; oy < oh; ++oy)
      for (int64_t ox = 0; ox < ow; ++ox) {
        const int64_t o = (p * oh + oy) * ow + ox;
        source[o] = (p * h + oy * stride) * w + ox * stride;
        out[o] = xd[source[o]];
      }
  return MakeResult("subsample2d", {x}, {b, c, oh, ow}, std::move(out),
                    [source = std::move(source)](std::span<const double> g, GradSink& sink) {
                      if (!sink.wants(0)) return;
                      for (size_t i = 0; i < g.size(); ++i) sink[0][source[i]] += g[i];
                    });
}

Tensor sum_axis(const Tensor& x, int axis, bool keepdim) {
  if (axis < 0) axis += x.rank();
  const int64_t len = x.dim(axis);
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= x.dim(i);
  for (int i = axis + 1; i < x.rank(); ++i) inner *= x.dim(i);
  Shape shape = x.shape();
  if (keepdim) shape[axis] = 1; else shape.erase(shape.begin() + axis);
  std::vector<double> out(static_cast<size_t>(outer * inner), 0.0);
  auto xd = x.data();
  for (int64_t o = 0; o < outer; ++o)
    for (int64_t l = 0; l < len; ++l) {
      const double* p = xd.data() + (o * len + l) * inner;
      double* q = out.data() + o * inner;
      for (int64_t i = 0; i < inner; ++i) q[i] += p[i];
    }
  return MakeResult("sum_axis", {x}, std::move(shape), std::move(out),
                    [outer, len, inner](std::span<const double> g, GradSink& sink) {
                      if (!sink.wants(0)) return;
                      auto dx = sink[0];
                      for (int64_t o = 0; o < outer; ++o)
                        for (int64_t l = 0; l < len; ++l)
                          for (int64_t i = 0; i < inner; ++i)
                            dx[(o * len + l) * inner + i] += g[o * inner + i];
                    });
}

Tensor mean_axis(const Tensor& x, int axis, bool keepdim) {
  const int64_t len = x.dim(axis);
  return scale(sum_axis(x, axis, keepdim), len > 0 ? 1.0 / len : 0.0);
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  return MakeResult("sum", {x}, {}, {s}, [](std::span<const double> g, GradSink& sink) {
    if (!sink.wants(0)) return;
    for (double& d : sink[0]) d += g[0];
  });
}

Tensor mean(const Tensor& x) {
  return scale(sum(x), x.numel() > 0 ? 1.0 / x.numel() : 0.0);
}

Tensor add(const Tensor& a, const Tensor& b) { return BinaryOp(a, b, BinaryKind::kAdd, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return BinaryOp(a, b, BinaryKind::kSub, "sub"); }
Tensor hadamard(const Tensor& a, const Tensor& b) {
  return BinaryOp(a, b, BinaryKind::kMul, "hadamard");
}

Tensor scale(const Tensor& x, double factor) {
  std::vector<double> out(x.data().begin(), x.data().end());
  for (double& v : out) v *= factor;
  return MakeResult("scale", {x}, x.shape(), std::move(out),
                    [factor](std::span<const double> g, GradSink& sink) {
                      if (!sink.wants(0)) return;
                      for (size_t i = 0; i < g.size(); ++i) sink[0][i] += factor * g[i];
                    });
}

Tensor reshape(const Tensor& x, Shape shape) {
  int infer = -1;
  int64_t known = 1;
  for (size_t i = 0; i < shape.size(); ++i) {
    if (shape[i] == -1) {
      if (infer >= 0) throw DimensionError("reshape: more than one -1");
      infer = static_cast<int>(i);
    } else {
      known *= shape[i];
    }
  }
  if (infer >= 0 && known > 0) shape[infer] = x.numel() / known;
  if (NumElements(shape) != x.numel()) {
    throw DimensionError("reshape: cannot view " + ShapeToString(x.shape()) + " as " +
                         ShapeToString(shape));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  return MakeResult("reshape", {x}, std::move(shape), std::move(out),
                    [](std::span<const double> g, GradSink& sink) {
                      if (!sink.wants(0)) return;
                      for (size_t i = 0; i < g.size(); ++i) sink[0][i] += g[i];
                    });
}

Tensor permute(const Tensor& x, const std::vector<int>& order) {
  const int r = x.rank();
  if (static_cast<int>(order.size()) != r) throw DimensionError("permute: rank mismatch");
  std::vector<bool> seen(r, false);
  for (int o : order) {
    if (o < 0 || o >= r || seen[o]) throw DimensionError("permute: invalid order");
    seen[o] = true;
  }
  std::vector<int64_t> in_strides(r, 1);
  for (int i = r - 2; i >= 0; --i) in_strides[i] = in_strides[i + 1] * x.dim(i + 1);
  Shape shape(r);
  std::vector<int64_t> strides(r);
  for (int i = 0; i < r; ++i) {
    shape[i] = x.dim(order[i]);
    strides[i] = in_strides[order[i]];
  }
  const int64_t n = x.numel();
  std::vector<int64_t> src(static_cast<size_t>(n));
  std::vector<int64_t> idx(r, 0);
  int64_t offset = 0;
  for (int64_t flat = 0; flat < n; ++flat) {
    src[flat] = offset;
    for (int d = r - 1; d >= 0; --d) {
      ++idx[d];
      offset += strides[d];
      if (idx[d] < shape[d]) break;
      offset -= strides[d] * idx[d];
      idx[d] = 0;
    }
  }
  std::vector<double> out(static_cast<size_t>(n));
  auto xd = x.data();
  for (int64_t i = 0; i < n; ++i) out[i] = xd[src[i]];
  return MakeResult("permute", {x}, std::move(shape), std::move(out),
                    [src = std::move(src)](std::span<const double> g, GradSink& sink) {
                      if (!sink.wants(0)) return;
                      for (size_t i = 0; i < g.size(); ++i) sink[0][src[i]] += g[i];
                    });
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> labels) {
  RequireRank(logits, 2, "cross_entropy");
  const int64_t b = logits.dim(0), c = logits.dim(1);
  if (static_cast<int64_t>(labels.size()) != b) {
    throw DimensionError("cross_entropy: " + std::to_string(labels.size()) +
                         " labels for batch of " + std::to_string(b));
  }
  auto ld = logits.data();
  std::vector<double> prob(static_cast<size_t>(b * c));
  double loss = 0.0;
  for (int64_t i = 0; i < b; ++i) {
    if (labels[i] < 0 || labels[i] >= c) {
      throw DimensionError("cross_entropy: label " + std::to_string(labels[i]) +
                           " out of range");
    }
    const double* row = ld.data() + i * c;
    const double mx = *std::max_element(row, row + c);
    double z = 0.0;
    for (int64_t j = 0; j < c; ++j) z += std::exp(row[j] - mx);
    for (int64_t j = 0; j < c; ++j) prob[i * c + j] = std::exp(row[j] - mx) / z;
    loss += -(row[labels[i]] - mx - std::log(z));
  }
  loss /= static_cast<double>(b);
  std::vector<int> lab(labels.begin(), labels.end());
  return MakeResult("cross_entropy", {logits}, {}, {loss},
                    [prob = std::move(prob), lab = std::move(lab), b, c](
                        std::span<const double> g, GradSink& sink) {
                      if (!sink.wants(0)) return;
                      auto dx = sink[0];
                      const double k = g[0] / static_cast<double>(b);
                      for (int64_t i = 0; i < b; ++i)
                        for (int64_t j = 0; j < c; ++j)
                          dx[i * c + j] +=
                              k * (prob[i * c + j] - (j == lab[i] ? 1.0 : 0.0));
                    });
}

}  // namespace qkspike
