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

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <random>
#include <thread>
#include <unordered_map>

#include "qkspike/analysis.h"

namespace qkspike {

namespace {

constexpr int64_t kChunk = 4096;

void CheckRate(double f, const char* name) {
  if (!(f >= 0.0 && f <= 1.0)) {
    throw ConfigError(std::string(name) + " must lie in [0, 1], got " + std::to_string(f));
  }
}

// P(u < threshold) == f for u uniform on 64 bits (up to 2^-64).
uint64_t Threshold(double f) {
  if (f >= 1.0) return std::numeric_limits<uint64_t>::max();
  return static_cast<uint64_t>(std::ldexp(f, 64));
}

bool Bit(Rng& rng, uint64_t threshold, double f) {
  if (f >= 1.0) return true;
  return rng() < threshold;
}

int64_t CountBernoulli(Rng& rng, int64_t n, double f) {
  if (f == 0.5) {
    int64_t count = 0;
    for (int64_t done = 0; done < n; done += 64) {
      uint64_t word = rng();
      if (n - done < 64) word &= (uint64_t{1} << (n - done)) - 1;
      count += std::popcount(word);
    }
    return count;
  }
  const uint64_t t = Threshold(f);
  int64_t count = 0;
  for (int64_t i = 0; i < n; ++i) count += Bit(rng, t, f);
  return count;
}

int64_t SsaElement(Rng& rng, int64_t n, const StatParams& p) {
  if (p.f_q == 0.5 && p.f_k == 0.5 && p.f_v == 0.5) {
    int64_t count = 0;
    for (int64_t done = 0; done < n; done += 64) {
      uint64_t word = rng() & rng() & rng();
      if (n - done < 64) word &= (uint64_t{1} << (n - done)) - 1;
      count += std::popcount(word);
    }
    return count;
  }
  const uint64_t tq = Threshold(p.f_q), tk = Threshold(p.f_k), tv = Threshold(p.f_v);
  int64_t count = 0;
  for (int64_t i = 0; i < n; ++i) {
    const bool q = Bit(rng, tq, p.f_q);
    const bool k = Bit(rng, tk, p.f_k);
    const bool v = Bit(rng, tv, p.f_v);
    count += q && k && v;
  }
  return count;
}

// Binomial thinning with distributions cached by n; one cache per chunk so a
// chunk's draws never depend on state left by another chunk.
class Thinner {
 public:
  explicit Thinner(double f) : f_(f) {}
  int64_t operator()(Rng& rng, int64_t n) {
    if (n == 0 || f_ == 0.0) return 0;
    if (f_ == 1.0) return n;
    auto it = cache_.find(n);
    if (it == cache_.end()) it = cache_.emplace(n, Binomial(n, f_)).first;
    return it->second(rng);
  }

 private:
  using Binomial = std::binomial_distribution<int64_t>;
  double f_;
  std::unordered_map<int64_t, Binomial> cache_;
};

struct SsaThinning {
  Thinner q, k, v, qkv;
  explicit SsaThinning(const StatParams& p)
      : q(p.f_q), k(p.f_k), v(p.f_v), qkv(p.f_q * p.f_k * p.f_v) {}
  int64_t operator()(Rng& rng, int64_t n) { return v(rng, k(rng, q(rng, n))); }
  // Products of independent spikes are Bernoulli(f_Q f_K f_V).
  int64_t product(Rng& rng, int64_t n) { return qkv(rng, n); }
};

Rng ChunkRng(uint64_t seed, int64_t chunk) {
  std::seed_seq seq{static_cast<uint32_t>(seed), static_cast<uint32_t>(seed >> 32),
                    static_cast<uint32_t>(chunk), static_cast<uint32_t>(chunk >> 32)};
  return Rng(seq);
}

}  // namespace

const char* StatKindName(StatKind kind) {
  switch (kind) {
    case StatKind::kQkta: return "qkta";
    case StatKind::kQkca: return "qkca";
    case StatKind::kSsa: return "ssa";
  }
  return "?";
}

StatKind ParseStatKind(std::string_view name) {
  if (name == "qkta") return StatKind::kQkta;
  if (name == "qkca") return StatKind::kQkca;
  if (name == "ssa") return StatKind::kSsa;
  throw ConfigError("unknown statistic '" + std::string(name) + "'");
}

void StatParams::Validate() const {
  if (head_dim < 1 || tokens < 1) throw ConfigError("head_dim and tokens must be >= 1");
  CheckRate(f_q, "f_q");
  CheckRate(f_k, "f_k");
  CheckRate(f_v, "f_v");
}

StatResult qk_attention_stats(QkAxis axis, int64_t dim, double f_q) {
  StatParams p;
  p.kind = axis == QkAxis::kToken ? StatKind::kQkta : StatKind::kQkca;
  if (axis == QkAxis::kToken) p.head_dim = dim; else p.tokens = dim;
  p.f_q = f_q;
  p.Validate();
  const double d = static_cast<double>(dim);
  return {d * f_q, d * f_q * (1.0 - f_q), p};
}

StatResult ssa_stats(int64_t tokens, int64_t head_dim, double f_q, double f_k, double f_v) {
  StatParams p{StatKind::kSsa, head_dim, tokens, f_q, f_k, f_v};
  p.Validate();
  const double nd = static_cast<double>(tokens) * static_cast<double>(head_dim);
  const double q = f_q, k = f_k, v = f_v;
  const double gq = 1.0 - q, gk = 1.0 - k, gv = 1.0 - v;
  const double terms = q * k * v * gq * gk * gv
                     + q * k * v * v * gq * gk
                     + q * k * k * v * gq * gv
                     + q * q * k * v * gk * gv
                     + q * k * k * v * v * gq
                     + q * q * k * v * v * gk
                     + q * q * k * k * v * gv;
  return {nd * q * k * v, nd * terms, p};
}

StatResult closed_form_stats(const StatParams& p) {
  switch (p.kind) {
    case StatKind::kQkta: return qk_attention_stats(QkAxis::kToken, p.head_dim, p.f_q);
    case StatKind::kQkca: {
      StatResult r = qk_attention_stats(QkAxis::kChannel, p.tokens, p.f_q);
      r.params = p;
      return r;
    }
    case StatKind::kSsa: return ssa_stats(p.tokens, p.head_dim, p.f_q, p.f_k, p.f_v);
  }
  throw ConfigError("unknown statistic");
}

McResult mc_verify(const StatParams& params, const McOptions& options) {
  params.Validate();
  if (options.samples < 10000) throw ConfigError("mc_verify needs at least 10^4 samples");
  if (options.threads < 1) throw ConfigError("mc_verify threads must be >= 1");
  McSampler sampler = options.sampler;
  if ((sampler == McSampler::kHierarchical || sampler == McSampler::kProduct) &&
      params.kind != StatKind::kSsa) {
    throw ConfigError("binomial samplers apply to SSA only");
  }
  if (sampler == McSampler::kAuto) {
    sampler = params.kind == StatKind::kSsa ? McSampler::kProduct : McSampler::kElement;
  }

  McResult result;
  result.closed = closed_form_stats(params);
  const int64_t n = params.kind == StatKind::kQkta   ? params.head_dim
                    : params.kind == StatKind::kQkca ? params.tokens
                                                     : params.tokens * params.head_dim;
  auto draw = [&](Rng& rng, SsaThinning& thinning) -> int64_t {
    switch (params.kind) {
      case StatKind::kQkta:
      case StatKind::kQkca: return CountBernoulli(rng, n, params.f_q);
      case StatKind::kSsa:
        if (sampler == McSampler::kHierarchical) return thinning(rng, n);
        if (sampler == McSampler::kProduct) return thinning.product(rng, n);
        return SsaElement(rng, n, params);
    }
    return 0;
  };

  // Integer outcomes are tallied in histograms, so merging is exact and the
  // result does not depend on how chunks were spread over threads.
  const int64_t chunks = (options.samples + kChunk - 1) / kChunk;
  const int workers = static_cast<int>(std::min<int64_t>(options.threads, chunks));
  std::vector<std::vector<int64_t>> hist(workers, std::vector<int64_t>(n + 1, 0));
  auto work = [&](int w) {
    for (int64_t c = w; c < chunks; c += workers) {
      Rng rng = ChunkRng(options.seed, c);
      SsaThinning thinning(params);
      const int64_t count = std::min(kChunk, options.samples - c * kChunk);
      for (int64_t i = 0; i < count; ++i) ++hist[w][draw(rng, thinning)];
    }
  };
  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work, w);
    for (auto& t : pool) t.join();
  }
  std::vector<int64_t> total(n + 1, 0);
  for (const auto& h : hist)
    for (int64_t v = 0; v <= n; ++v) total[v] += h[v];

  const double s = static_cast<double>(options.samples);
  double mean = 0.0;
  for (int64_t v = 0; v <= n; ++v) mean += static_cast<double>(v) * total[v];
  mean /= s;
  double m2 = 0.0, m4 = 0.0;
  for (int64_t v = 0; v <= n; ++v) {
    if (!total[v]) continue;
    const double d = static_cast<double>(v) - mean, d2 = d * d;
    m2 += d2 * total[v];
    m4 += d2 * d2 * total[v];
  }
  m2 /= s;
  m4 /= s;
  const double var = m2 * s / (s - 1.0);
  result.mean = mean;
  result.variance = var;
  result.se_mean = std::sqrt(var / s);
  result.se_variance = std::sqrt(std::max(0.0, (m4 - var * var * (s - 3.0) / (s - 1.0)) / s));

  auto within = [&](double got, double want, double se) {
    const double tol = std::max(options.relative_tolerance * std::abs(want),
                                options.standard_errors * se);
    return std::abs(got - want) <= tol;
  };
  result.mean_ok = within(mean, result.closed.expectation, result.se_mean);
  result.variance_ok = within(var, result.closed.variance, result.se_variance);
  return result;
}

}  // namespace qkspike
