// Copyright 2026 The TrioNAS Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef TRIONAS_OPS_HPP_
#define TRIONAS_OPS_HPP_

#include <cstdint>
#include <span>
#include <vector>

#include "trionas/tensor.hpp"

// Differentiable primitives. Feature maps are (batch, channels, height,
// width). Every primitive validates shapes and rejects non-finite inputs.
namespace trionas {

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor conv2d(const Tensor& x, const Tensor& weight, int stride, int padding);
Tensor add(const Tensor& a, const Tensor& b);
// x: (B, C, ...), bias: (C).
Tensor add_bias(const Tensor& x, const Tensor& bias);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor reshape(const Tensor& x, Shape shape);
Tensor permute(const Tensor& x, const std::vector<int>& order);
Tensor softmax(const Tensor& x, int axis);
Tensor relu(const Tensor& x);
// Sum of all elements, shape [1].
Tensor reduce_sum(const Tensor& x);
Tensor reduce_mean(const Tensor& x, int axis);
// 2x2 average pooling with stride 2; spatial dims must be even.
Tensor avg_pool2x2(const Tensor& x);
// Flat gather: out[i] = x[index[i]]. Backward scatter-adds into x.
Tensor gather(const Tensor& x, std::span<const int64_t> index, Shape shape);

enum class BnMode {
  kTrain,        // batch statistics, running stats updated with momentum
  kEval,         // running statistics, deterministic affine map
  kRecalibrate,  // batch statistics, running stats as a cumulative average
};

struct BatchNormStats {
  Tensor mean;
  Tensor var;
  int64_t batches = 0;  // number of kRecalibrate updates since reset

  static BatchNormStats fresh(int64_t channels);
  void reset();
  BatchNormStats clone() const;
};

inline constexpr Real kBnMomentum = Real(0.1);
inline constexpr Real kBnEpsilon = Real(1e-5);

Tensor batchnorm2d(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                   BatchNormStats& stats, BnMode mode);

// Mean over the batch of cross entropy against (1 - eps) one-hot + eps / C.
Tensor cross_entropy(const Tensor& logits, std::span<const int> labels,
                     Real smoothing);

// Key positions and relative-offset indices attended by each query position
// of an h x w map, stored in compressed-row form.
struct NeighborTable {
  int64_t height = 0;
  int64_t width = 0;
  int64_t rel_count = 0;  // second axis of the positional table
  std::vector<int32_t> offsets;  // positions + 1
  std::vector<int32_t> keys;
  std::vector<int32_t> rel;

  int64_t positions() const { return height * width; }
  // m x m window centred on each query; keys outside the map are dropped.
  // The positional table is indexed by (dy + m/2) * m + (dx + m/2).
  static NeighborTable window(int64_t h, int64_t w, int m);
  // Whole column (axis 0) or whole row (axis 1); positional table indexed by
  // key - query + (L - 1) over a span of 2L - 1.
  static NeighborTable line(int64_t h, int64_t w, int axis);
};

// Multi-head attention over a neighbor table:
//   y_o = sum_p softmax_p(q_o . k_p + q_o . r_{rel(o,p)}) v_p
// q, k: (B, heads * dq, H, W); v: (B, heads * dv, H, W);
// r: (heads * dq, rel_count). Returns (B, heads * dv, H, W).
// When `weights` is non-null it receives the attention probabilities laid out
// as [batch][head][table entry].
Tensor neighborhood_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                              const Tensor& r, int heads,
                              const NeighborTable& table,
                              std::vector<Real>* weights = nullptr);

}  // namespace trionas

#endif  // TRIONAS_OPS_HPP_
