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

#ifndef TRIONAS_OPERATORS_HPP_
#define TRIONAS_OPERATORS_HPP_

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "trionas/ops.hpp"
#include "trionas/tensor.hpp"

namespace trionas {

// One executed layer, as seen by the layer-walking cost oracle.
struct LayerRecord {
  std::string kind;  // conv, bn, relu, add, pool, attention, gap, fc
  Shape input;
  Shape output;
  Shape weight;      // conv / fc weight; attention: positional table
  int heads = 0;     // attention
  int64_t keys = 0;  // attention: keys per query counted by the cost model
  int64_t dq = 0;    // attention, per head
  int64_t dv = 0;
};
using LayerTrace = std::vector<LayerRecord>;

struct BatchNormParams {
  Tensor gamma;
  Tensor beta;
};

struct ConvParams {
  Tensor weight;  // (c_out, c_in, k, k); padding k / 2
  int stride = 1;
};

// Stacked per-head projections: rows [n * dq, (n + 1) * dq) belong to head n.
struct LocalAttentionParams {
  Tensor wq;  // (heads * dq, d_in)
  Tensor wk;  // (heads * dq, d_in)
  Tensor wv;  // (heads * dv, d_in)
  Tensor r;   // (heads * dq, window * window)
  int window = 3;
  int heads = 1;
};

struct AxialPassParams {
  Tensor wq;
  Tensor wk;
  Tensor wv;
  Tensor r;  // (heads * dq, 2 * axis_length - 1)
};

// Height pass followed by a width pass; both share heads / dq / dv.
struct AxialAttentionParams {
  AxialPassParams height;
  AxialPassParams width;
  int heads = 1;
};

// 1x1 projection with a (c_out, c_in) matrix.
Tensor pointwise(const Tensor& x, const Tensor& weight, LayerTrace* trace = nullptr);

Tensor conv_forward(const Tensor& x, const ConvParams& p, LayerTrace* trace = nullptr);

// Zero-padded local self-attention; keys outside the map are excluded from
// the softmax.
Tensor local_attention_forward(const Tensor& x, const LocalAttentionParams& p,
                               LayerTrace* trace = nullptr,
                               std::vector<Real>* weights = nullptr);

Tensor axial_attention_forward(const Tensor& x, const AxialAttentionParams& p,
                               LayerTrace* trace = nullptr);

using SpatialOp = std::variant<ConvParams, LocalAttentionParams, AxialAttentionParams>;

// Bottleneck residual block hosting one spatial operator:
//   relu(shortcut(x) + BN(up(relu(BN(op(relu(BN(down(x)))))))))
// Attention operators downsample by 2x2 average pooling before attending.
struct TrioBlockParams {
  Tensor proj_down;  // (inner, c_in)
  BatchNormParams bn_down;
  SpatialOp op;
  BatchNormParams bn_op;
  Tensor proj_up;  // (c_out, op_channels)
  BatchNormParams bn_up;
  std::optional<Tensor> shortcut;  // (c_out, c_in), strided 1x1
  BatchNormParams bn_shortcut;
  int stride = 1;
};

struct TrioBlockStats {
  BatchNormStats down;
  BatchNormStats op;
  BatchNormStats up;
  BatchNormStats shortcut;
};

Tensor trio_block_forward(const Tensor& x, const TrioBlockParams& block,
                          TrioBlockStats& stats, BnMode mode,
                          LayerTrace* trace = nullptr);

// batchnorm2d that also appends a trace record.
Tensor traced_batchnorm(const Tensor& x, const BatchNormParams& p,
                        BatchNormStats& stats, BnMode mode, LayerTrace* trace);
Tensor traced_relu(const Tensor& x, LayerTrace* trace);

}  // namespace trionas

#endif  // TRIONAS_OPERATORS_HPP_
