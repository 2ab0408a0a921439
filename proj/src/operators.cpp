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

#include "trionas/operators.hpp"

#include <sstream>

namespace trionas {

namespace {

void trace_push(LayerTrace* trace, LayerRecord r) {
  if (trace != nullptr) trace->push_back(std::move(r));
}

void require(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

Tensor matrix_as_conv(const Tensor& w) {
  require(w.rank() == 2, "pointwise: weight must be rank 2, got " + shape_str(w.shape()));
  return reshape(w, {w.dim(0), w.dim(1), 1, 1});
}

void check_heads(const char* op, int64_t rows, int heads, const char* what) {
  if (heads <= 0 || rows % heads != 0) {
    std::ostringstream os;
    os << op << ": " << what << " width " << rows << " not divisible by heads=" << heads;
    throw ShapeError(os.str());
  }
}

Tensor attention_pass(const char* op, const Tensor& x, const Tensor& wq,
                      const Tensor& wk, const Tensor& wv, const Tensor& r,
                      int heads, const NeighborTable& table, int64_t keys,
                      LayerTrace* trace, std::vector<Real>* weights) {
  check_heads(op, wq.dim(0), heads, "query");
  check_heads(op, wv.dim(0), heads, "value");
  require(wk.shape() == wq.shape(), std::string(op) + ": key weight " +
                                        shape_str(wk.shape()) + " != query weight " +
                                        shape_str(wq.shape()));
  const Tensor q = pointwise(x, wq, trace);
  const Tensor k = pointwise(x, wk, trace);
  const Tensor v = pointwise(x, wv, trace);
  Tensor y = neighborhood_attention(q, k, v, r, heads, table, weights);
  trace_push(trace, {"attention", q.shape(), y.shape(), r.shape(), heads, keys,
                     wq.dim(0) / heads, wv.dim(0) / heads});
  return y;
}

}  // namespace

Tensor pointwise(const Tensor& x, const Tensor& weight, LayerTrace* trace) {
  Tensor y = conv2d(x, matrix_as_conv(weight), 1, 0);
  trace_push(trace, {"conv", x.shape(), y.shape(), {weight.dim(0), weight.dim(1), 1, 1}});
  return y;
}

Tensor conv_forward(const Tensor& x, const ConvParams& p, LayerTrace* trace) {
  require(p.weight.rank() == 4, "conv: weight must be rank 4, got " +
                                    shape_str(p.weight.shape()));
  const int64_t k = p.weight.dim(2);
  require(k % 2 == 1 && p.weight.dim(3) == k,
          "conv: kernel must be square and odd, got " + shape_str(p.weight.shape()));
  Tensor y = conv2d(x, p.weight, p.stride, static_cast<int>(k / 2));
  trace_push(trace, {"conv", x.shape(), y.shape(), p.weight.shape()});
  return y;
}

Tensor local_attention_forward(const Tensor& x, const LocalAttentionParams& p,
                               LayerTrace* trace, std::vector<Real>* weights) {
  if (p.window <= 0 || p.window % 2 == 0) {
    throw ShapeError("local_attention: window must be odd and positive, got " +
                     std::to_string(p.window));
  }
  require(x.rank() == 4, "local_attention: input must be rank 4, got " + shape_str(x.shape()));
  const int64_t m2 = static_cast<int64_t>(p.window) * p.window;
  require(p.r.rank() == 2 && p.r.dim(1) == m2,
          "local_attention: positional table " + shape_str(p.r.shape()) +
              " does not match window " + std::to_string(p.window));
  const NeighborTable table = NeighborTable::window(x.dim(2), x.dim(3), p.window);
  return attention_pass("local_attention", x, p.wq, p.wk, p.wv, p.r, p.heads, table,
                        m2, trace, weights);
}

Tensor axial_attention_forward(const Tensor& x, const AxialAttentionParams& p,
                               LayerTrace* trace) {
  require(x.rank() == 4, "axial_attention: input must be rank 4, got " + shape_str(x.shape()));
  const NeighborTable column = NeighborTable::line(x.dim(2), x.dim(3), 0);
  const NeighborTable row = NeighborTable::line(x.dim(2), x.dim(3), 1);
  const Tensor h = attention_pass("axial_attention", x, p.height.wq, p.height.wk,
                                  p.height.wv, p.height.r, p.heads, column,
                                  x.dim(2), trace, nullptr);
  return attention_pass("axial_attention", h, p.width.wq, p.width.wk, p.width.wv,
                        p.width.r, p.heads, row, x.dim(3), trace, nullptr);
}

Tensor traced_batchnorm(const Tensor& x, const BatchNormParams& p,
                        BatchNormStats& stats, BnMode mode, LayerTrace* trace) {
  Tensor y = batchnorm2d(x, p.gamma, p.beta, stats, mode);
  trace_push(trace, {"bn", x.shape(), y.shape(), {}});
  return y;
}

Tensor traced_relu(const Tensor& x, LayerTrace* trace) {
  Tensor y = relu(x);
  trace_push(trace, {"relu", x.shape(), y.shape(), {}});
  return y;
}

Tensor trio_block_forward(const Tensor& x, const TrioBlockParams& block,
                          TrioBlockStats& stats, BnMode mode, LayerTrace* trace) {
  if (block.stride != 1 && block.stride != 2) {
    throw ShapeError("trio_block: stride must be 1 or 2, got " + std::to_string(block.stride));
  }
  Tensor h = pointwise(x, block.proj_down, trace);
  h = traced_batchnorm(h, block.bn_down, stats.down, mode, trace);
  h = traced_relu(h, trace);

  if (const auto* conv = std::get_if<ConvParams>(&block.op)) {
    ConvParams strided = *conv;
    strided.stride = block.stride;
    h = conv_forward(h, strided, trace);
  } else {
    if (block.stride == 2) {
      const Tensor in = h;
      h = avg_pool2x2(h);
      trace_push(trace, {"pool", in.shape(), h.shape(), {}});
    }
    if (const auto* local = std::get_if<LocalAttentionParams>(&block.op)) {
      h = local_attention_forward(h, *local, trace);
    } else {
      h = axial_attention_forward(h, std::get<AxialAttentionParams>(block.op), trace);
    }
  }
  h = traced_batchnorm(h, block.bn_op, stats.op, mode, trace);
  h = traced_relu(h, trace);
  h = pointwise(h, block.proj_up, trace);
  h = traced_batchnorm(h, block.bn_up, stats.up, mode, trace);

  Tensor skip = x;
  if (block.shortcut) {
    Tensor w = matrix_as_conv(*block.shortcut);
    skip = conv2d(x, w, block.stride, 0);
    trace_push(trace, {"conv", x.shape(), skip.shape(), w.shape()});
    skip = traced_batchnorm(skip, block.bn_shortcut, stats.shortcut, mode, trace);
  }
  require(skip.shape() == h.shape(), "trio_block: residual " + shape_str(skip.shape()) +
                                         " != branch " + shape_str(h.shape()));
  Tensor y = add(h, skip);
  trace_push(trace, {"add", h.shape(), y.shape(), {}});
  return traced_relu(y, trace);
}

}  // namespace trionas
