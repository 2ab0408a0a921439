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

#include "trionas/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "gemm.hpp"

namespace trionas {

namespace {

void check_finite(const char* kind, const Tensor& t) {
  for (Real v : t.data()) {
    if (!std::isfinite(v)) {
      throw NonFiniteError(std::string(kind) + ": non-finite input of shape " +
                           shape_str(t.shape()));
    }
  }
}

[[noreturn]] void shape_fail(const char* kind, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(kind) + ": incompatible shapes " + shape_str(a) +
                   " and " + shape_str(b));
}

void require_rank(const char* kind, const Tensor& t, int rank) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(kind) + ": expected rank " +
                     std::to_string(rank) + ", got " + shape_str(t.shape()));
  }
}

Tensor make_output(Shape shape, bool record) {
  return Tensor::zeros(std::move(shape), record);
}

int normalize_axis(const char* kind, int axis, int rank) {
  if (axis < 0) axis += rank;
  if (axis < 0 || axis >= rank) {
    throw ShapeError(std::string(kind) + ": axis " + std::to_string(axis) +
                     " out of range for rank " + std::to_string(rank));
  }
  return axis;
}

// (C*k*k, B*Ho*Wo) patch matrix.
void im2col(const Real* x, int64_t B, int64_t C, int64_t H, int64_t W, int k,
            int stride, int pad, int64_t Ho, int64_t Wo, Real* cols) {
  const int64_t P = Ho * Wo;
  const int64_t ncols = B * P;
  for (int64_t c = 0; c < C; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        Real* row = cols + ((c * k + ky) * k + kx) * ncols;
        for (int64_t b = 0; b < B; ++b) {
          const Real* plane = x + (b * C + c) * H * W;
          Real* dst = row + b * P;
          for (int64_t oy = 0; oy < Ho; ++oy) {
            const int64_t iy = oy * stride - pad + ky;
            if (iy < 0 || iy >= H) {
              std::fill(dst + oy * Wo, dst + (oy + 1) * Wo, Real(0));
              continue;
            }
            for (int64_t ox = 0; ox < Wo; ++ox) {
              const int64_t ix = ox * stride - pad + kx;
              dst[oy * Wo + ox] =
                  (ix >= 0 && ix < W) ? plane[iy * W + ix] : Real(0);
            }
          }
        }
      }
    }
  }
}

void col2im(const Real* cols, int64_t B, int64_t C, int64_t H, int64_t W, int k,
            int stride, int pad, int64_t Ho, int64_t Wo, Real* gx) {
  const int64_t P = Ho * Wo;
  const int64_t ncols = B * P;
  for (int64_t c = 0; c < C; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const Real* row = cols + ((c * k + ky) * k + kx) * ncols;
        for (int64_t b = 0; b < B; ++b) {
          Real* plane = gx + (b * C + c) * H * W;
          const Real* src = row + b * P;
          for (int64_t oy = 0; oy < Ho; ++oy) {
            const int64_t iy = oy * stride - pad + ky;
            if (iy < 0 || iy >= H) continue;
            for (int64_t ox = 0; ox < Wo; ++ox) {
              const int64_t ix = ox * stride - pad + kx;
              if (ix >= 0 && ix < W) plane[iy * W + ix] += src[oy * Wo + ox];
            }
          }
        }
      }
    }
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank("matmul", a, 2);
  require_rank("matmul", b, 2);
  if (a.dim(1) != b.dim(0)) shape_fail("matmul", a.shape(), b.shape());
  check_finite("matmul", a);
  check_finite("matmul", b);
  const int64_t M = a.dim(0), K = a.dim(1), N = b.dim(1);
  const bool record = should_record({&a, &b});
  Tensor out = make_output({M, N}, record);
  gemm(false, false, M, N, K, Real(1), a.ptr(), K, b.ptr(), N, Real(0),
       out.ptr(), N);
  if (record) {
    Tape::active()->record("matmul", out, [a, b, out, M, N, K]() mutable {
      const Real* g = out.grad().data();
      if (a.requires_grad())
        gemm(false, true, M, K, N, Real(1), g, N, b.ptr(), N, Real(1),
             a.grad().data(), K);
      if (b.requires_grad())
        gemm(true, false, K, N, M, Real(1), a.ptr(), K, g, N, Real(1),
             b.grad().data(), N);
    });
  }
  return out;
}

Tensor conv2d(const Tensor& x, const Tensor& weight, int stride, int padding) {
  require_rank("conv2d", x, 4);
  require_rank("conv2d", weight, 4);
  const int64_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int64_t O = weight.dim(0);
  const int k = static_cast<int>(weight.dim(2));
  if (weight.dim(1) != C || weight.dim(3) != k || stride < 1 || padding < 0 ||
      H + 2 * padding < k || W + 2 * padding < k) {
    shape_fail("conv2d", x.shape(), weight.shape());
  }
  check_finite("conv2d", x);
  check_finite("conv2d", weight);
  const int64_t Ho = (H + 2 * padding - k) / stride + 1;
  const int64_t Wo = (W + 2 * padding - k) / stride + 1;
  const int64_t P = Ho * Wo;
  const int64_t KK = C * k * k;
  const bool record = should_record({&x, &weight});
  Tensor out = make_output({B, O, Ho, Wo}, record);

  std::vector<Real> cols(static_cast<std::size_t>(KK * B * P));
  im2col(x.ptr(), B, C, H, W, k, stride, padding, Ho, Wo, cols.data());
  std::vector<Real> y(static_cast<std::size_t>(O * B * P));
  gemm(false, false, O, B * P, KK, Real(1), weight.ptr(), KK, cols.data(),
       B * P, Real(0), y.data(), B * P);
  Real* o = out.ptr();
  for (int64_t oc = 0; oc < O; ++oc)
    for (int64_t b = 0; b < B; ++b)
      std::copy_n(y.data() + oc * B * P + b * P, P, o + (b * O + oc) * P);

  if (record) {
    Tape::active()->record(
        "conv2d", out,
        [x, weight, out, B, C, H, W, O, k, stride, padding, Ho, Wo, P,
         KK]() mutable {
          const Real* g = out.grad().data();
          std::vector<Real> gy(static_cast<std::size_t>(O * B * P));
          for (int64_t oc = 0; oc < O; ++oc)
            for (int64_t b = 0; b < B; ++b)
              std::copy_n(g + (b * O + oc) * P, P,
                          gy.data() + oc * B * P + b * P);
          std::vector<Real> cols(static_cast<std::size_t>(KK * B * P));
          if (weight.requires_grad()) {
            im2col(x.ptr(), B, C, H, W, k, stride, padding, Ho, Wo,
                   cols.data());
            gemm(false, true, O, KK, B * P, Real(1), gy.data(), B * P,
                 cols.data(), B * P, Real(1), weight.grad().data(), KK);
          }
          if (x.requires_grad()) {
            gemm(true, false, KK, B * P, O, Real(1), weight.ptr(), KK,
                 gy.data(), B * P, Real(0), cols.data(), B * P);
            col2im(cols.data(), B, C, H, W, k, stride, padding, Ho, Wo,
                   x.grad().data());
          }
        });
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_fail("add", a.shape(), b.shape());
  check_finite("add", a);
  check_finite("add", b);
  const bool record = should_record({&a, &b});
  Tensor out = make_output(a.shape(), record);
  auto o = out.data();
  auto ad = a.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = ad[i] + bd[i];
  if (record) {
    Tape::active()->record("add", out, [a, b, out]() mutable {
      auto g = out.grad();
      if (a.requires_grad()) {
        auto ga = a.grad();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (b.requires_grad()) {
        auto gb = b.grad();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
      }
    });
  }
  return out;
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  if (x.rank() < 2 || bias.rank() != 1 || bias.dim(0) != x.dim(1)) {
    shape_fail("add_bias", x.shape(), bias.shape());
  }
  check_finite("add_bias", x);
  check_finite("add_bias", bias);
  const int64_t B = x.dim(0), C = x.dim(1);
  const int64_t inner = x.numel() / (B * C);
  const bool record = should_record({&x, &bias});
  Tensor out = make_output(x.shape(), record);
  const Real* xp = x.ptr();
  const Real* bp = bias.ptr();
  Real* op = out.ptr();
  for (int64_t b = 0; b < B; ++b)
    for (int64_t c = 0; c < C; ++c)
      for (int64_t i = 0; i < inner; ++i) {
        const int64_t idx = (b * C + c) * inner + i;
        op[idx] = xp[idx] + bp[c];
      }
  if (record) {
    Tape::active()->record("add_bias", out, [x, bias, out, B, C, inner]() mutable {
      auto g = out.grad();
      if (x.requires_grad()) {
        auto gx = x.grad();
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
      }
      if (bias.requires_grad()) {
        auto gb = bias.grad();
        for (int64_t b = 0; b < B; ++b)
          for (int64_t c = 0; c < C; ++c)
            for (int64_t i = 0; i < inner; ++i)
              gb[c] += g[(b * C + c) * inner + i];
      }
    });
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_fail("mul", a.shape(), b.shape());
  check_finite("mul", a);
  check_finite("mul", b);
  const bool record = should_record({&a, &b});
  Tensor out = make_output(a.shape(), record);
  auto o = out.data();
  auto ad = a.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = ad[i] * bd[i];
  if (record) {
    Tape::active()->record("mul", out, [a, b, out]() mutable {
      auto g = out.grad();
      if (a.requires_grad()) {
        auto ga = a.grad();
        auto bd = b.data();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bd[i];
      }
      if (b.requires_grad()) {
        auto gb = b.grad();
        auto ad = a.data();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * ad[i];
      }
    });
  }
  return out;
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const int rank = parts[0].rank();
  axis = normalize_axis("concat", axis, rank);
  Shape shape = parts[0].shape();
  int64_t total = 0;
  for (const Tensor& p : parts) {
    if (p.rank() != rank) shape_fail("concat", parts[0].shape(), p.shape());
    for (int d = 0; d < rank; ++d) {
      if (d != axis && p.dim(d) != shape[static_cast<std::size_t>(d)])
        shape_fail("concat", parts[0].shape(), p.shape());
    }
    check_finite("concat", p);
    total += p.dim(axis);
  }
  shape[static_cast<std::size_t>(axis)] = total;
  int64_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= shape[static_cast<std::size_t>(d)];
  for (int d = axis + 1; d < rank; ++d) inner *= shape[static_cast<std::size_t>(d)];
  bool record = false;
  for (const Tensor& p : parts) record = record || should_record({&p});
  Tensor out = make_output(shape, record);
  Real* op = out.ptr();
  int64_t offset = 0;
  for (const Tensor& p : parts) {
    const int64_t len = p.dim(axis) * inner;
    for (int64_t o = 0; o < outer; ++o)
      std::copy_n(p.ptr() + o * len, len, op + o * total * inner + offset);
    offset += len;
  }
  if (record) {
    Tape::active()->record("concat", out, [parts, out, outer, inner, total,
                                           axis]() mutable {
      const Real* g = out.grad().data();
      int64_t offset = 0;
      for (const Tensor& p : parts) {
        const int64_t len = p.dim(axis) * inner;
        if (p.requires_grad()) {
          Real* gp = p.grad().data();
          for (int64_t o = 0; o < outer; ++o)
            for (int64_t i = 0; i < len; ++i)
              gp[o * len + i] += g[o * total * inner + offset + i];
        }
        offset += len;
      }
    });
  }
  return out;
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) shape_fail("reshape", x.shape(), shape);
  check_finite("reshape", x);
  const bool record = should_record({&x});
  Tensor out = Tensor::from(shape, std::vector<Real>(x.data().begin(), x.data().end()),
                            record);
  if (record) {
    Tape::active()->record("reshape", out, [x, out]() mutable {
      auto g = out.grad();
      auto gx = x.grad();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    });
  }
  return out;
}

Tensor permute(const Tensor& x, const std::vector<int>& order) {
  const int rank = x.rank();
  std::vector<int> sorted(order);
  std::sort(sorted.begin(), sorted.end());
  std::vector<int> expect(static_cast<std::size_t>(rank));
  std::iota(expect.begin(), expect.end(), 0);
  if (sorted != expect) {
    Shape as_shape(order.begin(), order.end());
    shape_fail("permute", x.shape(), as_shape);
  }
  check_finite("permute", x);
  Shape shape(static_cast<std::size_t>(rank));
  std::vector<int64_t> in_strides(static_cast<std::size_t>(rank));
  int64_t s = 1;
  for (int d = rank - 1; d >= 0; --d) {
    in_strides[static_cast<std::size_t>(d)] = s;
    s *= x.dim(d);
  }
  std::vector<int64_t> src_stride(static_cast<std::size_t>(rank));
  for (int d = 0; d < rank; ++d) {
    shape[static_cast<std::size_t>(d)] = x.dim(order[static_cast<std::size_t>(d)]);
    src_stride[static_cast<std::size_t>(d)] =
        in_strides[static_cast<std::size_t>(order[static_cast<std::size_t>(d)])];
  }
  // map[i] = source index of output element i
  const int64_t n = x.numel();
  std::vector<int64_t> map(static_cast<std::size_t>(n));
  std::vector<int64_t> idx(static_cast<std::size_t>(rank), 0);
  for (int64_t i = 0; i < n; ++i) {
    int64_t src = 0;
    for (int d = 0; d < rank; ++d)
      src += idx[static_cast<std::size_t>(d)] * src_stride[static_cast<std::size_t>(d)];
    map[static_cast<std::size_t>(i)] = src;
    for (int d = rank - 1; d >= 0; --d) {
      auto& v = idx[static_cast<std::size_t>(d)];
      if (++v < shape[static_cast<std::size_t>(d)]) break;
      v = 0;
    }
  }
  return gather(x, map, shape);
}

Tensor softmax(const Tensor& x, int axis) {
  axis = normalize_axis("softmax", axis, x.rank());
  check_finite("softmax", x);
  const int64_t n = x.dim(axis);
  int64_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= x.dim(d);
  for (int d = axis + 1; d < x.rank(); ++d) inner *= x.dim(d);
  const bool record = should_record({&x});
  Tensor out = make_output(x.shape(), record);
  const Real* xp = x.ptr();
  Real* op = out.ptr();
  for (int64_t o = 0; o < outer; ++o) {
    for (int64_t i = 0; i < inner; ++i) {
      const int64_t base = o * n * inner + i;
      Real mx = xp[base];
      for (int64_t j = 1; j < n; ++j) mx = std::max(mx, xp[base + j * inner]);
      Real sum = 0;
      for (int64_t j = 0; j < n; ++j) {
        const Real e = std::exp(xp[base + j * inner] - mx);
        op[base + j * inner] = e;
        sum += e;
      }
      for (int64_t j = 0; j < n; ++j) op[base + j * inner] /= sum;
    }
  }
  if (record) {
    Tape::active()->record("softmax", out, [x, out, outer, inner, n]() mutable {
      const Real* g = out.grad().data();
      const Real* y = out.ptr();
      Real* gx = x.grad().data();
      for (int64_t o = 0; o < outer; ++o) {
        for (int64_t i = 0; i < inner; ++i) {
          const int64_t base = o * n * inner + i;
          Real dot = 0;
          for (int64_t j = 0; j < n; ++j)
            dot += g[base + j * inner] * y[base + j * inner];
          for (int64_t j = 0; j < n; ++j)
            gx[base + j * inner] += y[base + j * inner] * (g[base + j * inner] - dot);
        }
      }
    });
  }
  return out;
}

Tensor relu(const Tensor& x) {
  check_finite("relu", x);
  const bool record = should_record({&x});
  Tensor out = make_output(x.shape(), record);
  auto xd = x.data();
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = xd[i] > 0 ? xd[i] : Real(0);
  if (record) {
    Tape::active()->record("relu", out, [x, out]() mutable {
      auto g = out.grad();
      auto gx = x.grad();
      auto xd = x.data();
      for (std::size_t i = 0; i < g.size(); ++i)
        if (xd[i] > 0) gx[i] += g[i];
    });
  }
  return out;
}

Tensor reduce_sum(const Tensor& x) {
  check_finite("reduce_sum", x);
  const bool record = should_record({&x});
  Tensor out = make_output({1}, record);
  Real sum = 0;
  for (Real v : x.data()) sum += v;
  out.data()[0] = sum;
  if (record) {
    Tape::active()->record("reduce_sum", out, [x, out]() mutable {
      const Real g = out.grad()[0];
      for (Real& gx : x.grad()) gx += g;
    });
  }
  return out;
}

Tensor reduce_mean(const Tensor& x, int axis) {
  axis = normalize_axis("reduce_mean", axis, x.rank());
  check_finite("reduce_mean", x);
  const int64_t n = x.dim(axis);
  int64_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= x.dim(d);
  for (int d = axis + 1; d < x.rank(); ++d) inner *= x.dim(d);
  Shape shape;
  for (int d = 0; d < x.rank(); ++d)
    if (d != axis) shape.push_back(x.dim(d));
  if (shape.empty()) shape.push_back(1);
  const bool record = should_record({&x});
  Tensor out = make_output(shape, record);
  const Real* xp = x.ptr();
  Real* op = out.ptr();
  const Real scale = Real(1) / static_cast<Real>(n);
  for (int64_t o = 0; o < outer; ++o)
    for (int64_t i = 0; i < inner; ++i) {
      Real sum = 0;
      for (int64_t j = 0; j < n; ++j) sum += xp[(o * n + j) * inner + i];
      op[o * inner + i] = sum * scale;
    }
  if (record) {
    Tape::active()->record("reduce_mean", out,
                           [x, out, outer, inner, n, scale]() mutable {
      const Real* g = out.grad().data();
      Real* gx = x.grad().data();
      for (int64_t o = 0; o < outer; ++o)
        for (int64_t j = 0; j < n; ++j)
          for (int64_t i = 0; i < inner; ++i)
            gx[(o * n + j) * inner + i] += g[o * inner + i] * scale;
    });
  }
  return out;
}

Tensor avg_pool2x2(const Tensor& x) {
  require_rank("avg_pool2x2", x, 4);
  const int64_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (H % 2 != 0 || W % 2 != 0) {
    throw ShapeError("avg_pool2x2: spatial dims must be even, got " +
                     shape_str(x.shape()));
  }
  check_finite("avg_pool2x2", x);
  const int64_t Ho = H / 2, Wo = W / 2;
  const bool record = should_record({&x});
  Tensor out = make_output({B, C, Ho, Wo}, record);
  const Real* xp = x.ptr();
  Real* op = out.ptr();
  for (int64_t p = 0; p < B * C; ++p)
    for (int64_t i = 0; i < Ho; ++i)
      for (int64_t j = 0; j < Wo; ++j) {
        const Real* src = xp + p * H * W + 2 * i * W + 2 * j;
        op[(p * Ho + i) * Wo + j] =
            Real(0.25) * (src[0] + src[1] + src[W] + src[W + 1]);
      }
  if (record) {
    Tape::active()->record("avg_pool2x2", out, [x, out, B, C, H, W, Ho, Wo]() mutable {
      const Real* g = out.grad().data();
      Real* gx = x.grad().data();
      for (int64_t p = 0; p < B * C; ++p)
        for (int64_t i = 0; i < Ho; ++i)
          for (int64_t j = 0; j < Wo; ++j) {
            const Real v = Real(0.25) * g[(p * Ho + i) * Wo + j];
            Real* dst = gx + p * H * W + 2 * i * W + 2 * j;
            dst[0] += v;
            dst[1] += v;
            dst[W] += v;
            dst[W + 1] += v;
          }
    });
  }
  return out;
}

Tensor gather(const Tensor& x, std::span<const int64_t> index, Shape shape) {
  if (shape_numel(shape) != static_cast<int64_t>(index.size())) {
    shape_fail("gather", x.shape(), shape);
  }
  const int64_t n = x.numel();
  for (int64_t i : index) {
    if (i < 0 || i >= n) {
      throw ShapeError("gather: index " + std::to_string(i) +
                       " out of range for " + shape_str(x.shape()));
    }
  }
  check_finite("gather", x);
  const bool record = should_record({&x});
  Tensor out = make_output(std::move(shape), record);
  const Real* xp = x.ptr();
  Real* op = out.ptr();
  for (std::size_t i = 0; i < index.size(); ++i) op[i] = xp[index[i]];
  if (record) {
    std::vector<int64_t> idx(index.begin(), index.end());
    Tape::active()->record("gather", out, [x, out, idx = std::move(idx)]() mutable {
      const Real* g = out.grad().data();
      Real* gx = x.grad().data();
      for (std::size_t i = 0; i < idx.size(); ++i) gx[idx[i]] += g[i];
    });
  }
  return out;
}

BatchNormStats BatchNormStats::fresh(int64_t channels) {
  return {Tensor::zeros({channels}), Tensor::full({channels}, Real(1)), 0};
}

void BatchNormStats::reset() {
  std::fill(mean.data().begin(), mean.data().end(), Real(0));
  std::fill(var.data().begin(), var.data().end(), Real(1));
  batches = 0;
}

BatchNormStats BatchNormStats::clone() const {
  return {mean.clone(), var.clone(), batches};
}

Tensor batchnorm2d(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                   BatchNormStats& stats, BnMode mode) {
  require_rank("batchnorm2d", x, 4);
  const int64_t B = x.dim(0), C = x.dim(1);
  const int64_t HW = x.dim(2) * x.dim(3);
  for (const Tensor* t : std::initializer_list<const Tensor*>{
           &gamma, &beta, &stats.mean, &stats.var}) {
    if (t->rank() != 1 || t->dim(0) != C)
      shape_fail("batchnorm2d", x.shape(), t->shape());
  }
  check_finite("batchnorm2d", x);
  check_finite("batchnorm2d", gamma);
  check_finite("batchnorm2d", beta);
  const int64_t count = B * HW;
  const bool use_batch = mode != BnMode::kEval;
  if (use_batch && count < 2) {
    throw ShapeError("batchnorm2d: batch statistics need at least 2 values, got " +
                     shape_str(x.shape()));
  }
  const Real* xp = x.ptr();
  std::vector<Real> mean(static_cast<std::size_t>(C));
  std::vector<Real> inv_std(static_cast<std::size_t>(C));
  for (int64_t c = 0; c < C; ++c) {
    Real m, var;
    if (use_batch) {
      double s = 0, ss = 0;
      for (int64_t b = 0; b < B; ++b) {
        const Real* p = xp + (b * C + c) * HW;
        for (int64_t i = 0; i < HW; ++i) s += p[i];
      }
      const double mu = s / static_cast<double>(count);
      for (int64_t b = 0; b < B; ++b) {
        const Real* p = xp + (b * C + c) * HW;
        for (int64_t i = 0; i < HW; ++i) {
          const double d = p[i] - mu;
          ss += d * d;
        }
      }
      m = static_cast<Real>(mu);
      var = static_cast<Real>(ss / static_cast<double>(count));
      const Real unbiased = static_cast<Real>(ss / static_cast<double>(count - 1));
      Real* rm = stats.mean.ptr();
      Real* rv = stats.var.ptr();
      if (mode == BnMode::kTrain) {
        rm[c] = (1 - kBnMomentum) * rm[c] + kBnMomentum * m;
        rv[c] = (1 - kBnMomentum) * rv[c] + kBnMomentum * unbiased;
      } else {
        const Real w = Real(1) / static_cast<Real>(stats.batches + 1);
        rm[c] += w * (m - rm[c]);
        rv[c] += w * (unbiased - rv[c]);
      }
    } else {
      m = stats.mean.ptr()[c];
      var = stats.var.ptr()[c];
    }
    mean[static_cast<std::size_t>(c)] = m;
    inv_std[static_cast<std::size_t>(c)] = Real(1) / std::sqrt(var + kBnEpsilon);
  }
  if (mode == BnMode::kRecalibrate) ++stats.batches;

  const bool record = should_record({&x, &gamma, &beta});
  Tensor out = make_output(x.shape(), record);
  Real* op = out.ptr();
  const Real* gp = gamma.ptr();
  const Real* bp = beta.ptr();
  for (int64_t b = 0; b < B; ++b)
    for (int64_t c = 0; c < C; ++c) {
      const Real scale = gp[c] * inv_std[static_cast<std::size_t>(c)];
      const Real shift = bp[c] - mean[static_cast<std::size_t>(c)] * scale;
      const Real* src = xp + (b * C + c) * HW;
      Real* dst = op + (b * C + c) * HW;
      for (int64_t i = 0; i < HW; ++i) dst[i] = src[i] * scale + shift;
    }

  if (record) {
    Tape::active()->record(
        "batchnorm2d", out,
        [x, gamma, beta, out, mean = std::move(mean), inv_std = std::move(inv_std),
         B, C, HW, count, use_batch]() mutable {
          const Real* g = out.grad().data();
          const Real* xp = x.ptr();
          const Real* gp = gamma.ptr();
          for (int64_t c = 0; c < C; ++c) {
            const Real mu = mean[static_cast<std::size_t>(c)];
            const Real is = inv_std[static_cast<std::size_t>(c)];
            double sum_g = 0, sum_gx = 0;
            for (int64_t b = 0; b < B; ++b) {
              const Real* gc = g + (b * C + c) * HW;
              const Real* xc = xp + (b * C + c) * HW;
              for (int64_t i = 0; i < HW; ++i) {
                sum_g += gc[i];
                sum_gx += gc[i] * (xc[i] - mu) * is;
              }
            }
            if (gamma.requires_grad()) gamma.grad()[c] += static_cast<Real>(sum_gx);
            if (beta.requires_grad()) beta.grad()[c] += static_cast<Real>(sum_g);
            if (!x.requires_grad()) continue;
            Real* gx = x.grad().data();
            const Real k = gp[c] * is;
            if (!use_batch) {
              for (int64_t b = 0; b < B; ++b) {
                const Real* gc = g + (b * C + c) * HW;
                Real* dst = gx + (b * C + c) * HW;
                for (int64_t i = 0; i < HW; ++i) dst[i] += k * gc[i];
              }
              continue;
            }
            const Real mg = static_cast<Real>(sum_g / static_cast<double>(count));
            const Real mgx = static_cast<Real>(sum_gx / static_cast<double>(count));
            for (int64_t b = 0; b < B; ++b) {
              const Real* gc = g + (b * C + c) * HW;
              const Real* xc = xp + (b * C + c) * HW;
              Real* dst = gx + (b * C + c) * HW;
              for (int64_t i = 0; i < HW; ++i) {
                const Real xhat = (xc[i] - mu) * is;
                dst[i] += k * (gc[i] - mg - xhat * mgx);
              }
            }
          }
        });
  }
  return out;
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> labels,
                     Real smoothing) {
  require_rank("cross_entropy", logits, 2);
  const int64_t B = logits.dim(0), C = logits.dim(1);
  if (static_cast<int64_t>(labels.size()) != B) {
    shape_fail("cross_entropy", logits.shape(),
               Shape{static_cast<int64_t>(labels.size())});
  }
  for (int y : labels) {
    if (y < 0 || y >= C) {
      throw ShapeError("cross_entropy: label " + std::to_string(y) +
                       " out of range for " + shape_str(logits.shape()));
    }
  }
  if (smoothing < 0 || smoothing >= 1) {
    throw std::invalid_argument("cross_entropy: smoothing must be in [0, 1)");
  }
  check_finite("cross_entropy", logits);
  const bool record = should_record({&logits});
  Tensor out = make_output({1}, record);
  const Real* lp = logits.ptr();
  std::vector<Real> prob(static_cast<std::size_t>(B * C));
  double total = 0;
  const Real off = smoothing / static_cast<Real>(C);
  for (int64_t b = 0; b < B; ++b) {
    const Real* row = lp + b * C;
    Real mx = row[0];
    for (int64_t c = 1; c < C; ++c) mx = std::max(mx, row[c]);
    double sum = 0;
    for (int64_t c = 0; c < C; ++c) sum += std::exp(static_cast<double>(row[c] - mx));
    const double lse = static_cast<double>(mx) + std::log(sum);
    for (int64_t c = 0; c < C; ++c) {
      const double logp = row[c] - lse;
      prob[static_cast<std::size_t>(b * C + c)] = static_cast<Real>(std::exp(logp));
      const double target = off + (c == labels[static_cast<std::size_t>(b)]
                                       ? 1.0 - smoothing
                                       : 0.0);
      total -= target * logp;
    }
  }
  out.data()[0] = static_cast<Real>(total / static_cast<double>(B));
  if (record) {
    std::vector<int> ys(labels.begin(), labels.end());
    Tape::active()->record("cross_entropy", out,
                           [logits, out, prob = std::move(prob), ys = std::move(ys),
                            B, C, smoothing, off]() mutable {
      const Real g = out.grad()[0] / static_cast<Real>(B);
      Real* gl = logits.grad().data();
      for (int64_t b = 0; b < B; ++b)
        for (int64_t c = 0; c < C; ++c) {
          const Real target =
              off + (c == ys[static_cast<std::size_t>(b)] ? 1 - smoothing : Real(0));
          gl[b * C + c] += g * (prob[static_cast<std::size_t>(b * C + c)] - target);
        }
    });
  }
  return out;
}

NeighborTable NeighborTable::window(int64_t h, int64_t w, int m) {
  if (h < 1 || w < 1) {
    throw ShapeError("window: empty map " + shape_str({h, w}));
  }
  if (m < 1 || m % 2 == 0) {
    throw std::invalid_argument("local attention window must be odd, got " +
                                std::to_string(m));
  }
  NeighborTable t;
  t.height = h;
  t.width = w;
  t.rel_count = static_cast<int64_t>(m) * m;
  const int half = m / 2;
  t.offsets.reserve(static_cast<std::size_t>(h * w + 1));
  t.offsets.push_back(0);
  for (int64_t i = 0; i < h; ++i)
    for (int64_t j = 0; j < w; ++j) {
      for (int dy = -half; dy <= half; ++dy) {
        const int64_t y = i + dy;
        if (y < 0 || y >= h) continue;
        for (int dx = -half; dx <= half; ++dx) {
          const int64_t x = j + dx;
          if (x < 0 || x >= w) continue;
          t.keys.push_back(static_cast<int32_t>(y * w + x));
          t.rel.push_back((dy + half) * m + (dx + half));
        }
      }
      t.offsets.push_back(static_cast<int32_t>(t.keys.size()));
    }
  return t;
}

NeighborTable NeighborTable::line(int64_t h, int64_t w, int axis) {
  if (h < 1 || w < 1) {
    throw ShapeError("axial attention: axis length 0 in " + shape_str({h, w}));
  }
  if (axis != 0 && axis != 1) {
    throw std::invalid_argument("line: axis must be 0 or 1");
  }
  NeighborTable t;
  t.height = h;
  t.width = w;
  const int64_t len = axis == 0 ? h : w;
  t.rel_count = 2 * len - 1;
  t.offsets.reserve(static_cast<std::size_t>(h * w + 1));
  t.offsets.push_back(0);
  for (int64_t i = 0; i < h; ++i)
    for (int64_t j = 0; j < w; ++j) {
      const int64_t q = axis == 0 ? i : j;
      for (int64_t s = 0; s < len; ++s) {
        const int64_t key = axis == 0 ? s * w + j : i * w + s;
        t.keys.push_back(static_cast<int32_t>(key));
        t.rel.push_back(static_cast<int32_t>(s - q + len - 1));
      }
      t.offsets.push_back(static_cast<int32_t>(t.keys.size()));
    }
  return t;
}

namespace {

// (B, heads * d, P) -> [b][head][p][d]
void to_head_major(const Real* src, int64_t B, int heads, int64_t d, int64_t P,
                   Real* dst) {
  for (int64_t b = 0; b < B; ++b)
    for (int n = 0; n < heads; ++n)
      for (int64_t c = 0; c < d; ++c) {
        const Real* s = src + ((b * heads + n) * d + c) * P;
        Real* o = dst + ((b * heads + n) * P) * d + c;
        for (int64_t p = 0; p < P; ++p) o[p * d] = s[p];
      }
}

void add_from_head_major(const Real* src, int64_t B, int heads, int64_t d,
                         int64_t P, Real* dst) {
  for (int64_t b = 0; b < B; ++b)
    for (int n = 0; n < heads; ++n)
      for (int64_t c = 0; c < d; ++c) {
        const Real* s = src + ((b * heads + n) * P) * d + c;
        Real* o = dst + ((b * heads + n) * d + c) * P;
        for (int64_t p = 0; p < P; ++p) o[p] += s[p * d];
      }
}

}  // namespace

Tensor neighborhood_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                              const Tensor& r, int heads,
                              const NeighborTable& table,
                              std::vector<Real>* weights) {
  require_rank("attention", q, 4);
  require_rank("attention", k, 4);
  require_rank("attention", v, 4);
  require_rank("attention", r, 2);
  if (heads < 1) throw std::invalid_argument("attention: heads must be >= 1");
  const int64_t B = q.dim(0), H = q.dim(2), W = q.dim(3);
  if (q.shape() != k.shape()) shape_fail("attention", q.shape(), k.shape());
  if (v.dim(0) != B || v.dim(2) != H || v.dim(3) != W)
    shape_fail("attention", q.shape(), v.shape());
  if (q.dim(1) % heads != 0) {
    throw ShapeError("attention: query channels " + std::to_string(q.dim(1)) +
                     " not divisible by " + std::to_string(heads) + " heads");
  }
  if (v.dim(1) % heads != 0) {
    throw ShapeError("attention: output channels " + std::to_string(v.dim(1)) +
                     " not divisible by " + std::to_string(heads) + " heads");
  }
  if (r.dim(0) != q.dim(1) || r.dim(1) != table.rel_count)
    shape_fail("attention", q.shape(), r.shape());
  if (table.height != H || table.width != W)
    shape_fail("attention", q.shape(), Shape{table.height, table.width});
  check_finite("attention", q);
  check_finite("attention", k);
  check_finite("attention", v);
  check_finite("attention", r);

  const int64_t dq = q.dim(1) / heads;
  const int64_t dv = v.dim(1) / heads;
  const int64_t P = H * W;
  const int64_t R = table.rel_count;
  const int64_t E = static_cast<int64_t>(table.keys.size());

  std::vector<Real> qt(static_cast<std::size_t>(q.numel()));
  std::vector<Real> kt(static_cast<std::size_t>(k.numel()));
  std::vector<Real> vt(static_cast<std::size_t>(v.numel()));
  to_head_major(q.ptr(), B, heads, dq, P, qt.data());
  to_head_major(k.ptr(), B, heads, dq, P, kt.data());
  to_head_major(v.ptr(), B, heads, dv, P, vt.data());
  // [head][rel][d]
  std::vector<Real> rt(static_cast<std::size_t>(r.numel()));
  to_head_major(r.ptr(), 1, heads, dq, R, rt.data());

  std::vector<Real> attn(static_cast<std::size_t>(B * heads * E));
  std::vector<Real> yt(static_cast<std::size_t>(B * heads * P * dv), Real(0));
  const int32_t* offs = table.offsets.data();
  const int32_t* keys = table.keys.data();
  const int32_t* rels = table.rel.data();

  for (int64_t b = 0; b < B; ++b)
    for (int n = 0; n < heads; ++n) {
      const int64_t bn = b * heads + n;
      const Real* qb = qt.data() + bn * P * dq;
      const Real* kb = kt.data() + bn * P * dq;
      const Real* vb = vt.data() + bn * P * dv;
      const Real* rb = rt.data() + n * R * dq;
      Real* ab = attn.data() + bn * E;
      Real* yb = yt.data() + bn * P * dv;
      for (int64_t o = 0; o < P; ++o) {
        const Real* qo = qb + o * dq;
        const int32_t e0 = offs[o], e1 = offs[o + 1];
        Real mx = -std::numeric_limits<Real>::infinity();
        for (int32_t e = e0; e < e1; ++e) {
          const Real* kp = kb + keys[e] * dq;
          const Real* rp = rb + rels[e] * dq;
          Real l = 0;
          for (int64_t c = 0; c < dq; ++c) l += qo[c] * (kp[c] + rp[c]);
          ab[e] = l;
          mx = std::max(mx, l);
        }
        Real sum = 0;
        for (int32_t e = e0; e < e1; ++e) {
          ab[e] = std::exp(ab[e] - mx);
          sum += ab[e];
        }
        const Real inv = Real(1) / sum;
        Real* yo = yb + o * dv;
        for (int32_t e = e0; e < e1; ++e) {
          ab[e] *= inv;
          const Real a = ab[e];
          const Real* vp = vb + keys[e] * dv;
          for (int64_t c = 0; c < dv; ++c) yo[c] += a * vp[c];
        }
      }
    }

  const bool record = should_record({&q, &k, &v, &r});
  Tensor out = make_output({B, heads * dv, H, W}, record);
  add_from_head_major(yt.data(), B, heads, dv, P, out.ptr());
  if (weights != nullptr) *weights = attn;

  if (record) {
    Tape::active()->record(
        "attention", out,
        [q, k, v, r, out, heads, B, P, dq, dv, R, E, table,
         qt = std::move(qt), kt = std::move(kt), vt = std::move(vt),
         rt = std::move(rt), attn = std::move(attn)]() mutable {
          std::vector<Real> gyt(static_cast<std::size_t>(B * heads * P * dv));
          to_head_major(out.grad().data(), B, heads, dv, P, gyt.data());
          std::vector<Real> gqt(qt.size(), Real(0));
          std::vector<Real> gkt(kt.size(), Real(0));
          std::vector<Real> gvt(vt.size(), Real(0));
          std::vector<Real> grt(rt.size(), Real(0));
          std::vector<Real> da;
          const int32_t* offs = table.offsets.data();
          const int32_t* keys = table.keys.data();
          const int32_t* rels = table.rel.data();
          for (int64_t b = 0; b < B; ++b)
            for (int n = 0; n < heads; ++n) {
              const int64_t bn = b * heads + n;
              const Real* qb = qt.data() + bn * P * dq;
              const Real* kb = kt.data() + bn * P * dq;
              const Real* vb = vt.data() + bn * P * dv;
              const Real* rb = rt.data() + n * R * dq;
              const Real* ab = attn.data() + bn * E;
              const Real* gyb = gyt.data() + bn * P * dv;
              Real* gqb = gqt.data() + bn * P * dq;
              Real* gkb = gkt.data() + bn * P * dq;
              Real* gvb = gvt.data() + bn * P * dv;
              Real* grb = grt.data() + n * R * dq;
              for (int64_t o = 0; o < P; ++o) {
                const int32_t e0 = offs[o], e1 = offs[o + 1];
                const Real* gyo = gyb + o * dv;
                const Real* qo = qb + o * dq;
                Real* gqo = gqb + o * dq;
                da.resize(static_cast<std::size_t>(e1 - e0));
                Real s = 0;
                for (int32_t e = e0; e < e1; ++e) {
                  const Real* vp = vb + keys[e] * dv;
                  Real* gvp = gvb + keys[e] * dv;
                  const Real a = ab[e];
                  Real d = 0;
                  for (int64_t c = 0; c < dv; ++c) {
                    d += gyo[c] * vp[c];
                    gvp[c] += a * gyo[c];
                  }
                  da[static_cast<std::size_t>(e - e0)] = d;
                  s += a * d;
                }
                for (int32_t e = e0; e < e1; ++e) {
                  const Real dl = ab[e] * (da[static_cast<std::size_t>(e - e0)] - s);
                  const Real* kp = kb + keys[e] * dq;
                  const Real* rp = rb + rels[e] * dq;
                  Real* gkp = gkb + keys[e] * dq;
                  Real* grp = grb + rels[e] * dq;
                  for (int64_t c = 0; c < dq; ++c) {
                    gqo[c] += dl * (kp[c] + rp[c]);
                    gkp[c] += dl * qo[c];
                    grp[c] += dl * qo[c];
                  }
                }
              }
            }
          if (q.requires_grad())
            add_from_head_major(gqt.data(), B, heads, dq, P, q.grad().data());
          if (k.requires_grad())
            add_from_head_major(gkt.data(), B, heads, dq, P, k.grad().data());
          if (v.requires_grad())
            add_from_head_major(gvt.data(), B, heads, dv, P, v.grad().data());
          if (r.requires_grad())
            add_from_head_major(grt.data(), 1, heads, dq, R, r.grad().data());
        });
  }
  return out;
}

}  // namespace trionas
