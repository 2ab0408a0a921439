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

// Brute-force reference implementations shared by the unit tests and the
// acceptance runner. Everything here is written with plain loops over
// std::vector<double> and never calls the code it checks.

#ifndef TRIONAS_TESTS_ORACLES_HPP_
#define TRIONAS_TESTS_ORACLES_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <stdexcept>
#include <tuple>
#include <vector>

#include "trionas/operators.hpp"
#include "trionas/random.hpp"
#include "trionas/space.hpp"
#include "trionas/supernet.hpp"
#include "trionas/tensor.hpp"

namespace oracle {

using trionas::Real;
using trionas::Shape;
using trionas::Tensor;

inline Tensor random_tensor(Shape shape, trionas::Rng& rng, double scale = 1.0) {
  std::vector<Real> v(static_cast<std::size_t>(trionas::shape_numel(shape)));
  for (Real& x : v) x = static_cast<Real>(rng.normal(0.0, scale));
  return Tensor::from(std::move(shape), std::move(v));
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return INFINITY;
  double m = 0;
  for (int64_t i = 0; i < a.numel(); ++i) {
    m = std::max(m, std::abs(static_cast<double>(a.data()[static_cast<std::size_t>(i)]) -
                             static_cast<double>(b.data()[static_cast<std::size_t>(i)])));
  }
  return m;
}

inline bool exactly_equal(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  return std::equal(a.data().begin(), a.data().end(), b.data().begin());
}

// Per head h, rows [h * C_out/n, h * C_out/n + s/n) of a (C_out, C_in) matrix,
// copied element by element.
inline Tensor multihead_slice(const Tensor& w, int heads, int64_t s) {
  const int64_t c_out = w.dim(0);
  const int64_t c_in = w.dim(1);
  if (c_out % heads != 0 || s % heads != 0 || s > c_out) {
    throw std::invalid_argument("oracle::multihead_slice: bad shape");
  }
  const int64_t group = c_out / heads;
  const int64_t take = s / heads;
  std::vector<Real> out;
  for (int h = 0; h < heads; ++h) {
    for (int64_t j = 0; j < take; ++j) {
      const int64_t row = h * group + j;
      for (int64_t c = 0; c < c_in; ++c) out.push_back(w.data()[static_cast<std::size_t>(row * c_in + c)]);
    }
  }
  return Tensor::from({s, c_in}, std::move(out));
}

// First s_out x s_in channels, centred k x k window of a (C_out, C_in, K, K)
// kernel.
inline Tensor conv_slice(const Tensor& w, int64_t s_out, int64_t s_in, int k) {
  const int64_t ci = w.dim(1);
  const int64_t kk = w.dim(2);
  const int64_t off = (kk - k) / 2;
  std::vector<Real> out;
  for (int64_t o = 0; o < s_out; ++o) {
    for (int64_t i = 0; i < s_in; ++i) {
      for (int64_t y = 0; y < k; ++y) {
        for (int64_t x = 0; x < k; ++x) {
          out.push_back(w.data()[static_cast<std::size_t>(((o * ci + i) * kk + y + off) * kk + x + off)]);
        }
      }
    }
  }
  return Tensor::from({s_out, s_in, k, k}, std::move(out));
}

// (C, H, W) value of sample b as a nested accessor.
struct Map {
  const Tensor& t;
  int64_t b;
  double operator()(int64_t c, int64_t y, int64_t x) const {
    const Shape& s = t.shape();
    return static_cast<double>(t.data()[static_cast<std::size_t>(((b * s[1] + c) * s[2] + y) * s[3] + x)]);
  }
};

// 1x1 projection of pixel (y, x): W (rows, C) times x[:, y, x].
inline std::vector<double> project(const Tensor& w, const Map& m, int64_t y, int64_t x) {
  const int64_t rows = w.dim(0);
  const int64_t cols = w.dim(1);
  std::vector<double> out(static_cast<std::size_t>(rows), 0.0);
  for (int64_t r = 0; r < rows; ++r) {
    double acc = 0;
    for (int64_t c = 0; c < cols; ++c) {
      acc += static_cast<double>(w.data()[static_cast<std::size_t>(r * cols + c)]) * m(c, y, x);
    }
    out[static_cast<std::size_t>(r)] = acc;
  }
  return out;
}

struct Key {
  int64_t y, x;
  int64_t rel;  // column of the positional table
};

// One query pixel: softmax over keys of q.(k + r_rel), weighted sum of v.
inline void attend_pixel(const Tensor& wq, const Tensor& wk, const Tensor& wv, const Tensor& r,
                         int heads, const Map& m, int64_t y, int64_t x,
                         const std::vector<Key>& keys, std::vector<double>& out) {
  const int64_t dq = wq.dim(0) / heads;
  const int64_t dv = wv.dim(0) / heads;
  const int64_t rel_count = r.dim(1);
  const std::vector<double> q = project(wq, m, y, x);
  std::vector<std::vector<double>> ks, vs;
  for (const Key& key : keys) {
    ks.push_back(project(wk, m, key.y, key.x));
    vs.push_back(project(wv, m, key.y, key.x));
  }
  out.assign(static_cast<std::size_t>(heads * dv), 0.0);
  for (int h = 0; h < heads; ++h) {
    std::vector<double> logits;
    for (std::size_t p = 0; p < keys.size(); ++p) {
      double l = 0;
      for (int64_t d = 0; d < dq; ++d) {
        const int64_t row = h * dq + d;
        const double rr = static_cast<double>(r.data()[static_cast<std::size_t>(row * rel_count + keys[p].rel)]);
        l += q[static_cast<std::size_t>(row)] * (ks[p][static_cast<std::size_t>(row)] + rr);
      }
      logits.push_back(l);
    }
    const double mx = *std::max_element(logits.begin(), logits.end());
    double z = 0;
    for (double& l : logits) z += (l = std::exp(l - mx));
    for (std::size_t p = 0; p < keys.size(); ++p) {
      for (int64_t d = 0; d < dv; ++d) {
        out[static_cast<std::size_t>(h * dv + d)] +=
            logits[p] / z * vs[p][static_cast<std::size_t>(h * dv + d)];
      }
    }
  }
}

inline Tensor local_attention(const Tensor& x, const trionas::LocalAttentionParams& p) {
  const int64_t bsz = x.dim(0), hgt = x.dim(2), wid = x.dim(3);
  const int64_t half = p.window / 2;
  const int64_t dv_all = p.wv.dim(0);
  std::vector<Real> out(static_cast<std::size_t>(bsz * dv_all * hgt * wid));
  std::vector<double> pix;
  for (int64_t b = 0; b < bsz; ++b) {
    const Map m{x, b};
    for (int64_t y = 0; y < hgt; ++y) {
      for (int64_t xx = 0; xx < wid; ++xx) {
        std::vector<Key> keys;
        for (int64_t dy = -half; dy <= half; ++dy) {
          for (int64_t dx = -half; dx <= half; ++dx) {
            if (y + dy < 0 || y + dy >= hgt || xx + dx < 0 || xx + dx >= wid) continue;
            keys.push_back({y + dy, xx + dx, (dy + half) * p.window + (dx + half)});
          }
        }
        attend_pixel(p.wq, p.wk, p.wv, p.r, p.heads, m, y, xx, keys, pix);
        for (int64_t c = 0; c < dv_all; ++c) {
          out[static_cast<std::size_t>(((b * dv_all + c) * hgt + y) * wid + xx)] =
              static_cast<Real>(pix[static_cast<std::size_t>(c)]);
        }
      }
    }
  }
  return Tensor::from({bsz, dv_all, hgt, wid}, std::move(out));
}

// axis 0: attend along the column, axis 1: along the row.
inline Tensor axial_pass(const Tensor& x, const trionas::AxialPassParams& p, int heads, int axis) {
  const int64_t bsz = x.dim(0), hgt = x.dim(2), wid = x.dim(3);
  const int64_t len = axis == 0 ? hgt : wid;
  const int64_t dv_all = p.wv.dim(0);
  std::vector<Real> out(static_cast<std::size_t>(bsz * dv_all * hgt * wid));
  std::vector<double> pix;
  for (int64_t b = 0; b < bsz; ++b) {
    const Map m{x, b};
    for (int64_t y = 0; y < hgt; ++y) {
      for (int64_t xx = 0; xx < wid; ++xx) {
        std::vector<Key> keys;
        const int64_t query = axis == 0 ? y : xx;
        for (int64_t t = 0; t < len; ++t) {
          keys.push_back({axis == 0 ? t : y, axis == 0 ? xx : t, t - query + len - 1});
        }
        attend_pixel(p.wq, p.wk, p.wv, p.r, heads, m, y, xx, keys, pix);
        for (int64_t c = 0; c < dv_all; ++c) {
          out[static_cast<std::size_t>(((b * dv_all + c) * hgt + y) * wid + xx)] =
              static_cast<Real>(pix[static_cast<std::size_t>(c)]);
        }
      }
    }
  }
  return Tensor::from({bsz, dv_all, hgt, wid}, std::move(out));
}

inline Tensor axial_attention(const Tensor& x, const trionas::AxialAttentionParams& p) {
  return axial_pass(axial_pass(x, p.height, p.heads, 0), p.width, p.heads, 1);
}

// One option combination of an attention operator with the per-head widths it
// resolves to inside a 64-channel block.
struct AttentionCase {
  trionas::BlockGene gene;
  trionas::OpDims dims;
};

inline std::vector<AttentionCase> attention_cases(trionas::Operator op) {
  const trionas::SpaceDefinition space = trionas::SpaceDefinition::standard(32);
  trionas::BlockLayout layout;
  layout.c_in = 64;
  layout.c_out = 64;
  layout.in_res = 6;
  layout.out_res = 6;
  std::vector<AttentionCase> out;
  for (const trionas::BlockGene& g : trionas::enumerate_genes(space, op)) {
    out.push_back({g, trionas::op_dims(layout, g)});
  }
  return out;
}

inline trionas::LocalAttentionParams random_local(const trionas::OpDims& d, int window,
                                                  trionas::Rng& rng, double scale = 0.3) {
  trionas::LocalAttentionParams p;
  p.heads = d.heads;
  p.window = window;
  p.wq = random_tensor({d.heads * d.dq, d.inner}, rng, scale);
  p.wk = random_tensor({d.heads * d.dq, d.inner}, rng, scale);
  p.wv = random_tensor({d.heads * d.dv, d.inner}, rng, scale);
  p.r = random_tensor({d.heads * d.dq, window * window}, rng, scale);
  return p;
}

inline trionas::AxialAttentionParams random_axial(const trionas::OpDims& d, int64_t h,
                                                  int64_t w, trionas::Rng& rng,
                                                  double scale = 0.3) {
  trionas::AxialAttentionParams p;
  p.heads = d.heads;
  const int64_t q = d.heads * d.dq;
  const int64_t v = d.heads * d.dv;
  p.height = {random_tensor({q, d.inner}, rng, scale), random_tensor({q, d.inner}, rng, scale),
              random_tensor({v, d.inner}, rng, scale), random_tensor({q, 2 * h - 1}, rng, scale)};
  p.width = {random_tensor({q, v}, rng, scale), random_tensor({q, v}, rng, scale),
             random_tensor({v, v}, rng, scale), random_tensor({q, 2 * w - 1}, rng, scale)};
  return p;
}

// Every (C_out, n, s_c_out) a multi-head slice can take in the supernet store
// of `config`: query / key rows and value rows of local and axial attention.
inline std::set<std::tuple<int64_t, int, int64_t>> reachable_multihead_cases(
    const trionas::NetConfig& config) {
  std::set<std::tuple<int64_t, int, int64_t>> cases;
  const trionas::SupernetWeights store = trionas::SupernetWeights::create(config, 0);
  const trionas::SpaceDefinition& space = store.space();
  for (int s = 0; s < space.num_stages(); ++s) {
    for (int i = 0; i < space.max_depth(s); ++i) {
      const trionas::SlotGeometry& g = store.slot(s, i);
      for (trionas::Operator op : {trionas::Operator::kLocal, trionas::Operator::kAxial}) {
        const auto& a = op == trionas::Operator::kLocal ? g.local : g.axial;
        for (const trionas::BlockGene& gene : trionas::enumerate_genes(space, op)) {
          const trionas::OpDims d = trionas::op_dims(g.layout, gene);
          cases.insert({a.q_rows, d.heads, static_cast<int64_t>(d.heads) * d.dq});
          cases.insert({a.v_rows, d.heads, static_cast<int64_t>(d.heads) * d.dv});
        }
      }
    }
  }
  return cases;
}

// Layer-walking count over a recorded forward pass of batch 1, using the
// per-element constants of the cost model.
inline int64_t trace_flops(const trionas::LayerTrace& trace) {
  auto per_sample = [](const Shape& s) {
    int64_t n = 1;
    for (std::size_t i = 1; i < s.size(); ++i) n *= s[i];
    return n;
  };
  int64_t total = 0;
  for (const trionas::LayerRecord& r : trace) {
    const int64_t out = per_sample(r.output);
    if (r.kind == "conv") {
      total += 2 * out * r.weight[1] * r.weight[2] * r.weight[3];
    } else if (r.kind == "bn") {
      total += 2 * out;
    } else if (r.kind == "relu" || r.kind == "add") {
      total += out;
    } else if (r.kind == "pool" || r.kind == "gap") {
      total += per_sample(r.input);
    } else if (r.kind == "attention") {
      const int64_t positions = r.output[2] * r.output[3];
      total += r.heads * positions * r.keys * (2 * r.dq + 3 + 2 * r.dv);
    } else if (r.kind == "fc") {
      total += 2 * r.weight[0] * r.weight[1] + r.weight[1];
    } else {
      throw std::invalid_argument("oracle::trace_flops: unknown layer " + r.kind);
    }
  }
  return total;
}

}  // namespace oracle

#endif  // TRIONAS_TESTS_ORACLES_HPP_
