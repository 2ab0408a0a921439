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

#include "trionas/supernet.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

namespace trionas {

std::string_view sharing_name(Sharing s) {
  return s == Sharing::kMhs ? "mhs" : "naive";
}

Sharing parse_sharing(std::string_view name) {
  if (name == "mhs") return Sharing::kMhs;
  if (name == "naive") return Sharing::kNaive;
  throw ValidationError("unknown sharing mode '" + std::string(name) +
                        "' (expected mhs or naive)");
}

std::vector<int64_t> multihead_rows(int64_t c_out, int heads, int64_t s_c_out) {
  auto fail = [&](const char* why) {
    std::ostringstream os;
    os << "multihead slice (C_out=" << c_out << ", n=" << heads
       << ", s_c_out=" << s_c_out << "): " << why;
    throw ValidationError(os.str());
  };
  if (heads <= 0) fail("head count must be positive");
  if (s_c_out <= 0 || s_c_out > c_out) fail("s_c_out must be in [1, C_out]");
  if (c_out % heads != 0) fail("C_out not divisible by n");
  if (s_c_out % heads != 0) fail("s_c_out not divisible by n");
  const int64_t group = c_out / heads;
  const int64_t take = s_c_out / heads;
  std::vector<int64_t> rows;
  rows.reserve(static_cast<std::size_t>(s_c_out));
  for (int64_t g = 0; g < heads; ++g)
    for (int64_t j = 0; j < take; ++j) rows.push_back(g * group + j);
  return rows;
}

std::vector<int64_t> naive_rows(int64_t c_out, int64_t s_c_out) {
  if (s_c_out <= 0 || s_c_out > c_out) {
    throw ValidationError("naive slice: s_c_out=" + std::to_string(s_c_out) +
                          " outside [1, " + std::to_string(c_out) + "]");
  }
  std::vector<int64_t> rows(static_cast<std::size_t>(s_c_out));
  std::iota(rows.begin(), rows.end(), 0);
  return rows;
}

namespace {

std::vector<int64_t> first(int64_t n) {
  std::vector<int64_t> v(static_cast<std::size_t>(n));
  std::iota(v.begin(), v.end(), 0);
  return v;
}

}  // namespace

std::vector<int64_t> matrix_index(const Shape& store, std::span<const int64_t> rows,
                                  std::span<const int64_t> cols) {
  if (store.size() != 2) throw ShapeError("matrix_index: store must be rank 2, got " + shape_str(store));
  std::vector<int64_t> out;
  out.reserve(rows.size() * cols.size());
  for (int64_t r : rows) {
    if (r < 0 || r >= store[0]) throw ShapeError("matrix_index: row out of range for " + shape_str(store));
    for (int64_t c : cols) {
      if (c < 0 || c >= store[1]) throw ShapeError("matrix_index: column out of range for " + shape_str(store));
      out.push_back(r * store[1] + c);
    }
  }
  return out;
}

std::vector<int64_t> conv_slice_index(const Shape& store, int64_t s_out,
                                      int64_t s_in, int k) {
  if (store.size() != 4 || store[2] != store[3]) {
    throw ShapeError("slice_conv_weight: store must be (C_out, C_in, K, K), got " + shape_str(store));
  }
  const int64_t kmax = store[2];
  if (k <= 0 || k % 2 == 0 || k > kmax) {
    throw ValidationError("slice_conv_weight: kernel " + std::to_string(k) +
                          " must be odd and at most " + std::to_string(kmax));
  }
  if (s_out <= 0 || s_out > store[0] || s_in <= 0 || s_in > store[1]) {
    throw ValidationError("slice_conv_weight: channels (" + std::to_string(s_out) + ", " +
                          std::to_string(s_in) + ") exceed store " + shape_str(store));
  }
  const int64_t off = (kmax - k) / 2;
  std::vector<int64_t> out;
  out.reserve(static_cast<std::size_t>(s_out * s_in * k * k));
  for (int64_t o = 0; o < s_out; ++o)
    for (int64_t i = 0; i < s_in; ++i)
      for (int64_t y = 0; y < k; ++y)
        for (int64_t x = 0; x < k; ++x)
          out.push_back(((o * store[1] + i) * kmax + y + off) * kmax + x + off);
  return out;
}

namespace {

Tensor gather_copy(const Tensor& w, const std::vector<int64_t>& index, Shape shape) {
  return gather(w, index, std::move(shape));
}

// Flat indices of the centred m x m window of each row of a (R, M * M) table.
std::vector<int64_t> window_index(int64_t cols_total, int window_max,
                                  std::span<const int64_t> rows, int m) {
  const int off = (window_max - m) / 2;
  std::vector<int64_t> out;
  out.reserve(rows.size() * static_cast<std::size_t>(m * m));
  for (int64_t r : rows)
    for (int y = 0; y < m; ++y)
      for (int x = 0; x < m; ++x)
        out.push_back(r * cols_total + (y + off) * window_max + x + off);
  return out;
}

}  // namespace

Tensor slice_conv_weight(const Tensor& w, int64_t s_c_out, int64_t s_c_in, int k) {
  return gather_copy(w, conv_slice_index(w.shape(), s_c_out, s_c_in, k),
                     {s_c_out, s_c_in, k, k});
}

Tensor slice_multihead_weight(const Tensor& w, int heads, int64_t s_c_out) {
  if (w.rank() != 2) throw ShapeError("slice_multihead_weight: weight must be rank 2, got " + shape_str(w.shape()));
  const auto rows = multihead_rows(w.dim(0), heads, s_c_out);
  return gather_copy(w, matrix_index(w.shape(), rows, first(w.dim(1))), {s_c_out, w.dim(1)});
}

Tensor naive_slice(const Tensor& w, int64_t s_c_out) {
  if (w.rank() != 2) throw ShapeError("naive_slice: weight must be rank 2, got " + shape_str(w.shape()));
  const auto rows = naive_rows(w.dim(0), s_c_out);
  return gather_copy(w, matrix_index(w.shape(), rows, first(w.dim(1))), {s_c_out, w.dim(1)});
}

// ---------------------------------------------------------------------------

ParamView ParamView::whole(Tensor t) {
  ParamView v;
  v.shape_ = t.shape();
  v.source_ = std::move(t);
  return v;
}

ParamView ParamView::slice(Tensor store, std::vector<int64_t> index, Shape shape) {
  if (static_cast<int64_t>(index.size()) != shape_numel(shape)) {
    throw ShapeError("ParamView: index count " + std::to_string(index.size()) +
                     " does not match shape " + shape_str(shape));
  }
  ParamView v;
  v.source_ = std::move(store);
  v.index_ = std::make_shared<const std::vector<int64_t>>(std::move(index));
  v.shape_ = std::move(shape);
  return v;
}

Tensor ParamView::materialize() const {
  if (!index_) return source_;
  return gather(source_, *index_, shape_);
}

Real ParamView::read(int64_t i) const {
  return source_.data()[static_cast<std::size_t>(index_ ? (*index_)[static_cast<std::size_t>(i)] : i)];
}

void ParamView::write(int64_t i, Real value) {
  source_.data()[static_cast<std::size_t>(index_ ? (*index_)[static_cast<std::size_t>(i)] : i)] = value;
}

std::span<const int64_t> ParamView::index() const {
  if (!index_) return {};
  return *index_;
}

void init_tensor(Tensor& t, InitKind kind, Rng& rng) {
  const int64_t fan_in = t.rank() >= 2 ? t.numel() / t.dim(0) : 1;
  auto fill_normal = [&](double sd) {
    for (Real& x : t.data()) x = static_cast<Real>(rng.normal(0.0, sd));
  };
  switch (kind) {
    case InitKind::kHe:
      fill_normal(std::sqrt(2.0 / static_cast<double>(fan_in)));
      break;
    case InitKind::kLinear:
      fill_normal(std::sqrt(1.0 / static_cast<double>(fan_in)));
      break;
    case InitKind::kPositional:
      fill_normal(0.1);
      break;
    case InitKind::kOne:
      std::fill(t.data().begin(), t.data().end(), Real(1));
      break;
    case InitKind::kZero:
      std::fill(t.data().begin(), t.data().end(), Real(0));
      break;
    case InitKind::kClassifier: {
      // (in, classes) matrix
      const double bound = 1.0 / std::sqrt(static_cast<double>(t.dim(0)));
      for (Real& x : t.data()) x = static_cast<Real>((2.0 * rng.uniform01() - 1.0) * bound);
      break;
    }
  }
}

SpaceDefinition NetConfig::space() const {
  SpaceDefinition s = SpaceDefinition::standard(base_width);
  if (stem_stride < 1) throw ValidationError("stem stride must be positive");
  if (in_channels < 1) throw ValidationError("input channels must be positive");
  if (num_classes < 2) throw ValidationError("at least 2 classes are required");
  s.stem_stride = stem_stride;
  s.in_channels = in_channels;
  s.num_classes = num_classes;
  return s;
}

std::vector<int64_t> NetConfig::encode() const {
  return {base_width, stem_stride, in_channels, num_classes, resolution};
}

NetConfig NetConfig::decode(std::span<const int64_t> v) {
  if (v.size() != 5) throw ValidationError("net config must have 5 entries");
  NetConfig c;
  c.base_width = static_cast<int>(v[0]);
  c.stem_stride = static_cast<int>(v[1]);
  c.in_channels = static_cast<int>(v[2]);
  c.num_classes = static_cast<int>(v[3]);
  c.resolution = static_cast<int>(v[4]);
  return c;
}

// ---------------------------------------------------------------------------

namespace {

std::string slot_prefix(int stage, int index) {
  return "s" + std::to_string(stage) + ".b" + std::to_string(index);
}

int round_up(int x, int m) { return (x + m - 1) / m * m; }

SlotGeometry::Attention attention_geometry(const SpaceDefinition& space,
                                           const BlockLayout& layout, Operator op) {
  SlotGeometry::Attention a;
  const auto genes = enumerate_genes(space, op);
  if (genes.empty()) return a;
  int lcm = 1;
  for (int h : space.options(op).heads) lcm = std::lcm(lcm, h);
  for (const BlockGene& g : genes) {
    const OpDims d = op_dims(layout, g);
    a.in_cols = std::max(a.in_cols, d.inner);
    a.q_rows = std::max(a.q_rows, d.heads * d.dq);
    a.v_rows = std::max(a.v_rows, d.heads * d.dv);
    if (g.kernel) a.window = std::max(a.window, *g.kernel);
  }
  // Each head count n needs R % n == 0 and R / n at least its per-head width;
  // a multiple of every head count covers both.
  a.q_rows = round_up(a.q_rows, lcm);
  a.v_rows = round_up(a.v_rows, lcm);
  return a;
}

SlotGeometry slot_geometry(const SpaceDefinition& space, const BlockLayout& layout) {
  SlotGeometry g;
  g.layout = layout;
  for (Operator op : space.enabled_operators())
    for (const BlockGene& gene : enumerate_genes(space, op))
      g.down_rows = std::max(g.down_rows, op_dims(layout, gene).inner);
  for (const BlockGene& gene : enumerate_genes(space, Operator::kConv)) {
    g.conv_channels = std::max(g.conv_channels, op_dims(layout, gene).inner);
    g.conv_kernel = std::max(g.conv_kernel, *gene.kernel);
  }
  g.local = attention_geometry(space, layout, Operator::kLocal);
  g.axial = attention_geometry(space, layout, Operator::kAxial);
  g.up_cols = std::max({g.conv_channels, g.local.v_rows, g.axial.v_rows});
  return g;
}

}  // namespace

std::string SupernetWeights::bn_down_name(int stage, int index, int width) {
  return slot_prefix(stage, index) + ".bn_down." + std::to_string(width);
}

std::string SupernetWeights::bn_op_name(int stage, int index, Operator op, int width) {
  return slot_prefix(stage, index) + ".bn_op." + std::string(operator_name(op)) + "." +
         std::to_string(width);
}

void SupernetWeights::add(std::string name, Shape shape, InitKind kind, Rng& rng) {
  Tensor t = Tensor::zeros(std::move(shape), true);
  init_tensor(t, kind, rng);
  lookup_[name] = tensors_.size();
  tensors_.push_back({std::move(name), std::move(t)});
}

SupernetWeights SupernetWeights::create(const NetConfig& config, uint64_t seed) {
  SupernetWeights w;
  w.config_ = config;
  w.space_ = config.space();
  Rng rng(seed);
  const SpaceDefinition& space = w.space_;
  auto bn = [&](const std::string& name, int64_t width, bool zero_gamma) {
    w.add(name + ".gamma", {width}, zero_gamma ? InitKind::kZero : InitKind::kOne, rng);
    w.add(name + ".beta", {width}, InitKind::kZero, rng);
  };

  w.add("stem.conv", {space.stem_width, space.in_channels, 3, 3}, InitKind::kHe, rng);
  bn("stem.bn", space.stem_width, false);

  const auto layouts = block_layouts(space, config.resolution);
  for (const auto& stage : layouts) {
    w.slots_.emplace_back();
    for (const BlockLayout& layout : stage) {
      const SlotGeometry g = slot_geometry(space, layout);
      w.slots_.back().push_back(g);
      const std::string p = slot_prefix(layout.stage, layout.index);
      w.add(p + ".proj_down", {g.down_rows, layout.c_in}, InitKind::kHe, rng);
      std::set<int> inner_widths;
      std::set<std::pair<Operator, int>> op_widths;
      for (Operator op : space.enabled_operators()) {
        for (const BlockGene& gene : enumerate_genes(space, op)) {
          const OpDims d = op_dims(layout, gene);
          inner_widths.insert(d.inner);
          op_widths.insert({op, d.op_channels});
        }
      }
      for (int width : inner_widths) bn(bn_down_name(layout.stage, layout.index, width), width, false);
      if (g.conv_channels > 0) {
        w.add(p + ".conv", {g.conv_channels, g.conv_channels, g.conv_kernel, g.conv_kernel},
              InitKind::kHe, rng);
      }
      if (g.local.q_rows > 0) {
        const auto& a = g.local;
        w.add(p + ".local.wq", {a.q_rows, a.in_cols}, InitKind::kLinear, rng);
        w.add(p + ".local.wk", {a.q_rows, a.in_cols}, InitKind::kLinear, rng);
        w.add(p + ".local.wv", {a.v_rows, a.in_cols}, InitKind::kLinear, rng);
        w.add(p + ".local.r", {a.q_rows, static_cast<int64_t>(a.window) * a.window},
              InitKind::kPositional, rng);
      }
      if (g.axial.q_rows > 0) {
        const auto& a = g.axial;
        const int64_t span = 2 * static_cast<int64_t>(layout.out_res) - 1;
        w.add(p + ".axial.h.wq", {a.q_rows, a.in_cols}, InitKind::kLinear, rng);
        w.add(p + ".axial.h.wk", {a.q_rows, a.in_cols}, InitKind::kLinear, rng);
        w.add(p + ".axial.h.wv", {a.v_rows, a.in_cols}, InitKind::kLinear, rng);
        w.add(p + ".axial.h.r", {a.q_rows, span}, InitKind::kPositional, rng);
        w.add(p + ".axial.w.wq", {a.q_rows, a.v_rows}, InitKind::kLinear, rng);
        w.add(p + ".axial.w.wk", {a.q_rows, a.v_rows}, InitKind::kLinear, rng);
        w.add(p + ".axial.w.wv", {a.v_rows, a.v_rows}, InitKind::kLinear, rng);
        w.add(p + ".axial.w.r", {a.q_rows, span}, InitKind::kPositional, rng);
      }
      for (const auto& [op, width] : op_widths) {
        bn(bn_op_name(layout.stage, layout.index, op, width), width, false);
      }
      w.add(p + ".proj_up", {layout.c_out, g.up_cols}, InitKind::kLinear, rng);
      bn(p + ".bn_up", layout.c_out, true);
      if (layout.shortcut) {
        w.add(p + ".shortcut", {layout.c_out, layout.c_in}, InitKind::kLinear, rng);
        bn(p + ".bn_short", layout.c_out, false);
      }
    }
  }
  w.add("head.fc.weight", {space.stage_widths.back(), space.num_classes},
        InitKind::kClassifier, rng);
  w.add("head.fc.bias", {space.num_classes}, InitKind::kZero, rng);
  return w;
}

const SlotGeometry& SupernetWeights::slot(int stage, int index) const {
  return slots_.at(static_cast<std::size_t>(stage)).at(static_cast<std::size_t>(index));
}

const Tensor& SupernetWeights::at(const std::string& name) const {
  auto it = lookup_.find(name);
  if (it == lookup_.end()) throw std::out_of_range("supernet has no tensor '" + name + "'");
  return tensors_[it->second].tensor;
}

bool SupernetWeights::contains(const std::string& name) const {
  return lookup_.count(name) != 0;
}

std::vector<Tensor> SupernetWeights::parameters() const {
  std::vector<Tensor> out;
  out.reserve(tensors_.size());
  for (const auto& t : tensors_) out.push_back(t.tensor);
  return out;
}

int64_t SupernetWeights::numel() const {
  int64_t n = 0;
  for (const auto& t : tensors_) n += t.tensor.numel();
  return n;
}

SupernetWeights SupernetWeights::clone() const {
  SupernetWeights w = *this;
  for (auto& t : w.tensors_) {
    t.tensor = t.tensor.clone();
    t.tensor.set_requires_grad(true);
  }
  return w;
}

// ---------------------------------------------------------------------------

namespace {

ParamView rows_view(const Tensor& t, std::span<const int64_t> rows,
                    std::span<const int64_t> cols) {
  return ParamView::slice(t, matrix_index(t.shape(), rows, cols),
                          {static_cast<int64_t>(rows.size()), static_cast<int64_t>(cols.size())});
}

std::vector<int64_t> select_rows(Sharing sharing, int64_t stored, int heads, int64_t sampled) {
  return sharing == Sharing::kMhs ? multihead_rows(stored, heads, sampled)
                                  : naive_rows(stored, sampled);
}

}  // namespace

CandidateNet instantiate_candidate(const SupernetWeights& store,
                                   const ArchitectureConfig& arch, Sharing sharing) {
  const SpaceDefinition& space = store.space();
  validate(space, arch);
  CandidateNet net;
  net.config_ = store.config();
  net.space_ = space;
  net.arch_ = arch;
  net.stem_ = ParamView::whole(store.at("stem.conv"));
  net.stem_gamma_ = ParamView::whole(store.at("stem.bn.gamma"));
  net.stem_beta_ = ParamView::whole(store.at("stem.bn.beta"));
  net.stem_stats_ = BatchNormStats::fresh(space.stem_width);
  net.fc_w_ = ParamView::whole(store.at("head.fc.weight"));
  net.fc_b_ = ParamView::whole(store.at("head.fc.bias"));

  int id = 0;
  for (int s = 0; s < space.num_stages(); ++s) {
    for (int i = 0; i < arch.depths[static_cast<std::size_t>(s)]; ++i, ++id) {
      const SlotGeometry& g = store.slot(s, i);
      BlockViews b;
      b.layout = g.layout;
      b.gene = arch.genes[static_cast<std::size_t>(id)];
      b.dims = op_dims(b.layout, b.gene);
      const OpDims& d = b.dims;
      const std::string p = slot_prefix(s, i);
      const auto inner_cols = first(d.inner);

      b.proj_down = rows_view(store.at(p + ".proj_down"), inner_cols, first(b.layout.c_in));
      const std::string bd = SupernetWeights::bn_down_name(s, i, d.inner);
      b.bn_down_gamma = ParamView::whole(store.at(bd + ".gamma"));
      b.bn_down_beta = ParamView::whole(store.at(bd + ".beta"));

      std::vector<int64_t> up_cols;
      if (b.gene.op == Operator::kConv) {
        const Tensor& w = store.at(p + ".conv");
        b.conv = ParamView::slice(w, conv_slice_index(w.shape(), d.inner, d.inner, d.kernel),
                                  {d.inner, d.inner, d.kernel, d.kernel});
        up_cols = inner_cols;
      } else {
        const bool local = b.gene.op == Operator::kLocal;
        const SlotGeometry::Attention& a = local ? g.local : g.axial;
        const auto q_rows = select_rows(sharing, a.q_rows, d.heads,
                                        static_cast<int64_t>(d.heads) * d.dq);
        const auto v_rows = select_rows(sharing, a.v_rows, d.heads,
                                        static_cast<int64_t>(d.heads) * d.dv);
        const std::string base = p + (local ? ".local." : ".axial.h.");
        b.wq = rows_view(store.at(base + "wq"), q_rows, inner_cols);
        b.wk = rows_view(store.at(base + "wk"), q_rows, inner_cols);
        b.wv = rows_view(store.at(base + "wv"), v_rows, inner_cols);
        const Tensor& r = store.at(base + "r");
        if (local) {
          b.r = ParamView::slice(r, window_index(r.dim(1), a.window, q_rows, d.kernel),
                                 {static_cast<int64_t>(q_rows.size()),
                                  static_cast<int64_t>(d.kernel) * d.kernel});
        } else {
          b.r = rows_view(r, q_rows, first(r.dim(1)));
          const std::string wb = p + ".axial.w.";
          b.wq2 = rows_view(store.at(wb + "wq"), q_rows, v_rows);
          b.wk2 = rows_view(store.at(wb + "wk"), q_rows, v_rows);
          b.wv2 = rows_view(store.at(wb + "wv"), v_rows, v_rows);
          const Tensor& r2 = store.at(wb + "r");
          b.r2 = rows_view(r2, q_rows, first(r2.dim(1)));
        }
        up_cols = v_rows;
      }
      const std::string bo = SupernetWeights::bn_op_name(s, i, b.gene.op, d.op_channels);
      b.bn_op_gamma = ParamView::whole(store.at(bo + ".gamma"));
      b.bn_op_beta = ParamView::whole(store.at(bo + ".beta"));
      b.proj_up = rows_view(store.at(p + ".proj_up"), first(b.layout.c_out), up_cols);
      b.bn_up_gamma = ParamView::whole(store.at(p + ".bn_up.gamma"));
      b.bn_up_beta = ParamView::whole(store.at(p + ".bn_up.beta"));
      if (b.layout.shortcut) {
        b.shortcut = ParamView::whole(store.at(p + ".shortcut"));
        b.bn_short_gamma = ParamView::whole(store.at(p + ".bn_short.gamma"));
        b.bn_short_beta = ParamView::whole(store.at(p + ".bn_short.beta"));
      }
      TrioBlockStats st;
      st.down = BatchNormStats::fresh(d.inner);
      st.op = BatchNormStats::fresh(d.op_channels);
      st.up = BatchNormStats::fresh(b.layout.c_out);
      if (b.layout.shortcut) st.shortcut = BatchNormStats::fresh(b.layout.c_out);
      net.blocks_.push_back(std::move(b));
      net.block_stats_.push_back(std::move(st));
    }
  }
  return net;
}

Tensor CandidateNet::forward(const Tensor& x, BnMode mode, LayerTrace* trace) {
  const int res = config_.resolution;
  if (x.rank() != 4 || x.dim(1) != space_.in_channels || x.dim(2) != res || x.dim(3) != res) {
    throw ShapeError("network: expected input (B, " + std::to_string(space_.in_channels) +
                     ", " + std::to_string(res) + ", " + std::to_string(res) + "), got " +
                     shape_str(x.shape()));
  }
  const Tensor stem_w = stem_.materialize();
  Tensor h = conv2d(x, stem_w, space_.stem_stride, 1);
  if (trace) trace->push_back({"conv", x.shape(), h.shape(), stem_w.shape()});
  h = traced_batchnorm(h, {stem_gamma_.materialize(), stem_beta_.materialize()},
                       stem_stats_, mode, trace);
  h = traced_relu(h, trace);

  for (std::size_t j = 0; j < blocks_.size(); ++j) {
    const BlockViews& b = blocks_[j];
    TrioBlockParams p;
    p.stride = b.layout.stride;
    p.proj_down = b.proj_down.materialize();
    p.bn_down = {b.bn_down_gamma.materialize(), b.bn_down_beta.materialize()};
    switch (b.gene.op) {
      case Operator::kConv:
        p.op = ConvParams{b.conv.materialize(), 1};
        break;
      case Operator::kLocal:
        p.op = LocalAttentionParams{b.wq.materialize(), b.wk.materialize(),
                                    b.wv.materialize(), b.r.materialize(),
                                    b.dims.kernel, b.dims.heads};
        break;
      case Operator::kAxial:
        p.op = AxialAttentionParams{
            {b.wq.materialize(), b.wk.materialize(), b.wv.materialize(), b.r.materialize()},
            {b.wq2.materialize(), b.wk2.materialize(), b.wv2.materialize(), b.r2.materialize()},
            b.dims.heads};
        break;
    }
    p.bn_op = {b.bn_op_gamma.materialize(), b.bn_op_beta.materialize()};
    p.proj_up = b.proj_up.materialize();
    p.bn_up = {b.bn_up_gamma.materialize(), b.bn_up_beta.materialize()};
    if (b.layout.shortcut) {
      p.shortcut = b.shortcut.materialize();
      p.bn_shortcut = {b.bn_short_gamma.materialize(), b.bn_short_beta.materialize()};
    }
    h = trio_block_forward(h, p, block_stats_[j], mode, trace);
  }

  const Shape pre = h.shape();
  h = reduce_mean(reshape(h, {pre[0], pre[1], pre[2] * pre[3]}), 2);
  if (trace) trace->push_back({"gap", pre, h.shape(), {}});
  const Tensor fc_w = fc_w_.materialize();
  Tensor logits = add_bias(matmul(h, fc_w), fc_b_.materialize());
  if (trace) trace->push_back({"fc", h.shape(), logits.shape(), fc_w.shape()});
  return logits;
}

std::vector<NamedView> CandidateNet::named_parameters() {
  std::vector<NamedView> out;
  auto push = [&out](std::string name, ParamView& v, InitKind kind) {
    if (v.source().defined()) out.push_back({std::move(name), &v, kind});
  };
  push("stem.conv", stem_, InitKind::kHe);
  push("stem.bn.gamma", stem_gamma_, InitKind::kOne);
  push("stem.bn.beta", stem_beta_, InitKind::kZero);
  for (BlockViews& b : blocks_) {
    const std::string p = slot_prefix(b.layout.stage, b.layout.index);
    push(p + ".proj_down", b.proj_down, InitKind::kHe);
    push(p + ".bn_down.gamma", b.bn_down_gamma, InitKind::kOne);
    push(p + ".bn_down.beta", b.bn_down_beta, InitKind::kZero);
    push(p + ".conv", b.conv, InitKind::kHe);
    push(p + ".wq", b.wq, InitKind::kLinear);
    push(p + ".wk", b.wk, InitKind::kLinear);
    push(p + ".wv", b.wv, InitKind::kLinear);
    push(p + ".r", b.r, InitKind::kPositional);
    push(p + ".wq2", b.wq2, InitKind::kLinear);
    push(p + ".wk2", b.wk2, InitKind::kLinear);
    push(p + ".wv2", b.wv2, InitKind::kLinear);
    push(p + ".r2", b.r2, InitKind::kPositional);
    push(p + ".bn_op.gamma", b.bn_op_gamma, InitKind::kOne);
    push(p + ".bn_op.beta", b.bn_op_beta, InitKind::kZero);
    push(p + ".proj_up", b.proj_up, InitKind::kLinear);
    push(p + ".bn_up.gamma", b.bn_up_gamma, InitKind::kZero);
    push(p + ".bn_up.beta", b.bn_up_beta, InitKind::kZero);
    push(p + ".shortcut", b.shortcut, InitKind::kLinear);
    push(p + ".bn_short.gamma", b.bn_short_gamma, InitKind::kOne);
    push(p + ".bn_short.beta", b.bn_short_beta, InitKind::kZero);
  }
  push("head.fc.weight", fc_w_, InitKind::kClassifier);
  push("head.fc.bias", fc_b_, InitKind::kZero);
  return out;
}

std::vector<Tensor> CandidateNet::parameter_tensors() {
  std::vector<Tensor> out;
  for (const NamedView& v : named_parameters()) {
    const Tensor& t = v.view->source();
    const bool seen = std::any_of(out.begin(), out.end(),
                                  [&t](const Tensor& o) { return o.same(t); });
    if (!seen) out.push_back(t);
  }
  return out;
}

int64_t CandidateNet::parameter_count() {
  int64_t n = 0;
  for (const NamedView& v : named_parameters()) n += v.view->numel();
  return n;
}

std::vector<std::pair<std::string, BatchNormStats*>> CandidateNet::named_stats() {
  std::vector<std::pair<std::string, BatchNormStats*>> out;
  out.emplace_back("stem.bn", &stem_stats_);
  for (std::size_t j = 0; j < blocks_.size(); ++j) {
    const std::string p = slot_prefix(blocks_[j].layout.stage, blocks_[j].layout.index);
    TrioBlockStats& s = block_stats_[j];
    out.emplace_back(p + ".bn_down", &s.down);
    out.emplace_back(p + ".bn_op", &s.op);
    out.emplace_back(p + ".bn_up", &s.up);
    if (blocks_[j].layout.shortcut) out.emplace_back(p + ".bn_short", &s.shortcut);
  }
  return out;
}

void CandidateNet::reset_running_stats() {
  for (auto& [name, stats] : named_stats()) stats->reset();
}

CandidateNet CandidateNet::detach() const {
  CandidateNet net;
  net.config_ = config_;
  net.space_ = space_;
  net.arch_ = arch_;
  net.blocks_ = blocks_;
  net.stem_ = stem_;
  net.stem_gamma_ = stem_gamma_;
  net.stem_beta_ = stem_beta_;
  net.fc_w_ = fc_w_;
  net.fc_b_ = fc_b_;
  net.stem_stats_ = stem_stats_.clone();
  for (const TrioBlockStats& s : block_stats_) {
    TrioBlockStats c;
    c.down = s.down.clone();
    c.op = s.op.clone();
    c.up = s.up.clone();
    if (s.shortcut.mean.defined()) c.shortcut = s.shortcut.clone();
    net.block_stats_.push_back(std::move(c));
  }
  NoGradGuard guard;
  for (NamedView& v : net.named_parameters()) {
    Tensor copy = v.view->materialize().clone();
    copy.set_requires_grad(true);
    *v.view = ParamView::whole(std::move(copy));
  }
  return net;
}

CandidateNet build_standalone(const NetConfig& config, const ArchitectureConfig& arch,
                              uint64_t seed) {
  const SupernetWeights scratch = SupernetWeights::create(config, seed);
  CandidateNet net = instantiate_candidate(scratch, arch, Sharing::kMhs).detach();
  Rng rng(seed ^ 0x5eed5eedULL);
  for (NamedView& v : net.named_parameters()) {
    Tensor t = v.view->source();
    init_tensor(t, v.init, rng);
  }
  return net;
}

}  // namespace trionas
