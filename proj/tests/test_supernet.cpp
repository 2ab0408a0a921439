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

#include <map>
#include <numeric>
#include <set>
#include <string>

#include "doctest.h"
#include "oracles.hpp"
#include "trionas/ops.hpp"
#include "trionas/supernet.hpp"
#include "trionas/trainer.hpp"

using namespace trionas;
using oracle::random_tensor;

namespace {

NetConfig small_config() {
  NetConfig nc;
  nc.base_width = 16;
  nc.stem_stride = 4;
  return nc;
}

std::string prefix(int s, int i) { return "s" + std::to_string(s) + ".b" + std::to_string(i); }

// First `cols` columns of a (R, C) matrix.
Tensor first_cols(const Tensor& w, int64_t cols) {
  std::vector<Real> out;
  for (int64_t r = 0; r < w.dim(0); ++r)
    for (int64_t c = 0; c < cols; ++c) out.push_back(w.data()[static_cast<std::size_t>(r * w.dim(1) + c)]);
  return Tensor::from({w.dim(0), cols}, std::move(out));
}

std::set<std::pair<const Real*, int64_t>> touched(CandidateNet& net) {
  std::set<std::pair<const Real*, int64_t>> out;
  for (const NamedView& v : net.named_parameters()) {
    const Real* base = v.view->source().ptr();
    if (v.view->is_slice()) {
      for (int64_t j : v.view->index()) out.insert({base, j});
    } else {
      for (int64_t j = 0; j < v.view->source().numel(); ++j) out.insert({base, j});
    }
  }
  return out;
}

}  // namespace

TEST_CASE("multi-head rows follow the per-head grouping") {
  CHECK(multihead_rows(8, 2, 4) == std::vector<int64_t>{0, 1, 4, 5});
  CHECK(multihead_rows(16, 4, 8) == std::vector<int64_t>{0, 1, 4, 5, 8, 9, 12, 13});
  std::vector<int64_t> all(16);
  std::iota(all.begin(), all.end(), 0);
  for (int n : {1, 2, 4, 8, 16}) CHECK(multihead_rows(16, n, 16) == all);
  CHECK(naive_rows(8, 4) == std::vector<int64_t>{0, 1, 2, 3});
  CHECK(naive_rows(8, 8) == std::vector<int64_t>{0, 1, 2, 3, 4, 5, 6, 7});
}

TEST_CASE("multi-head divisibility errors name the triple") {
  try {
    multihead_rows(8, 3, 6);
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("C_out=8") != std::string::npos);
    CHECK(msg.find("n=3") != std::string::npos);
    CHECK(msg.find("s_c_out=6") != std::string::npos);
  }
  CHECK_THROWS_AS(multihead_rows(8, 2, 3), ValidationError);
  CHECK_THROWS_AS(multihead_rows(8, 2, 10), ValidationError);
}

TEST_CASE("multi-head slicing equals the per-head oracle on every reachable case") {
  Rng rng(1);
  for (int base : {16, 32}) {
    NetConfig nc = small_config();
    nc.base_width = base;
    const auto cases = oracle::reachable_multihead_cases(nc);
    CHECK(!cases.empty());
    for (const auto& [c_out, n, s] : cases) {
      CAPTURE(c_out);
      CAPTURE(n);
      CAPTURE(s);
      const Tensor w = random_tensor({c_out, 5}, rng);
      CHECK(oracle::exactly_equal(slice_multihead_weight(w, n, s), oracle::multihead_slice(w, n, s)));
      if (s < c_out && n > 1) {
        CHECK_FALSE(oracle::exactly_equal(naive_slice(w, s), slice_multihead_weight(w, n, s)));
      }
    }
  }
}

TEST_CASE("conv slicing equals the index oracle for every kernel and channel combo") {
  Rng rng(2);
  const Tensor w = random_tensor({6, 5, 7, 7}, rng);
  for (int k : {3, 5, 7}) {
    for (int64_t so = 1; so <= 6; ++so) {
      for (int64_t si = 1; si <= 5; ++si) {
        CHECK(oracle::exactly_equal(slice_conv_weight(w, so, si, k), oracle::conv_slice(w, so, si, k)));
      }
    }
  }
  CHECK(oracle::exactly_equal(slice_conv_weight(w, 6, 5, 7), w));
  // k = 3 reads the centre taps {2,3,4} x {2,3,4}
  const auto idx = conv_slice_index({1, 1, 7, 7}, 1, 1, 3);
  CHECK(idx == std::vector<int64_t>{16, 17, 18, 23, 24, 25, 30, 31, 32});
  CHECK_THROWS_AS(slice_conv_weight(w, 2, 2, 4), ValidationError);
  CHECK_THROWS_AS(slice_conv_weight(w, 2, 2, 9), ValidationError);
}

TEST_CASE("candidate views hold the oracle slices of the store") {
  const SupernetWeights store = SupernetWeights::create(small_config(), 3);
  Rng rng(4);
  for (int t = 0; t < 20; ++t) {
    const ArchitectureConfig arch = random_config(store.space(), rng, SamplingMode::kHierarchical);
    const CandidateNet net = instantiate_candidate(store, arch, Sharing::kMhs);
    for (const BlockViews& b : net.blocks()) {
      const std::string p = prefix(b.layout.stage, b.layout.index);
      const OpDims& d = b.dims;
      if (b.gene.op == Operator::kConv) {
        CHECK(oracle::exactly_equal(b.conv.materialize(),
                                    oracle::conv_slice(store.at(p + ".conv"), d.inner, d.inner, d.kernel)));
      } else {
        const std::string base = p + (b.gene.op == Operator::kLocal ? ".local." : ".axial.h.");
        const int64_t q = static_cast<int64_t>(d.heads) * d.dq;
        const int64_t v = static_cast<int64_t>(d.heads) * d.dv;
        CHECK(oracle::exactly_equal(b.wq.materialize(),
                                    oracle::multihead_slice(first_cols(store.at(base + "wq"), d.inner), d.heads, q)));
        CHECK(oracle::exactly_equal(b.wk.materialize(),
                                    oracle::multihead_slice(first_cols(store.at(base + "wk"), d.inner), d.heads, q)));
        CHECK(oracle::exactly_equal(b.wv.materialize(),
                                    oracle::multihead_slice(first_cols(store.at(base + "wv"), d.inner), d.heads, v)));
      }
    }
  }
}

TEST_CASE("instantiated candidates match stand-alone reconstructions") {
  const SupernetWeights store = SupernetWeights::create(small_config(), 5);
  Rng rng(6);
  const Tensor x = random_tensor({4, 3, 32, 32}, rng);
  for (int t = 0; t < 10; ++t) {
    const ArchitectureConfig arch = random_config(store.space(), rng, SamplingMode::kHierarchical);
    for (Sharing sharing : {Sharing::kMhs, Sharing::kNaive}) {
      CandidateNet cand = instantiate_candidate(store, arch, sharing);
      CandidateNet alone = build_standalone(store.config(), arch, 99);
      auto src = cand.named_parameters();
      auto dst = alone.named_parameters();
      REQUIRE(src.size() == dst.size());
      for (std::size_t i = 0; i < src.size(); ++i) {
        REQUIRE(src[i].name == dst[i].name);
        REQUIRE(src[i].view->shape() == dst[i].view->shape());
        for (int64_t j = 0; j < src[i].view->numel(); ++j) dst[i].view->write(j, src[i].view->read(j));
      }
      NoGradGuard guard;
      CHECK(oracle::max_abs_diff(cand.forward(x, BnMode::kTrain), alone.forward(x, BnMode::kTrain)) <= 1e-6);
      CHECK(oracle::max_abs_diff(cand.forward(x, BnMode::kEval), alone.forward(x, BnMode::kEval)) <= 1e-6);
    }
  }
}

TEST_CASE("views of one architecture share storage") {
  SupernetWeights store = SupernetWeights::create(small_config(), 7);
  Rng rng(8);
  const ArchitectureConfig arch = random_config(store.space(), rng, SamplingMode::kHierarchical);
  CandidateNet a = instantiate_candidate(store, arch, Sharing::kMhs);
  CandidateNet b = instantiate_candidate(store, arch, Sharing::kMhs);
  auto va = a.named_parameters();
  auto vb = b.named_parameters();
  REQUIRE(va.size() == vb.size());
  for (std::size_t i = 0; i < va.size(); ++i) {
    for (int64_t j = 0; j < va[i].view->numel(); j += 7) {
      const Real saved = va[i].view->read(j);
      va[i].view->write(j, Real(12345.5));
      CHECK(vb[i].view->read(j) == Real(12345.5));
      va[i].view->write(j, saved);
    }
  }
}

TEST_CASE("instantiation and evaluation leave the store untouched") {
  const SupernetWeights store = SupernetWeights::create(small_config(), 9);
  const SupernetWeights before = store.clone();
  Rng rng(10);
  const Tensor x = random_tensor({2, 3, 32, 32}, rng);
  for (int t = 0; t < 5; ++t) {
    CandidateNet net = instantiate_candidate(store, random_config(store.space(), rng, SamplingMode::kHierarchical), Sharing::kMhs);
    NoGradGuard guard;
    net.forward(x, BnMode::kTrain);
    net.forward(x, BnMode::kEval);
  }
  for (std::size_t i = 0; i < store.tensors().size(); ++i) {
    CHECK(oracle::exactly_equal(store.tensors()[i].tensor, before.tensors()[i].tensor));
  }
}

TEST_CASE("maximal attention candidates see whole attention tensors") {
  const SupernetWeights store = SupernetWeights::create(small_config(), 11);
  for (Operator op : {Operator::kLocal, Operator::kAxial}) {
    CandidateNet net = instantiate_candidate(store, uniform_max_config(store.space(), op, 32), Sharing::kMhs);
    for (const BlockViews& b : net.blocks()) {
      for (const ParamView* v : {&b.wq, &b.wk, &b.wv, &b.r}) {
        if (!v->is_slice()) continue;
        CHECK(v->numel() == v->source().numel());
        std::vector<int64_t> ids(v->index().begin(), v->index().end());
        std::sort(ids.begin(), ids.end());
        for (std::size_t j = 0; j < ids.size(); ++j) CHECK(ids[j] == static_cast<int64_t>(j));
      }
    }
  }
}

TEST_CASE("one step on the max candidate changes exactly the shared entries") {
  SupernetWeights store = SupernetWeights::create(small_config(), 12);
  Rng rng(13);
  const OperatorAssignment ops = random_assignment(store.space(), rng, SamplingMode::kHierarchical);
  CandidateNet hi = instantiate_candidate(store, max_config(store.space(), ops, 32), Sharing::kMhs);
  CandidateNet lo = instantiate_candidate(store, min_config(store.space(), ops, 32), Sharing::kMhs);
  const auto hi_set = touched(hi);
  const auto lo_set = touched(lo);
  const SupernetWeights before = store.clone();

  Sgd sgd(store.parameters(), 0.9);
  sgd.zero_grad();
  {
    Tape tape;
    const Tensor x = random_tensor({4, 3, 32, 32}, rng);
    const std::vector<int> y = {0, 1, 1, 0};
    tape.backward(cross_entropy(hi.forward(x, BnMode::kTrain), y, 0.1));
  }
  sgd.step(0.1, 1e-3, &hi);

  int64_t shared_changed = 0;
  for (std::size_t t = 0; t < store.tensors().size(); ++t) {
    const Tensor& now = store.tensors()[t].tensor;
    const Tensor& old = before.tensors()[t].tensor;
    for (int64_t j = 0; j < now.numel(); ++j) {
      const auto k = static_cast<std::size_t>(j);
      const bool changed = now.data()[k] != old.data()[k];
      const bool in_hi = hi_set.count({now.ptr(), j}) > 0;
      const bool in_lo = lo_set.count({now.ptr(), j}) > 0;
      if (changed) CHECK(in_hi);
      if (in_lo && !in_hi) CHECK_FALSE(changed);
      if (in_lo && in_hi && old.data()[k] != 0) {
        CHECK(changed);
        ++shared_changed;
      }
    }
  }
  CHECK(shared_changed > 0);
}

TEST_CASE("init scales") {
  Rng rng(14);
  Tensor w = Tensor::zeros({256, 64});
  init_tensor(w, InitKind::kHe, rng);
  double s2 = 0;
  for (Real v : w.data()) s2 += double(v) * v;
  CHECK(std::sqrt(s2 / double(w.numel())) == doctest::Approx(std::sqrt(2.0 / 64)).epsilon(0.05));
  Tensor z = Tensor::full({4}, 3);
  init_tensor(z, InitKind::kZero, rng);
  for (Real v : z.data()) CHECK(v == Real(0));
}

TEST_CASE("final block BN scales start at zero") {
  const SupernetWeights store = SupernetWeights::create(small_config(), 15);
  int seen = 0;
  for (const NamedTensor& t : store.tensors()) {
    if (t.name.size() > 12 && t.name.compare(t.name.size() - 12, 12, ".bn_up.gamma") == 0) {
      ++seen;
      for (Real v : t.tensor.data()) CHECK(v == Real(0));
    }
  }
  CHECK(seen == 14);
}

TEST_CASE("invalid architectures are rejected before slicing") {
  const SupernetWeights store = SupernetWeights::create(small_config(), 16);
  Rng rng(17);
  ArchitectureConfig arch = random_config(store.space(), rng, SamplingMode::kHierarchical);
  arch.genes.pop_back();
  CHECK_THROWS_AS(instantiate_candidate(store, arch, Sharing::kMhs), ValidationError);
}
