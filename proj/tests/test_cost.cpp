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

#include <string>

#include "doctest.h"
#include "oracles.hpp"
#include "trionas/cost.hpp"
#include "trionas/ops.hpp"
#include "trionas/supernet.hpp"

using namespace trionas;

namespace {

BlockLayout flat_layout(int channels, int res) {
  BlockLayout l;
  l.c_in = channels;
  l.c_out = channels;
  l.in_res = res;
  l.out_res = res;
  return l;
}

BlockGene conv_gene(Rational e, int k) {
  BlockGene g;
  g.op = Operator::kConv;
  g.expansion = e;
  g.kernel = k;
  return g;
}

}  // namespace

TEST_CASE("3x3 conv on an 8x8x4 map costs 18432 FLOPs") {
  // Hand count: one multiply-add per output pixel, output channel and tap.
  int64_t macs = 0;
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x)
      for (int o = 0; o < 4; ++o)
        for (int i = 0; i < 4; ++i)
          for (int t = 0; t < 9; ++t) ++macs;
  CHECK(2 * macs == 18432);

  LayerTrace trace;
  conv_forward(Tensor::zeros({1, 4, 8, 8}), ConvParams{Tensor::zeros({4, 4, 3, 3}), 1}, &trace);
  CHECK(oracle::trace_flops(trace) == 18432);

  // Inside a block with inner width 4 the conv term is the only kernel-dependent one.
  const BlockLayout l = flat_layout(32, 8);
  const int64_t k3 = block_cost(l, conv_gene({1, 8}, 3)).flops;
  const int64_t k5 = block_cost(l, conv_gene({1, 8}, 5)).flops;
  CHECK(k5 - k3 == 2 * 64 * (25 - 9) * 16);
}

TEST_CASE("single conv parameter count is k^2 c_in c_out") {
  const BlockLayout l = flat_layout(32, 8);
  const int64_t p3 = block_cost(l, conv_gene({1, 8}, 3)).params;
  const int64_t p7 = block_cost(l, conv_gene({1, 8}, 7)).params;
  CHECK(p7 - p3 == (49 - 9) * 4 * 4);
}

TEST_CASE("raising any option never lowers FLOPs") {
  const SpaceDefinition s = SpaceDefinition::standard(16);
  const auto layouts = block_layouts(s, 32);
  for (const auto& stage : layouts) {
    for (const BlockLayout& l : stage) {
      for (Operator op : kAllOperators) {
        const OperatorOptions& o = s.options(op);
        for (const BlockGene& g : enumerate_genes(s, op)) {
          const int64_t base = block_cost(l, g).flops;
          auto check_next = [&](auto field, const auto& options) {
            for (std::size_t i = 0; i + 1 < options.size(); ++i) {
              if (!(g.*field == options[i])) continue;
              BlockGene up = g;
              up.*field = options[i + 1];
              CHECK(block_cost(l, up).flops >= base);
            }
          };
          check_next(&BlockGene::expansion, o.expansions);
          if (g.kernel) {
            for (std::size_t i = 0; i + 1 < o.kernels.size(); ++i) {
              if (*g.kernel != o.kernels[i]) continue;
              BlockGene up = g;
              up.kernel = o.kernels[i + 1];
              CHECK(block_cost(l, up).flops >= base);
            }
          }
          if (is_attention(op)) {
            for (std::size_t i = 0; i + 1 < o.qk_rates.size(); ++i) {
              if (!(*g.qk == o.qk_rates[i])) continue;
              BlockGene up = g;
              up.qk = o.qk_rates[i + 1];
              CHECK(block_cost(l, up).flops >= base);
            }
            for (std::size_t i = 0; i + 1 < o.v_rates.size(); ++i) {
              if (!(*g.v == o.v_rates[i])) continue;
              BlockGene up = g;
              up.v = o.v_rates[i + 1];
              CHECK(block_cost(l, up).flops >= base);
            }
            for (std::size_t i = 0; i + 1 < o.heads.size(); ++i) {
              if (*g.heads != o.heads[i]) continue;
              BlockGene up = g;
              up.heads = o.heads[i + 1];
              CHECK(block_cost(l, up).flops >= base);
            }
          }
        }
      }
    }
  }
}

TEST_CASE("report totals equal the sum of the breakdown and are deterministic") {
  const SpaceDefinition s = SpaceDefinition::standard(16);
  Rng rng(3);
  for (int i = 0; i < 20; ++i) {
    const ArchitectureConfig c = random_config(s, rng, SamplingMode::kHierarchical);
    const CostReport r = cost_report(s, c, 32);
    int64_t f = 0, p = 0;
    for (const CostEntry& e : r.entries) {
      f += e.flops;
      p += e.params;
    }
    CHECK(f == r.flops);
    CHECK(p == r.params);
    CHECK(r.entries.size() == static_cast<std::size_t>(c.total_blocks() + 2));
    CHECK(cost_report(s, c, 32).flops == r.flops);
  }
}

TEST_CASE("cost matches a layer walk over the instantiated network on 50 configs") {
  NetConfig nc;
  nc.base_width = 16;
  nc.stem_stride = 4;
  const SupernetWeights store = SupernetWeights::create(nc, 4);
  Rng rng(5);
  const Tensor x = Tensor::zeros({1, 3, 32, 32});
  for (int i = 0; i < 50; ++i) {
    const ArchitectureConfig c = random_config(store.space(), rng, SamplingMode::kHierarchical);
    CandidateNet net = instantiate_candidate(store, c, Sharing::kMhs);
    LayerTrace trace;
    {
      NoGradGuard guard;
      net.forward(x, BnMode::kEval, &trace);
    }
    const CostReport r = cost_report(store.space(), c, nc.resolution);
    CHECK(oracle::trace_flops(trace) == r.flops);
    CHECK(net.parameter_count() == r.params);
  }
}

TEST_CASE("cost CSV layout") {
  const SpaceDefinition s = SpaceDefinition::standard(16);
  const ArchitectureConfig c = global_min_config(s, 32);
  const std::string csv = cost_csv(cost_report(s, c, 32));
  CHECK(csv.rfind("block_id,stage,operator,flops,params\n", 0) == 0);
  CHECK(csv.find("\nstem,") != std::string::npos);
  CHECK(csv.find("\nhead,") != std::string::npos);
  CHECK(csv.find("\ntotal,,," + std::to_string(flops(s, c, 32)) + ",") != std::string::npos);
}
