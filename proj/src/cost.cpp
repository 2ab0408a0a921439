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

#include "trionas/cost.hpp"

#include <sstream>

namespace trionas {

using namespace cost_constants;

namespace {

// Projections + attention for one pass over `keys` keys per query.
BlockCost attention_pass(int64_t positions, int64_t d_in, const OpDims& d,
                         int64_t keys, int64_t rel_count) {
  const int64_t n = d.heads;
  const int64_t proj_rows = n * (2 * d.dq + d.dv);
  BlockCost c;
  c.flops += 2 * positions * d_in * proj_rows;
  c.flops += n * positions * keys * (2 * d.dq + kSoftmax + 2 * d.dv);
  c.params += proj_rows * d_in + n * d.dq * rel_count;
  return c;
}

}  // namespace

BlockCost block_cost(const BlockLayout& layout, const BlockGene& gene) {
  const OpDims d = op_dims(layout, gene);
  const int64_t p_in = static_cast<int64_t>(layout.in_res) * layout.in_res;
  const int64_t p_out = static_cast<int64_t>(layout.out_res) * layout.out_res;
  const int64_t inner = d.inner;
  const int64_t opc = d.op_channels;
  const int64_t c_in = layout.c_in;
  const int64_t c_out = layout.c_out;
  BlockCost c;

  // proj_down + BN + relu
  c.flops += 2 * p_in * c_in * inner + (kBatchNorm + kRelu) * p_in * inner;
  c.params += c_in * inner + 2 * inner;

  if (gene.op == Operator::kConv) {
    const int64_t k2 = static_cast<int64_t>(d.kernel) * d.kernel;
    c.flops += 2 * p_out * k2 * inner * inner;
    c.params += k2 * inner * inner;
  } else {
    if (layout.stride != 1) c.flops += kPool * p_in * inner;
    if (gene.op == Operator::kLocal) {
      const int64_t m2 = static_cast<int64_t>(d.kernel) * d.kernel;
      const BlockCost a = attention_pass(p_out, inner, d, m2, m2);
      c.flops += a.flops;
      c.params += a.params;
    } else {
      const int64_t len = layout.out_res;
      const BlockCost h = attention_pass(p_out, inner, d, len, 2 * len - 1);
      const BlockCost w = attention_pass(p_out, opc, d, len, 2 * len - 1);
      c.flops += h.flops + w.flops;
      c.params += h.params + w.params;
    }
  }
  // operator BN + relu
  c.flops += (kBatchNorm + kRelu) * p_out * opc;
  c.params += 2 * opc;

  // proj_up + BN
  c.flops += 2 * p_out * opc * c_out + kBatchNorm * p_out * c_out;
  c.params += opc * c_out + 2 * c_out;

  if (layout.shortcut) {
    c.flops += 2 * p_out * c_in * c_out + kBatchNorm * p_out * c_out;
    c.params += c_in * c_out + 2 * c_out;
  }
  c.flops += (kResidual + kRelu) * p_out * c_out;
  return c;
}

BlockCost stem_cost(const SpaceDefinition& space, int resolution) {
  const int64_t res = stem_resolution(space, resolution);
  const int64_t p = res * res;
  const int64_t w = space.stem_width;
  BlockCost c;
  c.flops = 2 * p * 9 * space.in_channels * w + (kBatchNorm + kRelu) * p * w;
  c.params = 9 * static_cast<int64_t>(space.in_channels) * w + 2 * w;
  return c;
}

BlockCost head_cost(const SpaceDefinition& space, int resolution) {
  const auto layouts = block_layouts(space, resolution);
  const int64_t res = layouts.back().back().out_res;
  const int64_t c = space.stage_widths.back();
  const int64_t k = space.num_classes;
  BlockCost h;
  h.flops = kGlobalPool * res * res * c + 2 * c * k + k;
  h.params = c * k + k;
  return h;
}

CostReport cost_report(const SpaceDefinition& space,
                       const ArchitectureConfig& config, int resolution) {
  validate(space, config);
  const auto layouts = block_layouts(space, resolution);
  CostReport report;
  auto push = [&report](CostEntry e) {
    report.flops += e.flops;
    report.params += e.params;
    report.entries.push_back(std::move(e));
  };
  const BlockCost stem = stem_cost(space, resolution);
  push({"stem", -1, -1, "stem", stem.flops, stem.params});
  int id = 0;
  for (int s = 0; s < space.num_stages(); ++s) {
    for (int i = 0; i < config.depths[static_cast<std::size_t>(s)]; ++i, ++id) {
      const BlockGene& g = config.genes[static_cast<std::size_t>(id)];
      const BlockCost b = block_cost(
          layouts[static_cast<std::size_t>(s)][static_cast<std::size_t>(i)], g);
      push({"block", id, s, std::string(operator_name(g.op)), b.flops, b.params});
    }
  }
  const BlockCost head = head_cost(space, resolution);
  push({"head", -1, space.num_stages(), "head", head.flops, head.params});
  return report;
}

std::string cost_csv(const CostReport& report) {
  std::ostringstream os;
  os << "block_id,stage,operator,flops,params\n";
  for (const CostEntry& e : report.entries) {
    if (e.label == "block") {
      os << e.block_id;
    } else {
      os << e.label;
    }
    os << ',' << e.stage << ',' << e.op << ',' << e.flops << ',' << e.params << '\n';
  }
  os << "total,,," << report.flops << ',' << report.params << '\n';
  return os.str();
}

}  // namespace trionas
