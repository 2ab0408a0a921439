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

#ifndef TRIONAS_COST_HPP_
#define TRIONAS_COST_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "trionas/space.hpp"

namespace trionas {

// Analytical cost model. FLOPs count 2 per multiply-add. Per-element
// constants:
//   batch norm (affine)      2
//   relu, residual add       1
//   2x2 average pool         1 per input element
//   softmax                  3 per logit
//   global average pool      1 per input element
// Attention logits cost 2 * dq per key (content and relative terms fused),
// the weighted sum 2 * dv per key. Local attention counts the full m x m
// window, axial attention the full axis.
namespace cost_constants {
inline constexpr int64_t kBatchNorm = 2;
inline constexpr int64_t kRelu = 1;
inline constexpr int64_t kResidual = 1;
inline constexpr int64_t kPool = 1;
inline constexpr int64_t kSoftmax = 3;
inline constexpr int64_t kGlobalPool = 1;
}  // namespace cost_constants

struct CostEntry {
  std::string label;  // "stem", "head" or "block"
  int block_id = -1;
  int stage = -1;
  std::string op;
  int64_t flops = 0;
  int64_t params = 0;
};

struct CostReport {
  int64_t flops = 0;
  int64_t params = 0;
  std::vector<CostEntry> entries;  // totals are the sums over entries
};

struct BlockCost {
  int64_t flops = 0;
  int64_t params = 0;
};

BlockCost block_cost(const BlockLayout& layout, const BlockGene& gene);
BlockCost stem_cost(const SpaceDefinition& space, int resolution);
BlockCost head_cost(const SpaceDefinition& space, int resolution);

CostReport cost_report(const SpaceDefinition& space,
                       const ArchitectureConfig& config, int resolution);
inline int64_t flops(const SpaceDefinition& space,
                     const ArchitectureConfig& config, int resolution) {
  return cost_report(space, config, resolution).flops;
}
inline int64_t params(const SpaceDefinition& space,
                      const ArchitectureConfig& config, int resolution) {
  return cost_report(space, config, resolution).params;
}

// CSV: block_id,stage,operator,flops,params
std::string cost_csv(const CostReport& report);

}  // namespace trionas

#endif  // TRIONAS_COST_HPP_
