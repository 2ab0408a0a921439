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

#ifndef TRIONAS_SAMPLING_HPP_
#define TRIONAS_SAMPLING_HPP_

#include <cstdint>
#include <vector>

#include "trionas/random.hpp"
#include "trionas/space.hpp"

namespace trionas {

struct SamplingPolicy {
  SamplingMode mode = SamplingMode::kHierarchical;
  bool sandwich = true;
  uint64_t seed = 0;
};

// Candidates trained in one optimiser step.
struct SampleStep {
  std::vector<ArchitectureConfig> configs;
  // Candidate whose parameters receive weight decay.
  std::size_t decay_index = 0;
};

// Sandwich off: one config drawn per policy.mode. Sandwich on: one operator
// assignment, then [min, max, random, random] for that assignment.
SampleStep sample_step(const SamplingPolicy& policy, const SpaceDefinition& space,
                       int resolution, Rng& rng);

}  // namespace trionas

#endif  // TRIONAS_SAMPLING_HPP_
