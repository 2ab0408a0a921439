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

#include "trionas/sampling.hpp"

namespace trionas {

SampleStep sample_step(const SamplingPolicy& policy, const SpaceDefinition& space,
                       int resolution, Rng& rng) {
  SampleStep step;
  if (!policy.sandwich) {
    step.configs.push_back(random_config(space, rng, policy.mode));
    return step;
  }
  const OperatorAssignment ops = random_assignment(space, rng, policy.mode);
  step.configs.push_back(min_config(space, ops, resolution));
  step.configs.push_back(max_config(space, ops, resolution));
  step.configs.push_back(random_config(space, rng, ops));
  step.configs.push_back(random_config(space, rng, ops));
  step.decay_index = 1;
  return step;
}

}  // namespace trionas
