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

#ifndef TRIONAS_EVO_HPP_
#define TRIONAS_EVO_HPP_

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "trionas/data.hpp"
#include "trionas/space.hpp"
#include "trionas/supernet.hpp"

namespace trionas {

struct EvoConfig {
  int population = 64;
  int generations = 20;
  double parent_fraction = 0.25;
  double mutation_prob = 0.1;
  double crossover_fraction = 0.5;  // share of offspring made by crossover
  int64_t budget_flops = 0;
  int eval_batches = 10;  // BN recalibration batches per candidate
  int batch_size = 64;
  uint64_t seed = 0;
  int threads = 1;

  void validate() const;
};

struct Individual {
  ArchitectureConfig config;
  double fitness = 0;
  int64_t flops = 0;
};

struct GenerationStats {
  int generation = 0;
  double best_fitness = 0;
  double mean_fitness = 0;
  int64_t best_flops = 0;
};

struct SearchResult {
  Individual best;
  std::vector<GenerationStats> history;
  std::vector<Individual> population;  // final generation
};

class SearchError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Re-samples each depth and each gene field with probability p. A re-sampled
// operator re-draws the whole block. Blocks added by a deeper stage are fresh
// hierarchical draws.
ArchitectureConfig mutate(const ArchitectureConfig& config, double p, Rng& rng,
                          const SpaceDefinition& space);

// Per stage the depth of a or b, per block the gene of whichever parent has
// that position (uniformly when both do).
ArchitectureConfig crossover(const ArchitectureConfig& a, const ArchitectureConfig& b,
                             Rng& rng, const SpaceDefinition& space);

// Must be safe to call concurrently for distinct configs.
using FitnessFn = std::function<double(const ArchitectureConfig&)>;

// Budget-constrained evolution with elitism: parents survive unchanged, so the
// best fitness never decreases.
SearchResult evolutionary_search(const SpaceDefinition& space, int resolution,
                                 const EvoConfig& cfg, const FitnessFn& fitness);

// Fitness of a sliced candidate: BN recalibration on `recal`, then top-1
// accuracy on `evo_split`.
FitnessFn supernet_fitness(const SupernetWeights& store, Sharing sharing,
                           const Dataset& recal, const Dataset& evo_split,
                           int recal_batches, int batch_size);

// Header `generation,best_fitness,mean_fitness,best_flops`.
std::string history_csv(const std::vector<GenerationStats>& history);

// Worker count from TRIONAS_THREADS (at least 1), or `fallback` when unset.
int env_threads(int fallback);

}  // namespace trionas

#endif  // TRIONAS_EVO_HPP_
