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

#include "trionas/evo.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <map>
#include <mutex>
#include <thread>

#include "trionas/cost.hpp"
#include "trionas/trainer.hpp"

namespace trionas {

void EvoConfig::validate() const {
  auto fail = [](const std::string& what) { throw ValidationError("evo config: " + what); };
  if (population < 1) fail("population must be positive");
  if (generations < 0) fail("generations must be non-negative");
  if (!(parent_fraction > 0 && parent_fraction <= 1)) fail("parent fraction must be in (0, 1]");
  if (!(mutation_prob >= 0 && mutation_prob <= 1)) fail("mutation probability must be in [0, 1]");
  if (!(crossover_fraction >= 0 && crossover_fraction <= 1)) fail("crossover fraction must be in [0, 1]");
  if (budget_flops <= 0) fail("FLOPs budget must be positive");
  if (eval_batches < 1) fail("eval batches must be positive");
  if (batch_size < 1) fail("batch size must be positive");
  if (threads < 1) fail("threads must be positive");
}

namespace {

template <typename T>
T pick(const std::vector<T>& options, Rng& rng) {
  return options[static_cast<std::size_t>(rng.uniform_int(static_cast<int64_t>(options.size())))];
}

BlockGene mutate_gene(const BlockGene& gene, double p, Rng& rng, const SpaceDefinition& space) {
  if (rng.bernoulli(p)) {
    return random_gene(space, rng, random_operator(space, rng, SamplingMode::kHierarchical));
  }
  BlockGene g = gene;
  const OperatorOptions& o = space.options(g.op);
  if (rng.bernoulli(p)) g.expansion = pick(o.expansions, rng);
  if (uses_kernel(g.op) && rng.bernoulli(p)) g.kernel = pick(o.kernels, rng);
  if (is_attention(g.op)) {
    if (rng.bernoulli(p)) g.qk = pick(o.qk_rates, rng);
    if (rng.bernoulli(p)) g.v = pick(o.v_rates, rng);
    if (rng.bernoulli(p)) g.heads = pick(o.heads, rng);
  }
  return g;
}

}  // namespace

ArchitectureConfig mutate(const ArchitectureConfig& config, double p, Rng& rng,
                          const SpaceDefinition& space) {
  if (!(p >= 0 && p <= 1)) throw ValidationError("mutation probability must be in [0, 1]");
  validate(space, config);
  ArchitectureConfig out;
  int offset = 0;
  for (int s = 0; s < space.num_stages(); ++s) {
    const int old_depth = config.depths[static_cast<std::size_t>(s)];
    int depth = old_depth;
    if (rng.bernoulli(p)) depth = pick(space.depth_options[static_cast<std::size_t>(s)], rng);
    out.depths.push_back(depth);
    for (int i = 0; i < depth; ++i) {
      if (i < old_depth) {
        out.genes.push_back(mutate_gene(config.genes[static_cast<std::size_t>(offset + i)], p, rng, space));
      } else {
        out.genes.push_back(random_gene(space, rng, SamplingMode::kHierarchical));
      }
    }
    offset += old_depth;
  }
  validate(space, out);
  return out;
}

ArchitectureConfig crossover(const ArchitectureConfig& a, const ArchitectureConfig& b,
                             Rng& rng, const SpaceDefinition& space) {
  validate(space, a);
  validate(space, b);
  ArchitectureConfig out;
  int off_a = 0, off_b = 0;
  for (int s = 0; s < space.num_stages(); ++s) {
    const int da = a.depths[static_cast<std::size_t>(s)];
    const int db = b.depths[static_cast<std::size_t>(s)];
    const int depth = rng.bernoulli(0.5) ? da : db;
    out.depths.push_back(depth);
    for (int i = 0; i < depth; ++i) {
      const bool in_a = i < da, in_b = i < db;
      const bool from_a = in_a && (!in_b || rng.bernoulli(0.5));
      out.genes.push_back(from_a ? a.genes[static_cast<std::size_t>(off_a + i)]
                                 : b.genes[static_cast<std::size_t>(off_b + i)]);
    }
    off_a += da;
    off_b += db;
  }
  validate(space, out);
  return out;
}

namespace {

constexpr int kMaxTries = 1000;

// FLOPs-minimal gene for every block slot at maximum depth.
std::vector<std::vector<BlockGene>> cheapest_genes(const SpaceDefinition& space, int resolution) {
  std::vector<std::vector<BlockGene>> out;
  for (const auto& stage : block_layouts(space, resolution)) {
    out.emplace_back();
    for (const BlockLayout& layout : stage) {
      BlockGene best;
      int64_t best_flops = -1;
      for (Operator op : space.enabled_operators())
        for (const BlockGene& g : enumerate_genes(space, op)) {
          const int64_t f = block_cost(layout, g).flops;
          if (best_flops < 0 || f < best_flops) {
            best = g;
            best_flops = f;
          }
        }
      out.back().push_back(best);
    }
  }
  return out;
}

// Moves each depth and gene to its cheapest choice with probability q. At
// q = 1 the result is the global minimum-FLOPs config.
ArchitectureConfig shrink(const ArchitectureConfig& c, double q, Rng& rng,
                          const SpaceDefinition& space,
                          const std::vector<std::vector<BlockGene>>& cheapest) {
  if (q <= 0) return c;
  ArchitectureConfig out;
  int offset = 0;
  for (int s = 0; s < space.num_stages(); ++s) {
    const int old_depth = c.depths[static_cast<std::size_t>(s)];
    const int depth = rng.bernoulli(q) ? space.min_depth(s) : old_depth;
    out.depths.push_back(depth);
    for (int i = 0; i < depth; ++i) {
      const BlockGene& g = c.genes[static_cast<std::size_t>(offset + i)];
      out.genes.push_back(rng.bernoulli(q) ? cheapest[static_cast<std::size_t>(s)][static_cast<std::size_t>(i)] : g);
    }
    offset += old_depth;
  }
  return out;
}

void evaluate_all(std::vector<Individual>& pop, std::size_t from, const FitnessFn& fitness,
                  int threads, std::map<std::string, double>& cache) {
  std::vector<std::size_t> todo;
  std::map<std::string, std::size_t> first;
  for (std::size_t i = from; i < pop.size(); ++i) {
    const std::string key = serialize(pop[i].config);
    if (cache.count(key) == 0 && first.emplace(key, i).second) todo.push_back(i);
  }
  std::vector<double> results(todo.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&]() {
    for (std::size_t j = next++; j < todo.size(); j = next++) {
      try {
        results[j] = fitness(pop[todo[j]].config);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };
  const int n = std::max(1, std::min<int>(threads, static_cast<int>(todo.size())));
  if (n == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (error) std::rethrow_exception(error);
  for (std::size_t j = 0; j < todo.size(); ++j) cache[serialize(pop[todo[j]].config)] = results[j];
  for (std::size_t i = from; i < pop.size(); ++i) pop[i].fitness = cache.at(serialize(pop[i].config));
}

// Higher fitness first; fewer FLOPs on ties; otherwise keep order.
void rank(std::vector<Individual>& pop) {
  std::stable_sort(pop.begin(), pop.end(), [](const Individual& a, const Individual& b) {
    if (a.fitness != b.fitness) return a.fitness > b.fitness;
    return a.flops < b.flops;
  });
}

GenerationStats summarize(int generation, const std::vector<Individual>& ranked) {
  GenerationStats g;
  g.generation = generation;
  g.best_fitness = ranked.front().fitness;
  g.best_flops = ranked.front().flops;
  double sum = 0;
  for (const Individual& i : ranked) sum += i.fitness;
  g.mean_fitness = sum / static_cast<double>(ranked.size());
  return g;
}

}  // namespace

SearchResult evolutionary_search(const SpaceDefinition& space, int resolution,
                                 const EvoConfig& cfg, const FitnessFn& fitness) {
  cfg.validate();
  const int64_t min_flops = flops(space, global_min_config(space, resolution), resolution);
  if (cfg.budget_flops < min_flops) {
    throw ValidationError("FLOPs budget " + std::to_string(cfg.budget_flops) +
                          " is below the minimum config's " + std::to_string(min_flops));
  }
  const auto cheapest = cheapest_genes(space, resolution);
  Rng rng(cfg.seed);
  auto feasible = [&](const char* what, const std::function<ArchitectureConfig()>& draw) {
    // Later tries are pulled toward the cheapest config so tight budgets
    // remain satisfiable; loose budgets accept on the first tries.
    for (int t = 0; t < kMaxTries; ++t) {
      const double q = static_cast<double>(t) / (kMaxTries - 1);
      ArchitectureConfig c = shrink(draw(), q, rng, space, cheapest);
      const int64_t f = flops(space, c, resolution);
      if (f <= cfg.budget_flops) return Individual{std::move(c), 0.0, f};
    }
    throw SearchError(std::string("no ") + what + " within " + std::to_string(cfg.budget_flops) +
                      " FLOPs after " + std::to_string(kMaxTries) + " tries (minimum config " +
                      std::to_string(min_flops) + " FLOPs)");
  };

  std::map<std::string, double> cache;
  std::vector<Individual> pop;
  for (int i = 0; i < cfg.population; ++i) {
    pop.push_back(feasible("initial individual", [&] {
      return random_config(space, rng, SamplingMode::kHierarchical);
    }));
  }
  evaluate_all(pop, 0, fitness, cfg.threads, cache);
  rank(pop);
  SearchResult result;
  result.history.push_back(summarize(0, pop));

  const std::size_t parents = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::ceil(cfg.parent_fraction * cfg.population)));
  for (int gen = 1; gen <= cfg.generations; ++gen) {
    pop.resize(std::min(parents, pop.size()));
    const std::size_t n_parents = pop.size();
    while (pop.size() < static_cast<std::size_t>(cfg.population)) {
      pop.push_back(feasible("offspring", [&] {
        const auto& a = pop[static_cast<std::size_t>(rng.uniform_int(static_cast<int64_t>(n_parents)))].config;
        if (rng.bernoulli(cfg.crossover_fraction)) {
          const auto& b = pop[static_cast<std::size_t>(rng.uniform_int(static_cast<int64_t>(n_parents)))].config;
          return crossover(a, b, rng, space);
        }
        return mutate(a, cfg.mutation_prob, rng, space);
      }));
    }
    evaluate_all(pop, n_parents, fitness, cfg.threads, cache);
    rank(pop);
    result.history.push_back(summarize(gen, pop));
  }
  result.best = pop.front();
  result.population = pop;
  return result;
}

FitnessFn supernet_fitness(const SupernetWeights& store, Sharing sharing,
                           const Dataset& recal, const Dataset& evo_split,
                           int recal_batches, int batch_size) {
  if (evo_split.size() == 0) throw ValidationError("evo split is empty");
  return [&store, sharing, &recal, &evo_split, recal_batches, batch_size](
             const ArchitectureConfig& config) {
    CandidateNet net = instantiate_candidate(store, config, sharing);
    return recalibrated_accuracy(net, recal, evo_split, recal_batches, batch_size);
  };
}

std::string history_csv(const std::vector<GenerationStats>& history) {
  std::string out = "generation,best_fitness,mean_fitness,best_flops\n";
  char buf[160];
  for (const GenerationStats& g : history) {
    std::snprintf(buf, sizeof buf, "%d,%.6f,%.6f,%lld\n", g.generation, g.best_fitness,
                  g.mean_fitness, static_cast<long long>(g.best_flops));
    out += buf;
  }
  return out;
}

int env_threads(int fallback) {
  const char* v = std::getenv("TRIONAS_THREADS");
  if (v == nullptr || *v == '\0') return std::max(1, fallback);
  const int n = std::atoi(v);
  if (n < 1) throw ValidationError(std::string("TRIONAS_THREADS must be a positive integer, got '") + v + "'");
  return n;
}

}  // namespace trionas
