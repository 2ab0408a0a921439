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

#include <algorithm>
#include <atomic>
#include <functional>

#include "doctest.h"
#include "trionas/cost.hpp"
#include "trionas/evo.hpp"

using namespace trionas;

namespace {

constexpr int kRes = 32;

// Cheap fitness: rewards FLOPs with a deterministic per-config wobble.
double toy_fitness(const SpaceDefinition& space, const ArchitectureConfig& c) {
  const std::string s = serialize(c);
  const double wobble = static_cast<double>(std::hash<std::string>{}(s) % 1000) / 1e6;
  return static_cast<double>(flops(space, c, kRes)) / 1e7 + wobble;
}

EvoConfig small_config(int64_t budget) {
  EvoConfig cfg;
  cfg.population = 12;
  cfg.generations = 4;
  cfg.budget_flops = budget;
  cfg.seed = 3;
  return cfg;
}

int64_t min_flops(const SpaceDefinition& space) {
  return flops(space, global_min_config(space, kRes), kRes);
}

int64_t mid_budget(const SpaceDefinition& space) {
  return (min_flops(space) + flops(space, global_max_config(space, kRes), kRes)) / 2;
}

}  // namespace

TEST_CASE("mutation with probability zero is the identity") {
  const SpaceDefinition space = SpaceDefinition::standard(16);
  Rng rng(1);
  for (int t = 0; t < 200; ++t) {
    const ArchitectureConfig c = random_config(space, rng, SamplingMode::kHierarchical);
    CHECK(mutate(c, 0.0, rng, space) == c);
  }
}

TEST_CASE("mutation and crossover always produce valid configs") {
  const SpaceDefinition space = SpaceDefinition::standard(16);
  Rng rng(2);
  for (int t = 0; t < 10000; ++t) {
    const ArchitectureConfig a = random_config(space, rng, SamplingMode::kHierarchical);
    const ArchitectureConfig b = random_config(space, rng, SamplingMode::kUniformCandidate);
    const double p = rng.uniform01();
    CHECK_NOTHROW(validate(space, mutate(a, p, rng, space)));
    CHECK_NOTHROW(validate(space, crossover(a, b, rng, space)));
  }
}

TEST_CASE("mutation with probability one changes something") {
  const SpaceDefinition space = SpaceDefinition::standard(16);
  Rng rng(3);
  int changed = 0;
  for (int t = 0; t < 100; ++t) {
    const ArchitectureConfig c = random_config(space, rng, SamplingMode::kHierarchical);
    changed += mutate(c, 1.0, rng, space) != c;
  }
  CHECK(changed >= 95);
}

TEST_CASE("crossover of a config with itself is the config") {
  const SpaceDefinition space = SpaceDefinition::standard(16);
  Rng rng(4);
  for (int t = 0; t < 200; ++t) {
    const ArchitectureConfig c = random_config(space, rng, SamplingMode::kHierarchical);
    CHECK(crossover(c, c, rng, space) == c);
  }
}

TEST_CASE("crossover takes every depth and gene from a parent") {
  const SpaceDefinition space = SpaceDefinition::standard(16);
  Rng rng(5);
  for (int t = 0; t < 500; ++t) {
    const ArchitectureConfig a = random_config(space, rng, SamplingMode::kHierarchical);
    const ArchitectureConfig b = random_config(space, rng, SamplingMode::kHierarchical);
    const ArchitectureConfig c = crossover(a, b, rng, space);
    for (int s = 0; s < space.num_stages(); ++s) {
      const auto k = static_cast<std::size_t>(s);
      CHECK((c.depths[k] == a.depths[k] || c.depths[k] == b.depths[k]));
      for (int i = 0; i < c.depths[k]; ++i) {
        const BlockGene& g = c.gene(s, i);
        const bool from_a = i < a.depths[k] && a.gene(s, i) == g;
        const bool from_b = i < b.depths[k] && b.gene(s, i) == g;
        CHECK((from_a || from_b));
      }
    }
  }
}

TEST_CASE("zero generations returns the best of the initial population") {
  const SpaceDefinition space = SpaceDefinition::standard(16);
  EvoConfig cfg = small_config(mid_budget(space));
  cfg.generations = 0;
  const SearchResult r = evolutionary_search(
      space, kRes, cfg, [&](const ArchitectureConfig& c) { return toy_fitness(space, c); });
  REQUIRE(r.history.size() == 1);
  REQUIRE(r.population.size() == 12);
  double best = -1;
  for (const Individual& ind : r.population) best = std::max(best, ind.fitness);
  CHECK(r.best.fitness == best);
  CHECK(r.history[0].best_fitness == best);
}

TEST_CASE("every evaluated candidate respects the budget") {
  const SpaceDefinition space = SpaceDefinition::standard(16);
  for (int64_t budget : {min_flops(space) + 1, mid_budget(space)}) {
    CAPTURE(budget);
    EvoConfig cfg = small_config(budget);
    std::atomic<int> over{0};
    const SearchResult r = evolutionary_search(space, kRes, cfg, [&](const ArchitectureConfig& c) {
      if (flops(space, c, kRes) > budget) ++over;
      return toy_fitness(space, c);
    });
    CHECK(over == 0);
    CHECK(r.best.flops <= budget);
    CHECK(r.best.flops == flops(space, r.best.config, kRes));
    for (const Individual& ind : r.population) CHECK(ind.flops <= budget);
  }
}

TEST_CASE("elitism keeps the best fitness non-decreasing") {
  const SpaceDefinition space = SpaceDefinition::standard(16);
  for (uint64_t seed : {1, 2, 3}) {
    EvoConfig cfg = small_config(mid_budget(space));
    cfg.seed = seed;
    cfg.generations = 8;
    const SearchResult r = evolutionary_search(
        space, kRes, cfg, [&](const ArchitectureConfig& c) { return toy_fitness(space, c); });
    REQUIRE(r.history.size() == 9);
    for (std::size_t g = 1; g < r.history.size(); ++g) {
      CHECK(r.history[g].generation == static_cast<int>(g));
      CHECK(r.history[g].best_fitness >= r.history[g - 1].best_fitness);
      CHECK(r.history[g].best_fitness >= r.history[g].mean_fitness);
    }
    CHECK(r.best.fitness == r.history.back().best_fitness);
  }
}

TEST_CASE("search on a FLOPs-seeking fitness approaches the budget") {
  const SpaceDefinition space = SpaceDefinition::standard(16);
  EvoConfig cfg = small_config(mid_budget(space));
  cfg.population = 24;
  cfg.generations = 10;
  const SearchResult r = evolutionary_search(
      space, kRes, cfg, [&](const ArchitectureConfig& c) { return toy_fitness(space, c); });
  CHECK(r.best.flops > cfg.budget_flops * 8 / 10);
}

TEST_CASE("same seed, same search; threads do not matter") {
  const SpaceDefinition space = SpaceDefinition::standard(16);
  EvoConfig cfg = small_config(mid_budget(space));
  auto fit = [&](const ArchitectureConfig& c) { return toy_fitness(space, c); };
  const SearchResult a = evolutionary_search(space, kRes, cfg, fit);
  cfg.threads = 3;
  const SearchResult b = evolutionary_search(space, kRes, cfg, fit);
  CHECK(a.best.config == b.best.config);
  CHECK(history_csv(a.history) == history_csv(b.history));
  cfg.seed = 99;
  const SearchResult c = evolutionary_search(space, kRes, cfg, fit);
  CHECK(history_csv(a.history) != history_csv(c.history));
}

TEST_CASE("budget below the minimum config is rejected") {
  const SpaceDefinition space = SpaceDefinition::standard(16);
  const EvoConfig cfg = small_config(min_flops(space) - 1);
  CHECK_THROWS_AS(evolutionary_search(space, kRes, cfg, [](const ArchitectureConfig&) { return 0.0; }),
                  ValidationError);
}

TEST_CASE("config validation") {
  EvoConfig cfg = small_config(1000000);
  CHECK_NOTHROW(cfg.validate());
  for (auto bad : std::vector<std::function<void(EvoConfig&)>>{
           [](EvoConfig& c) { c.population = 0; },
           [](EvoConfig& c) { c.generations = -1; },
           [](EvoConfig& c) { c.parent_fraction = 0; },
           [](EvoConfig& c) { c.mutation_prob = 1.5; },
           [](EvoConfig& c) { c.crossover_fraction = -0.1; },
       }) {
    EvoConfig c = cfg;
    bad(c);
    CHECK_THROWS_AS(c.validate(), ValidationError);
  }
}

TEST_CASE("history csv layout") {
  std::vector<GenerationStats> h(2);
  h[0] = {0, 0.5, 0.25, 1000};
  h[1] = {1, 0.75, 0.5, 2000};
  const std::string csv = history_csv(h);
  CHECK(csv.rfind("generation,best_fitness,mean_fitness,best_flops\n", 0) == 0);
  CHECK(csv.find("\n1,") != std::string::npos);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
}
