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

#include "trionas/space.hpp"

#include <algorithm>
#include <charconv>
#include <map>
#include <numeric>
#include <sstream>

#include "trionas/cost.hpp"

namespace trionas {

namespace {

int parse_int(std::string_view text, const std::string& what) {
  int value = 0;
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    throw ValidationError("invalid integer for " + what + ": '" +
                          std::string(text) + "'");
  }
  return value;
}

template <typename T>
std::string options_str(const std::vector<T>& values) {
  std::ostringstream os;
  os << '{';
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) os << ',';
    if constexpr (std::is_same_v<T, Rational>) {
      os << values[i].str();
    } else {
      os << values[i];
    }
  }
  os << '}';
  return os.str();
}

template <typename T>
bool contains(const std::vector<T>& values, const T& v) {
  return std::find(values.begin(), values.end(), v) != values.end();
}

template <typename T>
const T& pick(const std::vector<T>& values, Rng& rng) {
  return values[static_cast<std::size_t>(
      rng.uniform_int(static_cast<int64_t>(values.size())))];
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = s.find(sep, start);
    out.push_back(s.substr(start, pos == std::string_view::npos ? pos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::vector<std::string_view> tokens(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
    const std::size_t start = i;
    while (i < s.size() && s[i] != ' ' && s[i] != '\t') ++i;
    if (i > start) out.push_back(s.substr(start, i - start));
  }
  return out;
}

int ceil_div(int64_t a, int64_t b) { return static_cast<int>((a + b - 1) / b); }

}  // namespace

Rational Rational::parse(std::string_view text) {
  const auto slash = text.find('/');
  Rational r;
  if (slash == std::string_view::npos) {
    r.num = parse_int(text, "rate");
    r.den = 1;
  } else {
    r.num = parse_int(text.substr(0, slash), "rate");
    r.den = parse_int(text.substr(slash + 1), "rate");
  }
  if (r.num <= 0 || r.den <= 0) {
    throw ValidationError("rate must be positive: '" + std::string(text) + "'");
  }
  return r;
}

std::string Rational::str() const {
  const int g = std::gcd(num, den);
  if (den / g == 1) return std::to_string(num / g);
  return std::to_string(num / g) + "/" + std::to_string(den / g);
}

int Rational::scale_exact(int n) const {
  const int64_t p = static_cast<int64_t>(n) * num;
  if (p % den != 0) {
    throw ValidationError("width " + std::to_string(n) + " times rate " + str() +
                          " is not an integer");
  }
  return static_cast<int>(p / den);
}

std::string_view operator_name(Operator op) {
  switch (op) {
    case Operator::kConv:
      return "conv";
    case Operator::kLocal:
      return "local";
    case Operator::kAxial:
      return "axial";
  }
  return "?";
}

Operator parse_operator(std::string_view name) {
  for (Operator op : kAllOperators)
    if (operator_name(op) == name) return op;
  throw ValidationError("unknown operator '" + std::string(name) +
                        "', expected one of {conv,local,axial}");
}

int ArchitectureConfig::total_blocks() const {
  return std::accumulate(depths.begin(), depths.end(), 0);
}

const BlockGene& ArchitectureConfig::gene(int stage, int index) const {
  int offset = 0;
  for (int s = 0; s < stage; ++s) offset += depths[static_cast<std::size_t>(s)];
  return genes.at(static_cast<std::size_t>(offset + index));
}

const OperatorOptions& SpaceDefinition::options(Operator op) const {
  switch (op) {
    case Operator::kConv:
      return conv;
    case Operator::kLocal:
      return local;
    case Operator::kAxial:
      return axial;
  }
  throw std::logic_error("bad operator");
}

int SpaceDefinition::max_depth(int stage) const {
  const auto& o = depth_options.at(static_cast<std::size_t>(stage));
  return *std::max_element(o.begin(), o.end());
}

int SpaceDefinition::min_depth(int stage) const {
  const auto& o = depth_options.at(static_cast<std::size_t>(stage));
  return *std::min_element(o.begin(), o.end());
}

std::vector<Operator> SpaceDefinition::enabled_operators() const {
  std::vector<Operator> out;
  for (Operator op : kAllOperators)
    if (block_choice_count(*this, op) > 0) out.push_back(op);
  return out;
}

SpaceDefinition SpaceDefinition::standard(int base_width) {
  if (base_width < 8 || base_width % 8 != 0) {
    throw ValidationError("base width must be a positive multiple of 8, got " +
                          std::to_string(base_width));
  }
  SpaceDefinition s;
  s.conv.expansions = {{1, 8}, {1, 4}};
  s.conv.kernels = {3, 5, 7};
  s.local.expansions = {{1, 4}, {1, 2}};
  s.local.kernels = {3, 5, 7};
  s.local.qk_rates = {{1, 2}, {1, 1}};
  s.local.v_rates = {{1, 2}, {1, 1}};
  s.local.heads = {4, 8};
  s.axial.expansions = {{1, 4}, {1, 2}};
  s.axial.qk_rates = {{1, 2}, {1, 1}};
  s.axial.v_rates = {{1, 2}, {1, 1}};
  s.axial.heads = {4, 8};
  s.depth_options = {{1, 2}, {2, 3}, {3, 4, 5, 6}, {1, 2, 3}};
  s.stage_widths = {base_width, 2 * base_width, 4 * base_width, 8 * base_width};
  s.stem_width = base_width;
  return s;
}

std::vector<BlockGene> enumerate_genes(const SpaceDefinition& space, Operator op) {
  const OperatorOptions& o = space.options(op);
  std::vector<BlockGene> out;
  const std::vector<int> no_int{0};
  const std::vector<Rational> no_rate{{0, 1}};
  const auto& kernels = uses_kernel(op) ? o.kernels : no_int;
  const auto& qks = is_attention(op) ? o.qk_rates : no_rate;
  const auto& vs = is_attention(op) ? o.v_rates : no_rate;
  const auto& heads = is_attention(op) ? o.heads : no_int;
  for (const Rational& e : o.expansions)
    for (int k : kernels)
      for (const Rational& qk : qks)
        for (const Rational& v : vs)
          for (int h : heads) {
            BlockGene g;
            g.op = op;
            g.expansion = e;
            if (uses_kernel(op)) g.kernel = k;
            if (is_attention(op)) {
              g.qk = qk;
              g.v = v;
              g.heads = h;
            }
            out.push_back(g);
          }
  return out;
}

int64_t block_choice_count(const SpaceDefinition& space, Operator op) {
  const OperatorOptions& o = space.options(op);
  int64_t n = static_cast<int64_t>(o.expansions.size());
  if (uses_kernel(op)) n *= static_cast<int64_t>(o.kernels.size());
  if (is_attention(op)) {
    n *= static_cast<int64_t>(o.qk_rates.size() * o.v_rates.size() *
                              o.heads.size());
  }
  return n;
}

int64_t block_choice_total(const SpaceDefinition& space) {
  int64_t n = 0;
  for (Operator op : kAllOperators) n += block_choice_count(space, op);
  return n;
}

BigInt total_cardinality(const SpaceDefinition& space) {
  const BigInt per_block = block_choice_total(space);
  BigInt total = 1;
  for (const auto& options : space.depth_options) {
    BigInt stage_sum = 0;
    for (int d : options) {
      BigInt term = 1;
      for (int i = 0; i < d; ++i) term *= per_block;
      stage_sum += term;
    }
    total *= stage_sum;
  }
  return total;
}

std::optional<std::string> gene_error(const SpaceDefinition& space,
                                      const BlockGene& g) {
  const std::string name(operator_name(g.op));
  if (block_choice_count(space, g.op) == 0) {
    return "operator " + name + " has no choices in this space";
  }
  const OperatorOptions& o = space.options(g.op);
  if (!contains(o.expansions, g.expansion)) {
    return "expansion=" + g.expansion.str() + " not in " +
           options_str(o.expansions) + " for " + name;
  }
  if (uses_kernel(g.op)) {
    if (!g.kernel) return "kernel missing for " + name;
    if (!contains(o.kernels, *g.kernel)) {
      return "kernel=" + std::to_string(*g.kernel) + " not in " +
             options_str(o.kernels) + " for " + name;
    }
  } else if (g.kernel) {
    return "kernel is not an option of " + name;
  }
  if (is_attention(g.op)) {
    if (!g.qk || !g.v || !g.heads) return "qk, v and heads required for " + name;
    if (!contains(o.qk_rates, *g.qk))
      return "qk=" + g.qk->str() + " not in " + options_str(o.qk_rates) + " for " + name;
    if (!contains(o.v_rates, *g.v))
      return "v=" + g.v->str() + " not in " + options_str(o.v_rates) + " for " + name;
    if (!contains(o.heads, *g.heads)) {
      return "heads=" + std::to_string(*g.heads) + " not in " +
             options_str(o.heads) + " for " + name;
    }
  } else if (g.qk || g.v || g.heads) {
    return "qk, v and heads are not options of " + name;
  }
  return std::nullopt;
}

void validate(const SpaceDefinition& space, const ArchitectureConfig& config) {
  if (static_cast<int>(config.depths.size()) != space.num_stages()) {
    throw ValidationError("expected " + std::to_string(space.num_stages()) +
                          " stage depths, got " +
                          std::to_string(config.depths.size()));
  }
  for (int s = 0; s < space.num_stages(); ++s) {
    const auto& opts = space.depth_options[static_cast<std::size_t>(s)];
    const int d = config.depths[static_cast<std::size_t>(s)];
    if (!contains(opts, d)) {
      throw ValidationError("depth " + std::to_string(d) + " of stage " +
                            std::to_string(s) + " not in " + options_str(opts));
    }
  }
  const int expected = config.total_blocks();
  if (static_cast<int>(config.genes.size()) != expected) {
    throw ValidationError("gene count " + std::to_string(config.genes.size()) +
                          " != " + std::to_string(expected));
  }
  for (std::size_t i = 0; i < config.genes.size(); ++i) {
    if (auto err = gene_error(space, config.genes[i])) {
      throw ValidationError("block " + std::to_string(i) + ": " + *err);
    }
  }
}

std::string_view sampling_mode_name(SamplingMode mode) {
  return mode == SamplingMode::kHierarchical ? "hierarchical"
                                             : "uniform-candidate";
}

SamplingMode parse_sampling_mode(std::string_view name) {
  if (name == "hierarchical") return SamplingMode::kHierarchical;
  if (name == "uniform-candidate") return SamplingMode::kUniformCandidate;
  throw ValidationError("unknown policy '" + std::string(name) +
                        "', expected hierarchical or uniform-candidate");
}

Operator random_operator(const SpaceDefinition& space, Rng& rng,
                         SamplingMode mode) {
  const auto ops = space.enabled_operators();
  if (ops.empty()) throw ValidationError("search space has no operators");
  if (mode == SamplingMode::kHierarchical) return pick(ops, rng);
  int64_t r = rng.uniform_int(block_choice_total(space));
  for (Operator op : ops) {
    const int64_t n = block_choice_count(space, op);
    if (r < n) return op;
    r -= n;
  }
  return ops.back();
}

BlockGene random_gene(const SpaceDefinition& space, Rng& rng, Operator op) {
  const auto genes = enumerate_genes(space, op);
  return pick(genes, rng);
}

BlockGene random_gene(const SpaceDefinition& space, Rng& rng, SamplingMode mode) {
  if (mode == SamplingMode::kHierarchical) {
    const Operator op = random_operator(space, rng, mode);
    return random_gene(space, rng, op);
  }
  // Flat draw over every (operator, options) pair.
  int64_t r = rng.uniform_int(block_choice_total(space));
  for (Operator op : space.enabled_operators()) {
    const int64_t n = block_choice_count(space, op);
    if (r < n) return enumerate_genes(space, op)[static_cast<std::size_t>(r)];
    r -= n;
  }
  throw std::logic_error("random_gene: empty space");
}

std::vector<int> random_depths(const SpaceDefinition& space, Rng& rng) {
  std::vector<int> depths;
  for (const auto& opts : space.depth_options) depths.push_back(pick(opts, rng));
  return depths;
}

ArchitectureConfig random_config(const SpaceDefinition& space, Rng& rng,
                                 SamplingMode mode) {
  ArchitectureConfig c;
  c.depths = random_depths(space, rng);
  for (int i = 0; i < c.total_blocks(); ++i) c.genes.push_back(random_gene(space, rng, mode));
  return c;
}

OperatorAssignment random_assignment(const SpaceDefinition& space, Rng& rng,
                                     SamplingMode mode) {
  OperatorAssignment ops(static_cast<std::size_t>(space.num_stages()));
  for (int s = 0; s < space.num_stages(); ++s)
    for (int i = 0; i < space.max_depth(s); ++i)
      ops[static_cast<std::size_t>(s)].push_back(random_operator(space, rng, mode));
  return ops;
}

ArchitectureConfig random_config(const SpaceDefinition& space, Rng& rng,
                                 const OperatorAssignment& ops) {
  ArchitectureConfig c;
  c.depths = random_depths(space, rng);
  for (int s = 0; s < space.num_stages(); ++s)
    for (int i = 0; i < c.depths[static_cast<std::size_t>(s)]; ++i)
      c.genes.push_back(random_gene(
          space, rng, ops[static_cast<std::size_t>(s)][static_cast<std::size_t>(i)]));
  return c;
}

namespace {

// Chooses per block among `candidates(stage, index)` by FLOPs.
template <typename CandidateFn>
ArchitectureConfig extreme_config(const SpaceDefinition& space, int resolution,
                                  bool maximize, CandidateFn candidates) {
  const auto layouts = block_layouts(space, resolution);
  ArchitectureConfig c;
  for (int s = 0; s < space.num_stages(); ++s)
    c.depths.push_back(maximize ? space.max_depth(s) : space.min_depth(s));
  for (int s = 0; s < space.num_stages(); ++s) {
    for (int i = 0; i < c.depths[static_cast<std::size_t>(s)]; ++i) {
      const BlockLayout& layout =
          layouts[static_cast<std::size_t>(s)][static_cast<std::size_t>(i)];
      const std::vector<BlockGene> genes = candidates(s, i);
      std::size_t best = 0;
      int64_t best_flops = block_cost(layout, genes[0]).flops;
      for (std::size_t j = 1; j < genes.size(); ++j) {
        const int64_t f = block_cost(layout, genes[j]).flops;
        if (maximize ? f >= best_flops : f < best_flops) {
          best = j;
          best_flops = f;
        }
      }
      c.genes.push_back(genes[best]);
    }
  }
  return c;
}

void check_assignment(const SpaceDefinition& space, const OperatorAssignment& ops) {
  if (static_cast<int>(ops.size()) != space.num_stages()) {
    throw ValidationError("operator assignment must cover every stage");
  }
  for (int s = 0; s < space.num_stages(); ++s) {
    if (static_cast<int>(ops[static_cast<std::size_t>(s)].size()) < space.max_depth(s)) {
      throw ValidationError("operator assignment too short for stage " +
                            std::to_string(s));
    }
  }
}

}  // namespace

ArchitectureConfig min_config(const SpaceDefinition& space,
                              const OperatorAssignment& ops, int resolution) {
  check_assignment(space, ops);
  return extreme_config(space, resolution, false, [&](int s, int i) {
    return enumerate_genes(
        space, ops[static_cast<std::size_t>(s)][static_cast<std::size_t>(i)]);
  });
}

ArchitectureConfig max_config(const SpaceDefinition& space,
                              const OperatorAssignment& ops, int resolution) {
  check_assignment(space, ops);
  return extreme_config(space, resolution, true, [&](int s, int i) {
    return enumerate_genes(
        space, ops[static_cast<std::size_t>(s)][static_cast<std::size_t>(i)]);
  });
}

namespace {
std::vector<BlockGene> all_genes(const SpaceDefinition& space) {
  std::vector<BlockGene> out;
  for (Operator op : space.enabled_operators()) {
    auto g = enumerate_genes(space, op);
    out.insert(out.end(), g.begin(), g.end());
  }
  return out;
}
}  // namespace

ArchitectureConfig global_min_config(const SpaceDefinition& space, int resolution) {
  const auto genes = all_genes(space);
  return extreme_config(space, resolution, false, [&](int, int) { return genes; });
}

ArchitectureConfig global_max_config(const SpaceDefinition& space, int resolution) {
  const auto genes = all_genes(space);
  return extreme_config(space, resolution, true, [&](int, int) { return genes; });
}

ArchitectureConfig uniform_max_config(const SpaceDefinition& space, Operator op,
                                      int resolution) {
  OperatorAssignment ops(static_cast<std::size_t>(space.num_stages()));
  for (int s = 0; s < space.num_stages(); ++s)
    ops[static_cast<std::size_t>(s)].assign(static_cast<std::size_t>(space.max_depth(s)), op);
  return max_config(space, ops, resolution);
}

std::string describe_gene(const BlockGene& g) {
  std::ostringstream os;
  os << "op=" << operator_name(g.op) << " expansion=" << g.expansion.str();
  if (g.kernel) os << " kernel=" << *g.kernel;
  if (g.qk) os << " qk=" << g.qk->str();
  if (g.v) os << " v=" << g.v->str();
  if (g.heads) os << " heads=" << *g.heads;
  return os.str();
}

std::string serialize(const ArchitectureConfig& config) {
  std::ostringstream os;
  os << "depths=";
  for (std::size_t i = 0; i < config.depths.size(); ++i) {
    if (i) os << ',';
    os << config.depths[i];
  }
  os << '\n';
  std::size_t g = 0;
  for (std::size_t s = 0; s < config.depths.size(); ++s)
    for (int i = 0; i < config.depths[s]; ++i, ++g)
      os << "block " << s << ' ' << i << ' ' << describe_gene(config.genes.at(g)) << '\n';
  return os.str();
}

ArchitectureConfig deserialize(const SpaceDefinition& space, std::string_view text) {
  ArchitectureConfig config;
  bool have_depths = false;
  int line_no = 0;
  std::vector<std::pair<int, int>> positions;
  auto fail = [&](const std::string& msg) -> ParseError {
    return ParseError("line " + std::to_string(line_no) + ": " + msg);
  };
  for (std::string_view raw : split(text, '\n')) {
    ++line_no;
    std::string_view line = raw;
    if (auto hash = line.find('#'); hash != std::string_view::npos)
      line = line.substr(0, hash);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    const auto toks = tokens(line);
    if (toks.empty()) continue;
    try {
      if (!have_depths) {
        if (toks.size() != 1 || toks[0].substr(0, 7) != "depths=") {
          throw fail("expected 'depths=d1,d2,...' first");
        }
        for (std::string_view d : split(toks[0].substr(7), ','))
          config.depths.push_back(parse_int(d, "depth"));
        if (static_cast<int>(config.depths.size()) != space.num_stages()) {
          throw fail("expected " + std::to_string(space.num_stages()) +
                     " depths, got " + std::to_string(config.depths.size()));
        }
        for (int s = 0; s < space.num_stages(); ++s) {
          const auto& opts = space.depth_options[static_cast<std::size_t>(s)];
          if (!contains(opts, config.depths[static_cast<std::size_t>(s)])) {
            throw fail("depth " + std::to_string(config.depths[static_cast<std::size_t>(s)]) +
                       " of stage " + std::to_string(s) + " not in " + options_str(opts));
          }
        }
        have_depths = true;
        continue;
      }
      if (toks[0] != "block" || toks.size() < 4) {
        throw fail("expected 'block <stage> <index> op=... expansion=...'");
      }
      const int stage = parse_int(toks[1], "stage");
      const int index = parse_int(toks[2], "index");
      std::map<std::string, std::string> kv;
      for (std::size_t t = 3; t < toks.size(); ++t) {
        const auto eq = toks[t].find('=');
        if (eq == std::string_view::npos) throw fail("expected key=value, got '" + std::string(toks[t]) + "'");
        std::string key(toks[t].substr(0, eq));
        if (key != "op" && key != "expansion" && key != "kernel" && key != "qk" &&
            key != "v" && key != "heads") {
          throw fail("unknown key '" + key + "'");
        }
        if (!kv.emplace(key, std::string(toks[t].substr(eq + 1))).second)
          throw fail("duplicate key '" + key + "'");
      }
      if (!kv.count("op") || !kv.count("expansion")) throw fail("op and expansion are required");
      BlockGene g;
      g.op = parse_operator(kv["op"]);
      g.expansion = Rational::parse(kv["expansion"]);
      if (kv.count("kernel")) g.kernel = parse_int(kv["kernel"], "kernel");
      if (kv.count("qk")) g.qk = Rational::parse(kv["qk"]);
      if (kv.count("v")) g.v = Rational::parse(kv["v"]);
      if (kv.count("heads")) g.heads = parse_int(kv["heads"], "heads");
      if (auto err = gene_error(space, g)) throw fail(*err);
      positions.emplace_back(stage, index);
      config.genes.push_back(g);
    } catch (const ParseError&) {
      throw;
    } catch (const ValidationError& e) {
      throw fail(e.what());
    }
  }
  if (!have_depths) throw ParseError("missing 'depths=' line");
  const int expected = config.total_blocks();
  if (static_cast<int>(config.genes.size()) != expected) {
    throw ParseError("gene count " + std::to_string(config.genes.size()) +
                     " != " + std::to_string(expected));
  }
  std::size_t g = 0;
  for (int s = 0; s < space.num_stages(); ++s)
    for (int i = 0; i < config.depths[static_cast<std::size_t>(s)]; ++i, ++g) {
      if (positions[g] != std::make_pair(s, i)) {
        throw ParseError("block " + std::to_string(g) + " is labelled stage " +
                         std::to_string(positions[g].first) + " index " +
                         std::to_string(positions[g].second) + ", expected " +
                         std::to_string(s) + " " + std::to_string(i));
      }
    }
  return config;
}

int stem_resolution(const SpaceDefinition& space, int resolution) {
  if (resolution < 3) {
    throw ValidationError("resolution must be at least 3, got " +
                          std::to_string(resolution));
  }
  return (resolution + 2 - 3) / space.stem_stride + 1;
}

std::vector<std::vector<BlockLayout>> block_layouts(const SpaceDefinition& space,
                                                    int resolution) {
  int res = stem_resolution(space, resolution);
  const int halvings = space.num_stages() - 1;
  if (res % (1 << halvings) != 0) {
    throw ValidationError("stem output resolution " + std::to_string(res) +
                          " must be divisible by " + std::to_string(1 << halvings));
  }
  if (static_cast<int>(space.stage_widths.size()) != space.num_stages()) {
    throw ValidationError("stage width count does not match stage count");
  }
  std::vector<std::vector<BlockLayout>> out(static_cast<std::size_t>(space.num_stages()));
  int c_prev = space.stem_width;
  for (int s = 0; s < space.num_stages(); ++s) {
    const int width = space.stage_widths[static_cast<std::size_t>(s)];
    for (int i = 0; i < space.max_depth(s); ++i) {
      BlockLayout b;
      b.stage = s;
      b.index = i;
      b.c_in = i == 0 ? c_prev : width;
      b.c_out = width;
      b.stride = (i == 0 && s > 0) ? 2 : 1;
      b.in_res = res;
      b.out_res = res / b.stride;
      b.shortcut = b.c_in != b.c_out || b.stride != 1;
      res = b.out_res;
      out[static_cast<std::size_t>(s)].push_back(b);
    }
    c_prev = width;
  }
  return out;
}

OpDims op_dims(const BlockLayout& layout, const BlockGene& gene) {
  OpDims d;
  d.inner = gene.expansion.scale_exact(layout.c_out);
  if (d.inner < 1) throw ValidationError("inner width must be positive");
  if (gene.kernel) d.kernel = *gene.kernel;
  if (gene.op == Operator::kConv) {
    d.op_channels = d.inner;
    return d;
  }
  d.heads = *gene.heads;
  const int64_t v_total = static_cast<int64_t>(d.inner) * gene.v->num;
  d.dv = std::max(1, ceil_div(v_total, static_cast<int64_t>(gene.v->den) * d.heads));
  const int64_t q_total = static_cast<int64_t>(d.dv) * gene.qk->num;
  d.dq = std::max(1, ceil_div(q_total, gene.qk->den));
  d.op_channels = d.heads * d.dv;
  return d;
}

}  // namespace trionas
