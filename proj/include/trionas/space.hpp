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

#ifndef TRIONAS_SPACE_HPP_
#define TRIONAS_SPACE_HPP_

#include <boost/multiprecision/cpp_int.hpp>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "trionas/random.hpp"

namespace trionas {

class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct Rational {
  int num = 1;
  int den = 1;

  static Rational parse(std::string_view text);
  std::string str() const;
  double value() const { return static_cast<double>(num) / den; }
  // Exact floor(n * num / den) when divisible; throws otherwise.
  int scale_exact(int n) const;
  bool operator==(const Rational& o) const {
    return static_cast<int64_t>(num) * o.den == static_cast<int64_t>(o.num) * den;
  }
};

enum class Operator { kConv = 0, kLocal = 1, kAxial = 2 };
inline constexpr Operator kAllOperators[] = {Operator::kConv, Operator::kLocal,
                                             Operator::kAxial};

std::string_view operator_name(Operator op);
Operator parse_operator(std::string_view name);

inline bool uses_kernel(Operator op) { return op != Operator::kAxial; }
inline bool is_attention(Operator op) { return op != Operator::kConv; }

// One block's operator and its options; inapplicable fields are empty.
struct BlockGene {
  Operator op = Operator::kConv;
  Rational expansion;
  std::optional<int> kernel;
  std::optional<Rational> qk;
  std::optional<Rational> v;
  std::optional<int> heads;

  bool operator==(const BlockGene&) const = default;
};

struct ArchitectureConfig {
  std::vector<int> depths;
  std::vector<BlockGene> genes;  // stage-major, sum(depths) entries

  bool operator==(const ArchitectureConfig&) const = default;
  int total_blocks() const;
  // Gene of block `index` within `stage`.
  const BlockGene& gene(int stage, int index) const;
};

struct OperatorOptions {
  std::vector<Rational> expansions;
  std::vector<int> kernels;
  std::vector<Rational> qk_rates;
  std::vector<Rational> v_rates;
  std::vector<int> heads;
};

struct SpaceDefinition {
  OperatorOptions conv;
  OperatorOptions local;
  OperatorOptions axial;
  std::vector<std::vector<int>> depth_options;  // per stage
  std::vector<int> stage_widths;                // output width per stage
  int stem_width = 32;
  int stem_stride = 1;
  int in_channels = 3;
  int num_classes = 2;

  const OperatorOptions& options(Operator op) const;
  int num_stages() const { return static_cast<int>(depth_options.size()); }
  int max_depth(int stage) const;
  int min_depth(int stage) const;
  // Operators with at least one choice, in enum order.
  std::vector<Operator> enabled_operators() const;

  // Four stages of widths base * {1, 2, 4, 8} with the option lists of the
  // conv / local-attention / axial-attention search space.
  static SpaceDefinition standard(int base_width = 32);
};

// All genes of one operator, expansion-major, in option-list order.
std::vector<BlockGene> enumerate_genes(const SpaceDefinition& space, Operator op);
int64_t block_choice_count(const SpaceDefinition& space, Operator op);
int64_t block_choice_total(const SpaceDefinition& space);

using BigInt = boost::multiprecision::cpp_int;
// Number of distinct architectures: product over stages of
// sum_{d in depth options} (choices per block)^d.
BigInt total_cardinality(const SpaceDefinition& space);

// nullopt when valid, otherwise a message naming the offending field.
std::optional<std::string> gene_error(const SpaceDefinition& space,
                                      const BlockGene& gene);
void validate(const SpaceDefinition& space, const ArchitectureConfig& config);

enum class SamplingMode { kHierarchical, kUniformCandidate };
std::string_view sampling_mode_name(SamplingMode mode);
SamplingMode parse_sampling_mode(std::string_view name);

// Per stage, per block slot (maximum depth) operator choice.
using OperatorAssignment = std::vector<std::vector<Operator>>;

Operator random_operator(const SpaceDefinition& space, Rng& rng,
                         SamplingMode mode);
BlockGene random_gene(const SpaceDefinition& space, Rng& rng, Operator op);
BlockGene random_gene(const SpaceDefinition& space, Rng& rng, SamplingMode mode);
std::vector<int> random_depths(const SpaceDefinition& space, Rng& rng);
ArchitectureConfig random_config(const SpaceDefinition& space, Rng& rng,
                                 SamplingMode mode);
OperatorAssignment random_assignment(const SpaceDefinition& space, Rng& rng,
                                     SamplingMode mode);
// Random depths and per-block options for a fixed operator assignment.
ArchitectureConfig random_config(const SpaceDefinition& space, Rng& rng,
                                 const OperatorAssignment& ops);

// Minimum depths and, per block, the options minimising analytical FLOPs for
// the assigned operator (ties to the lowest option index). max_config mirrors
// this with maximum depths, the FLOPs argmax and the highest index on ties.
ArchitectureConfig min_config(const SpaceDefinition& space,
                              const OperatorAssignment& ops, int resolution);
ArchitectureConfig max_config(const SpaceDefinition& space,
                              const OperatorAssignment& ops, int resolution);
// Same, with the operator also chosen per block by FLOPs.
ArchitectureConfig global_min_config(const SpaceDefinition& space, int resolution);
ArchitectureConfig global_max_config(const SpaceDefinition& space, int resolution);
// Every block uses `op` with its largest options.
ArchitectureConfig uniform_max_config(const SpaceDefinition& space, Operator op,
                                      int resolution);

class ParseError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// Line-oriented text form:
//   depths=2,3,6,3
//   block 0 0 op=conv expansion=1/8 kernel=3
std::string serialize(const ArchitectureConfig& config);
ArchitectureConfig deserialize(const SpaceDefinition& space, std::string_view text);
std::string describe_gene(const BlockGene& gene);

// Static geometry of one block slot.
struct BlockLayout {
  int stage = 0;
  int index = 0;
  int c_in = 0;
  int c_out = 0;
  int stride = 1;
  int in_res = 0;
  int out_res = 0;
  bool shortcut = false;
};

// Widths resolved from a gene inside a block slot.
struct OpDims {
  int inner = 0;        // proj_down output width
  int op_channels = 0;  // spatial operator output width
  int heads = 0;
  int dq = 0;  // per head
  int dv = 0;  // per head
  int kernel = 0;
};

int stem_resolution(const SpaceDefinition& space, int resolution);
// Blocks at maximum depth, stage-major. Throws ValidationError when the
// resolution cannot be halved at every stage boundary.
std::vector<std::vector<BlockLayout>> block_layouts(const SpaceDefinition& space,
                                                    int resolution);
// Per-head widths: dv = ceil(v_rate * inner / heads), dq = ceil(qk_rate * dv),
// both at least 1. These are exact whenever the rates divide evenly.
OpDims op_dims(const BlockLayout& layout, const BlockGene& gene);

}  // namespace trionas

#endif  // TRIONAS_SPACE_HPP_
