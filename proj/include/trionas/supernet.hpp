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

#ifndef TRIONAS_SUPERNET_HPP_
#define TRIONAS_SUPERNET_HPP_

#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "trionas/operators.hpp"
#include "trionas/space.hpp"
#include "trionas/tensor.hpp"

namespace trionas {

enum class Sharing { kMhs, kNaive };
std::string_view sharing_name(Sharing s);
Sharing parse_sharing(std::string_view name);

// Row ids selected by multi-head sharing: rows split into `heads` groups of
// c_out / heads, first s_c_out / heads rows of each group.
std::vector<int64_t> multihead_rows(int64_t c_out, int heads, int64_t s_c_out);
// First s_c_out rows.
std::vector<int64_t> naive_rows(int64_t c_out, int64_t s_c_out);
// Flat indices of rows x cols of a (R, C) matrix.
std::vector<int64_t> matrix_index(const Shape& store, std::span<const int64_t> rows,
                                  std::span<const int64_t> cols);
// Flat indices of the first s_out x s_in channels and the centred k x k window
// of a (C_out, C_in, K, K) kernel.
std::vector<int64_t> conv_slice_index(const Shape& store, int64_t s_out,
                                      int64_t s_in, int k);

Tensor slice_conv_weight(const Tensor& w, int64_t s_c_out, int64_t s_c_in, int k);
Tensor slice_multihead_weight(const Tensor& w, int heads, int64_t s_c_out);
Tensor naive_slice(const Tensor& w, int64_t s_c_out);

// A parameter seen by one network: either a whole tensor or an index
// selection into a shared store. Reads and writes go to the store.
class ParamView {
 public:
  ParamView() = default;
  static ParamView whole(Tensor t);
  static ParamView slice(Tensor store, std::vector<int64_t> index, Shape shape);

  // Differentiable: gradients flow back into the underlying tensor.
  Tensor materialize() const;
  const Shape& shape() const { return shape_; }
  int64_t numel() const { return shape_numel(shape_); }
  Real read(int64_t i) const;
  void write(int64_t i, Real value);
  const Tensor& source() const { return source_; }
  bool is_slice() const { return index_ != nullptr; }
  // Flat source indices; empty span for whole views.
  std::span<const int64_t> index() const;

 private:
  Tensor source_;
  std::shared_ptr<const std::vector<int64_t>> index_;
  Shape shape_;
};

enum class InitKind { kHe, kLinear, kPositional, kOne, kZero, kClassifier };
void init_tensor(Tensor& t, InitKind kind, Rng& rng);

// Shape parameters of a standard space plus the input resolution; enough to
// rebuild a network from a checkpoint.
struct NetConfig {
  int base_width = 32;
  int stem_stride = 1;
  int in_channels = 3;
  int num_classes = 2;
  int resolution = 32;

  SpaceDefinition space() const;
  std::vector<int64_t> encode() const;
  static NetConfig decode(std::span<const int64_t> values);
};

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

// Widths and maxima of one block slot of the store.
struct SlotGeometry {
  BlockLayout layout;
  int down_rows = 0;  // proj_down rows: largest inner width of any operator
  int up_cols = 0;    // proj_up columns
  int conv_channels = 0;
  int conv_kernel = 0;
  struct Attention {
    int in_cols = 0;  // largest inner width
    int q_rows = 0;
    int v_rows = 0;
    int window = 0;  // local only
  };
  Attention local;
  Attention axial;
};

// Maximum-shape parameter store. Per block slot it keeps the shared
// projections, the three operator weight sets and one BN set per distinct
// width. Final BN scales of each block start at zero.
class SupernetWeights {
 public:
  static SupernetWeights create(const NetConfig& config, uint64_t seed);

  const NetConfig& config() const { return config_; }
  const SpaceDefinition& space() const { return space_; }
  const SlotGeometry& slot(int stage, int index) const;
  const Tensor& at(const std::string& name) const;
  bool contains(const std::string& name) const;
  const std::vector<NamedTensor>& tensors() const { return tensors_; }
  std::vector<Tensor> parameters() const;
  int64_t numel() const;
  // Deep copy; the copy shares no storage with this store.
  SupernetWeights clone() const;

  static std::string bn_down_name(int stage, int index, int width);
  static std::string bn_op_name(int stage, int index, Operator op, int width);

 private:
  friend SupernetWeights load_supernet(const std::string& path);
  void add(std::string name, Shape shape, InitKind kind, Rng& rng);

  NetConfig config_;
  SpaceDefinition space_;
  std::vector<std::vector<SlotGeometry>> slots_;
  std::vector<NamedTensor> tensors_;
  std::map<std::string, std::size_t> lookup_;
};

struct BlockViews {
  BlockLayout layout;
  BlockGene gene;
  OpDims dims;
  ParamView proj_down, bn_down_gamma, bn_down_beta;
  ParamView conv;
  ParamView wq, wk, wv, r;      // local, or axial height pass
  ParamView wq2, wk2, wv2, r2;  // axial width pass
  ParamView bn_op_gamma, bn_op_beta;
  ParamView proj_up, bn_up_gamma, bn_up_beta;
  ParamView shortcut, bn_short_gamma, bn_short_beta;
};

struct NamedView {
  std::string name;
  ParamView* view;
  InitKind init;
};

// A candidate network: stem, TrioBlocks and classifier. Parameters are views
// (into a supernet store, or whole tensors for a stand-alone network); BN
// running statistics are owned by the network.
class CandidateNet {
 public:
  CandidateNet(const CandidateNet&) = delete;
  CandidateNet& operator=(const CandidateNet&) = delete;
  CandidateNet(CandidateNet&&) = default;
  CandidateNet& operator=(CandidateNet&&) = default;

  // x: (B, in_channels, res, res). Returns logits (B, classes).
  Tensor forward(const Tensor& x, BnMode mode, LayerTrace* trace = nullptr);

  const ArchitectureConfig& arch() const { return arch_; }
  const NetConfig& config() const { return config_; }
  const std::vector<BlockViews>& blocks() const { return blocks_; }
  // Parameters in a fixed order with stable names.
  std::vector<NamedView> named_parameters();
  // Underlying tensors (deduplicated) for the optimiser.
  std::vector<Tensor> parameter_tensors();
  int64_t parameter_count();
  // Running statistics in a fixed order with stable names.
  std::vector<std::pair<std::string, BatchNormStats*>> named_stats();
  void reset_running_stats();

  // Stand-alone copy holding the current (sliced) parameter values and
  // running statistics in fresh tensors.
  CandidateNet detach() const;

  friend CandidateNet instantiate_candidate(const SupernetWeights& store,
                                            const ArchitectureConfig& arch,
                                            Sharing sharing);
  friend CandidateNet build_standalone(const NetConfig& config,
                                       const ArchitectureConfig& arch,
                                       uint64_t seed);

 private:
  CandidateNet() = default;

  NetConfig config_;
  SpaceDefinition space_;
  ArchitectureConfig arch_;
  ParamView stem_, stem_gamma_, stem_beta_;
  std::vector<BlockViews> blocks_;
  ParamView fc_w_, fc_b_;
  BatchNormStats stem_stats_;
  std::vector<TrioBlockStats> block_stats_;
};

// Views into the store selected by `arch`; validates `arch` first. The store
// is not modified.
CandidateNet instantiate_candidate(const SupernetWeights& store,
                                   const ArchitectureConfig& arch, Sharing sharing);

// Fresh network with its own tensors, initialised like the store.
CandidateNet build_standalone(const NetConfig& config, const ArchitectureConfig& arch,
                              uint64_t seed);

// Binary checkpoints: magic "TRIO", u32 version, u32 entry count, then per
// entry name length u32, name, dtype u8, rank u32, dims u32[rank], payload
// length u64; payloads follow in manifest order. Little-endian.
enum class DType : uint8_t { kF32 = 0, kF64 = 1, kI64 = 2, kU8 = 3 };

struct CheckpointEntry {
  std::string name;
  DType dtype = DType::kF32;
  Shape shape;
  std::vector<double> values;  // kF32 / kF64
  std::vector<int64_t> ints;   // kI64
  std::string bytes;           // kU8
};

inline constexpr uint32_t kCheckpointVersion = 1;

void write_checkpoint(const std::string& path, const std::vector<CheckpointEntry>& entries);
std::vector<CheckpointEntry> read_checkpoint(const std::string& path);

void save_supernet(const std::string& path, const SupernetWeights& store);
SupernetWeights load_supernet(const std::string& path);
void save_standalone(const std::string& path, CandidateNet& net);
CandidateNet load_standalone(const std::string& path);
// "supernet" or "standalone".
std::string checkpoint_kind(const std::string& path);

}  // namespace trionas

#endif  // TRIONAS_SUPERNET_HPP_
