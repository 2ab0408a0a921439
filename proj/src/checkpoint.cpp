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
#include <bit>
#include <cstring>
#include <fstream>
#include <functional>
#include <map>
#include <stdexcept>

#include "trionas/supernet.hpp"

namespace trionas {

namespace {

constexpr char kMagic[4] = {'T', 'R', 'I', 'O'};

template <typename T>
void put(std::ostream& os, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  os.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T get(std::istream& is, const std::string& path) {
  unsigned char bytes[sizeof(T)];
  if (!is.read(reinterpret_cast<char*>(bytes), sizeof(T))) {
    throw std::runtime_error(path + ": truncated checkpoint");
  }
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

uint64_t payload_bytes(const CheckpointEntry& e) {
  switch (e.dtype) {
    case DType::kF32: return 4 * e.values.size();
    case DType::kF64: return 8 * e.values.size();
    case DType::kI64: return 8 * e.ints.size();
    case DType::kU8: return e.bytes.size();
  }
  return 0;
}

uint64_t element_size(DType t) {
  switch (t) {
    case DType::kF32: return 4;
    case DType::kF64:
    case DType::kI64: return 8;
    case DType::kU8: return 1;
  }
  return 1;
}

constexpr DType kRealType = sizeof(Real) == 4 ? DType::kF32 : DType::kF64;

CheckpointEntry tensor_entry(std::string name, const Tensor& t) {
  CheckpointEntry e;
  e.name = std::move(name);
  e.dtype = kRealType;
  e.shape = t.shape();
  e.values.assign(t.data().begin(), t.data().end());
  return e;
}

CheckpointEntry view_entry(std::string name, const ParamView& v) {
  CheckpointEntry e;
  e.name = std::move(name);
  e.dtype = kRealType;
  e.shape = v.shape();
  e.values.resize(static_cast<std::size_t>(v.numel()));
  for (int64_t i = 0; i < v.numel(); ++i) e.values[static_cast<std::size_t>(i)] = v.read(i);
  return e;
}

CheckpointEntry text_entry(std::string name, std::string text) {
  CheckpointEntry e;
  e.name = std::move(name);
  e.dtype = DType::kU8;
  e.shape = {static_cast<int64_t>(text.size())};
  e.bytes = std::move(text);
  return e;
}

CheckpointEntry int_entry(std::string name, std::vector<int64_t> values) {
  CheckpointEntry e;
  e.name = std::move(name);
  e.dtype = DType::kI64;
  e.shape = {static_cast<int64_t>(values.size())};
  e.ints = std::move(values);
  return e;
}

using EntryMap = std::map<std::string, const CheckpointEntry*>;

EntryMap index_entries(const std::vector<CheckpointEntry>& entries) {
  EntryMap m;
  for (const auto& e : entries) m[e.name] = &e;
  return m;
}

const CheckpointEntry& need(const EntryMap& m, const std::string& name,
                            const std::string& path) {
  auto it = m.find(name);
  if (it == m.end()) throw std::runtime_error(path + ": missing entry '" + name + "'");
  return *it->second;
}

void copy_into(const CheckpointEntry& e, const Shape& shape, const std::string& path,
               const std::function<void(int64_t, Real)>& write) {
  if (e.dtype != DType::kF32 && e.dtype != DType::kF64) {
    throw std::runtime_error(path + ": entry '" + e.name + "' is not floating point");
  }
  if (e.shape != shape) {
    throw std::runtime_error(path + ": entry '" + e.name + "' has shape " +
                             shape_str(e.shape) + ", expected " + shape_str(shape));
  }
  for (std::size_t i = 0; i < e.values.size(); ++i)
    write(static_cast<int64_t>(i), static_cast<Real>(e.values[i]));
}

NetConfig read_config(const EntryMap& m, const std::string& path, const std::string& kind) {
  const CheckpointEntry& k = need(m, "meta.kind", path);
  if (k.bytes != kind) {
    throw std::runtime_error(path + ": checkpoint holds a " + k.bytes + ", expected a " + kind);
  }
  return NetConfig::decode(need(m, "meta.net_config", path).ints);
}

}  // namespace

void write_checkpoint(const std::string& path, const std::vector<CheckpointEntry>& entries) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  os.write(kMagic, 4);
  put<uint32_t>(os, kCheckpointVersion);
  put<uint32_t>(os, static_cast<uint32_t>(entries.size()));
  for (const auto& e : entries) {
    put<uint32_t>(os, static_cast<uint32_t>(e.name.size()));
    os.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    put<uint8_t>(os, static_cast<uint8_t>(e.dtype));
    put<uint32_t>(os, static_cast<uint32_t>(e.shape.size()));
    for (int64_t d : e.shape) put<uint32_t>(os, static_cast<uint32_t>(d));
    put<uint64_t>(os, payload_bytes(e));
  }
  for (const auto& e : entries) {
    switch (e.dtype) {
      case DType::kF32:
        for (double v : e.values) put<float>(os, static_cast<float>(v));
        break;
      case DType::kF64:
        for (double v : e.values) put<double>(os, v);
        break;
      case DType::kI64:
        for (int64_t v : e.ints) put<int64_t>(os, v);
        break;
      case DType::kU8:
        os.write(e.bytes.data(), static_cast<std::streamsize>(e.bytes.size()));
        break;
    }
  }
  if (!os) throw std::runtime_error("failed writing " + path);
}

std::vector<CheckpointEntry> read_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path);
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw std::runtime_error(path + ": not a checkpoint (bad magic)");
  }
  const auto version = get<uint32_t>(is, path);
  if (version != kCheckpointVersion) {
    throw std::runtime_error(path + ": unsupported checkpoint version " + std::to_string(version));
  }
  const auto count = get<uint32_t>(is, path);
  std::vector<CheckpointEntry> entries(count);
  std::vector<uint64_t> lengths(count);
  for (uint32_t i = 0; i < count; ++i) {
    CheckpointEntry& e = entries[i];
    const auto name_len = get<uint32_t>(is, path);
    e.name.resize(name_len);
    if (!is.read(e.name.data(), name_len)) throw std::runtime_error(path + ": truncated checkpoint");
    const auto tag = get<uint8_t>(is, path);
    if (tag > static_cast<uint8_t>(DType::kU8)) {
      throw std::runtime_error(path + ": unknown dtype tag " + std::to_string(tag));
    }
    e.dtype = static_cast<DType>(tag);
    const auto rank = get<uint32_t>(is, path);
    e.shape.resize(rank);
    for (auto& d : e.shape) d = get<uint32_t>(is, path);
    lengths[i] = get<uint64_t>(is, path);
    if (lengths[i] != static_cast<uint64_t>(shape_numel(e.shape)) * element_size(e.dtype)) {
      throw std::runtime_error(path + ": entry '" + e.name + "' payload length mismatch");
    }
  }
  for (uint32_t i = 0; i < count; ++i) {
    CheckpointEntry& e = entries[i];
    const auto n = static_cast<std::size_t>(lengths[i] / element_size(e.dtype));
    switch (e.dtype) {
      case DType::kF32:
        e.values.resize(n);
        for (auto& v : e.values) v = get<float>(is, path);
        break;
      case DType::kF64:
        e.values.resize(n);
        for (auto& v : e.values) v = get<double>(is, path);
        break;
      case DType::kI64:
        e.ints.resize(n);
        for (auto& v : e.ints) v = get<int64_t>(is, path);
        break;
      case DType::kU8:
        e.bytes.resize(n);
        if (!is.read(e.bytes.data(), static_cast<std::streamsize>(n))) {
          throw std::runtime_error(path + ": truncated checkpoint");
        }
        break;
    }
  }
  return entries;
}

std::string checkpoint_kind(const std::string& path) {
  const auto entries = read_checkpoint(path);
  return need(index_entries(entries), "meta.kind", path).bytes;
}

void save_supernet(const std::string& path, const SupernetWeights& store) {
  std::vector<CheckpointEntry> entries;
  entries.push_back(text_entry("meta.kind", "supernet"));
  entries.push_back(int_entry("meta.net_config", store.config().encode()));
  for (const auto& t : store.tensors()) entries.push_back(tensor_entry(t.name, t.tensor));
  write_checkpoint(path, entries);
}

SupernetWeights load_supernet(const std::string& path) {
  const auto entries = read_checkpoint(path);
  const EntryMap m = index_entries(entries);
  SupernetWeights store = SupernetWeights::create(read_config(m, path, "supernet"), 0);
  for (auto& t : store.tensors_) {
    Tensor dst = t.tensor;
    copy_into(need(m, t.name, path), dst.shape(), path,
              [&dst](int64_t i, Real v) { dst.data()[static_cast<std::size_t>(i)] = v; });
  }
  if (entries.size() != store.tensors_.size() + 2) {
    throw std::runtime_error(path + ": checkpoint has entries this network does not use");
  }
  return store;
}

void save_standalone(const std::string& path, CandidateNet& net) {
  std::vector<CheckpointEntry> entries;
  entries.push_back(text_entry("meta.kind", "standalone"));
  entries.push_back(int_entry("meta.net_config", net.config().encode()));
  entries.push_back(text_entry("meta.arch", serialize(net.arch())));
  for (const NamedView& v : net.named_parameters()) entries.push_back(view_entry(v.name, *v.view));
  for (const auto& [name, stats] : net.named_stats()) {
    entries.push_back(tensor_entry(name + ".running_mean", stats->mean));
    entries.push_back(tensor_entry(name + ".running_var", stats->var));
  }
  write_checkpoint(path, entries);
}

CandidateNet load_standalone(const std::string& path) {
  const auto entries = read_checkpoint(path);
  const EntryMap m = index_entries(entries);
  const NetConfig config = read_config(m, path, "standalone");
  const ArchitectureConfig arch = deserialize(config.space(), need(m, "meta.arch", path).bytes);
  CandidateNet net = build_standalone(config, arch, 0);
  std::size_t used = 3;
  for (NamedView& v : net.named_parameters()) {
    ParamView* view = v.view;
    copy_into(need(m, v.name, path), view->shape(), path,
              [view](int64_t i, Real x) { view->write(i, x); });
    ++used;
  }
  for (auto& [name, stats] : net.named_stats()) {
    for (Tensor* t : {&stats->mean, &stats->var}) {
      Tensor dst = *t;
      const std::string key = name + (t == &stats->mean ? ".running_mean" : ".running_var");
      copy_into(need(m, key, path), dst.shape(), path,
                [&dst](int64_t i, Real x) { dst.data()[static_cast<std::size_t>(i)] = x; });
      ++used;
    }
  }
  if (used != entries.size()) {
    throw std::runtime_error(path + ": checkpoint has entries this network does not use");
  }
  return net;
}

}  // namespace trionas
