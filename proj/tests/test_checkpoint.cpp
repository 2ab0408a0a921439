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

#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include "doctest.h"
#include "oracles.hpp"
#include "trionas/ops.hpp"
#include "trionas/supernet.hpp"

using namespace trionas;
namespace fs = std::filesystem;

namespace {

fs::path temp_path(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "trionas_test_checkpoint";
  fs::create_directories(dir);
  return dir / name;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

NetConfig small_config() {
  NetConfig nc;
  nc.base_width = 8;
  nc.stem_stride = 4;
  return nc;
}

}  // namespace

TEST_CASE("header layout is little-endian TRIO v1") {
  const fs::path p = temp_path("raw.ckpt");
  CheckpointEntry e;
  e.name = "w";
  e.dtype = DType::kF32;
  e.shape = {2};
  e.values = {1.5, -2.0};
  write_checkpoint(p.string(), {e});
  const std::string bytes = slurp(p);
  REQUIRE(bytes.size() == 4 + 4 + 4 + (4 + 1 + 1 + 4 + 4 + 8) + 8);
  CHECK(bytes.substr(0, 4) == "TRIO");
  CHECK(static_cast<uint8_t>(bytes[4]) == 1);
  CHECK(static_cast<uint8_t>(bytes[8]) == 1);
  float first = 0;
  std::memcpy(&first, bytes.data() + bytes.size() - 8, 4);
  CHECK(first == 1.5f);
  const auto back = read_checkpoint(p.string());
  REQUIRE(back.size() == 1);
  CHECK(back[0].name == "w");
  CHECK(back[0].values == std::vector<double>{1.5, -2.0});
}

TEST_CASE("corrupt files are rejected") {
  const fs::path p = temp_path("bad.ckpt");
  {
    std::ofstream os(p, std::ios::binary);
    os << "NOPE0000";
  }
  CHECK_THROWS(read_checkpoint(p.string()));
  CheckpointEntry e;
  e.name = "w";
  e.shape = {3};
  e.values = {1, 2, 3};
  write_checkpoint(p.string(), {e});
  const std::string full = slurp(p);
  {
    std::ofstream os(p, std::ios::binary | std::ios::trunc);
    os << full.substr(0, full.size() - 2);
  }
  CHECK_THROWS(read_checkpoint(p.string()));
}

TEST_CASE("supernet round trip preserves every tensor and the config") {
  const SupernetWeights store = SupernetWeights::create(small_config(), 3);
  const fs::path p = temp_path("supernet.ckpt");
  save_supernet(p.string(), store);
  CHECK(checkpoint_kind(p.string()) == "supernet");
  const SupernetWeights back = load_supernet(p.string());
  CHECK(back.config().encode() == store.config().encode());
  REQUIRE(back.tensors().size() == store.tensors().size());
  for (std::size_t i = 0; i < store.tensors().size(); ++i) {
    CHECK(back.tensors()[i].name == store.tensors()[i].name);
    CHECK(oracle::exactly_equal(back.tensors()[i].tensor, store.tensors()[i].tensor));
  }
}

TEST_CASE("stand-alone round trip reproduces the forward pass") {
  Rng rng(4);
  const NetConfig nc = small_config();
  const ArchitectureConfig arch = random_config(nc.space(), rng, SamplingMode::kHierarchical);
  CandidateNet net = build_standalone(nc, arch, 5);
  const Tensor x = oracle::random_tensor({2, 3, 32, 32}, rng);
  {
    NoGradGuard guard;
    net.forward(x, BnMode::kTrain);  // move running statistics away from their defaults
  }
  const fs::path p = temp_path("model.ckpt");
  save_standalone(p.string(), net);
  CHECK(checkpoint_kind(p.string()) == "standalone");
  CandidateNet back = load_standalone(p.string());
  CHECK(back.arch() == arch);
  NoGradGuard guard;
  CHECK(oracle::exactly_equal(back.forward(x, BnMode::kEval), net.forward(x, BnMode::kEval)));
  CHECK_THROWS(load_supernet(p.string()));
}
