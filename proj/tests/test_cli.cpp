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

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "json.hpp"
#include "trionas/cost.hpp"
#include "trionas/space.hpp"

using namespace trionas;
namespace fs = std::filesystem;

namespace {

struct RunResult {
  int code = -1;
  std::string out;
};

fs::path scratch() {
  static const fs::path dir = [] {
    const fs::path d = fs::temp_directory_path() / "trionas_test_cli";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

RunResult run(const std::string& args) {
  static int counter = 0;
  const fs::path log = scratch() / ("stdout_" + std::to_string(counter++) + ".txt");
  const std::string cmd = std::string(TRIONAS_CLI) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  RunResult r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(log);
  return r;
}

int manifests_under(const fs::path& dir) {
  int n = 0;
  for (const auto& e : fs::recursive_directory_iterator(dir)) n += e.path().filename() == "manifest.json";
  return n;
}

// Tiny problem so every stage runs in seconds.
const std::string kSmall =
    " --count 160 --split 96,32,32 --batch-size 32 --eval-batches 1";

}  // namespace

TEST_CASE("exit codes") {
  CHECK(run("space card").code == 0);
  CHECK(run("--no-such-flag").code == 1);
  CHECK(run("frobnicate").code == 1);
  CHECK(run("").code == 1);
  CHECK(run("space sample --n 0").code == 1);
  CHECK(run("space card --base-width 12").code == 1);
  CHECK(run("cost --arch " + (scratch() / "missing.trio").string()).code == 1);
}

TEST_CASE("space card prints the per-operator counts and the exact total") {
  const RunResult r = run("space card");
  REQUIRE(r.code == 0);
  CHECK(r.out.find("conv 6\n") != std::string::npos);
  CHECK(r.out.find("local 48\n") != std::string::npos);
  CHECK(r.out.find("axial 16\n") != std::string::npos);
  CHECK(r.out.find("per_block 70\n") != std::string::npos);
  CHECK(r.out.find("total " + total_cardinality(SpaceDefinition::standard(16)).str()) !=
        std::string::npos);
}

TEST_CASE("space sample is seeded and writes one manifest") {
  const fs::path a = scratch() / "sample_a", b = scratch() / "sample_b";
  REQUIRE(run("space sample --n 5 --seed 7 --out " + a.string()).code == 0);
  REQUIRE(run("space sample --n 5 --seed 7 --out " + b.string()).code == 0);
  CHECK(slurp(a / "samples.csv") == slurp(b / "samples.csv"));
  for (int i = 0; i < 5; ++i) {
    const std::string name = "sample_00" + std::to_string(i) + ".trio";
    CHECK(slurp(a / name) == slurp(b / name));
  }
  CHECK(manifests_under(a) == 1);
  const auto m = nlohmann::json::parse(slurp(a / "manifest.json"));
  CHECK(m["command"] == "space sample");
  CHECK(m["seed"] == 7);
  CHECK(m["config"]["n"] == "5");
  CHECK(m.contains("version"));
  CHECK(m.contains("finished_at"));
}

TEST_CASE("space sample honours the FLOPs window") {
  const fs::path dir = scratch() / "sample_window";
  REQUIRE(run("space sample --n 8 --seed 2 --min-flops 600000 --budget-flops 800000 --out " +
              dir.string())
              .code == 0);
  std::istringstream csv(slurp(dir / "samples.csv"));
  std::string line;
  std::getline(csv, line);
  CHECK(line == "file,flops,params");
  int rows = 0;
  while (std::getline(csv, line)) {
    const auto c1 = line.find(','), c2 = line.rfind(',');
    const int64_t f = std::stoll(line.substr(c1 + 1, c2 - c1 - 1));
    CHECK(f >= 600000);
    CHECK(f <= 800000);
    ++rows;
  }
  CHECK(rows == 8);
}

TEST_CASE("cost total agrees with the library") {
  const fs::path dir = scratch() / "cost_src";
  REQUIRE(run("space sample --n 1 --seed 3 --out " + dir.string()).code == 0);
  const fs::path arch = dir / "sample_000.trio";
  const fs::path out = scratch() / "cost_out";
  REQUIRE(run("cost --arch " + arch.string() + " --out " + out.string()).code == 0);
  const SpaceDefinition space = [] {
    SpaceDefinition s = SpaceDefinition::standard(16);
    s.stem_stride = 4;
    return s;
  }();
  const ArchitectureConfig c = deserialize(space, slurp(arch));
  const std::string csv = slurp(out / "cost.csv");
  const std::string expected_total = "total,,," + std::to_string(flops(space, c, 32)) + "," +
                                     std::to_string(params(space, c, 32));
  CHECK(csv.find(expected_total) != std::string::npos);
  CHECK(manifests_under(out) == 1);
}

TEST_CASE("pipeline: data, supernet, search, retrain, eval") {
  const fs::path root = scratch() / "pipeline";
  const fs::path data = root / "data", sn = root / "supernet", se = root / "search",
                 rt = root / "retrain", ev = root / "eval";
  REQUIRE(run("data gen --count 160 --seed 4 --out " + data.string()).code == 0);
  const std::string ds = " --data " + (data / "data.tds").string();
  REQUIRE(run("train-supernet --epochs 1 --warmup-epochs 0 --base-width 8" + ds + kSmall +
              " --out " + sn.string())
              .code == 0);
  CHECK(fs::exists(sn / "supernet.ckpt"));
  CHECK(slurp(sn / "metrics.csv").rfind("epoch,", 0) == 0);
  CHECK(slurp(sn / "final_eval.csv").rfind("candidate,flops,accuracy\n", 0) == 0);

  REQUIRE(run("search --population 4 --generations 1 --supernet " + (sn / "supernet.ckpt").string() +
              ds + kSmall + " --out " + se.string())
              .code == 0);
  CHECK(slurp(se / "history.csv").rfind("generation,best_fitness,mean_fitness,best_flops\n", 0) == 0);
  CHECK(fs::exists(se / "best.trio"));
  const auto m = nlohmann::json::parse(slurp(se / "manifest.json"));
  CHECK(m.contains("budget_flops"));

  REQUIRE(run("retrain --epochs 1 --warmup-epochs 0 --base-width 8 --arch " +
              (se / "best.trio").string() + ds + kSmall + " --out " + rt.string())
              .code == 0);
  CHECK(slurp(rt / "result.csv").rfind("test_accuracy,flops,params\n", 0) == 0);

  REQUIRE(run("eval --checkpoint " + (rt / "model.ckpt").string() + ds + kSmall + " --out " +
              ev.string())
              .code == 0);
  for (const fs::path& d : {data, sn, se, rt, ev}) CHECK(manifests_under(d) == 1);

  // a dataset whose image size disagrees with --res is rejected
  CHECK(run("train-supernet --epochs 1 --warmup-epochs 0 --res 16" + ds + kSmall + " --out " +
            (root / "bad").string())
            .code == 1);
}
