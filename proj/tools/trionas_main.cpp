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

// trionas: command-line front end for search-space inspection, data
// generation, supernet training, evolutionary search and retraining.

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "trionas/cost.hpp"
#include "trionas/data.hpp"
#include "trionas/evo.hpp"
#include "trionas/sampling.hpp"
#include "trionas/space.hpp"
#include "trionas/supernet.hpp"
#include "trionas/trainer.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace trionas;

namespace {

struct Options {
  uint64_t seed = 0;
  std::string out;
  std::string data = "synthetic";
  uint64_t data_seed = 0;
  std::string split = "2000,200,400";
  std::string arch;
  std::string checkpoint;
  std::string supernet;
  int64_t budget_flops = 0;
  int64_t min_flops = 0;
  std::string policy = "hierarchical";
  std::string sandwich = "on";
  std::string sharing = "mhs";
  int epochs = 30;
  int res = 32;
  int base_width = 16;
  int stem_stride = 4;
  int classes = 2;
  int count = 2600;
  int n = 1;
  int batch_size = 64;
  double lr = 0.1;
  double weight_decay = 8e-5;
  int warmup_epochs = 2;
  std::string wall_time = "off";
  int population = 64;
  int generations = 20;
  double parent_fraction = 0.25;
  double mutation_prob = 0.1;
  double crossover_fraction = 0.5;
  int eval_batches = 10;
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << text;
  if (!os) throw std::runtime_error("failed writing " + path.string());
}

std::string read_text(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ValidationError("cannot read " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

bool parse_switch(const std::string& flag, const std::string& value) {
  if (value == "on") return true;
  if (value == "off") return false;
  throw ValidationError(flag + " must be on or off, got '" + value + "'");
}

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

NetConfig net_config(const Options& o, int in_channels) {
  NetConfig c;
  c.base_width = o.base_width;
  c.stem_stride = o.stem_stride;
  c.in_channels = in_channels;
  c.num_classes = o.classes;
  c.resolution = o.res;
  return c;
}

Dataset load_data(const Options& o) {
  if (o.data == "synthetic") {
    SyntheticSpec spec;
    spec.count = o.count;
    spec.image_size = o.res;
    spec.classes = o.classes;
    return generate_synthetic(spec, o.data_seed);
  }
  return read_dataset(o.data);
}

SplitSizes parse_split(const std::string& text) {
  std::vector<int64_t> v;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      v.push_back(std::stoll(item));
    } catch (const std::exception&) {
      throw ValidationError("--split expects train,evo,test counts, got '" + text + "'");
    }
  }
  if (v.size() != 3) throw ValidationError("--split expects train,evo,test counts, got '" + text + "'");
  return {v[0], v[1], v[2]};
}

Splits load_splits(Options& o) {
  const Dataset d = load_data(o);
  if (d.height != o.res || d.width != o.res) {
    throw ValidationError("dataset images are " + std::to_string(d.height) + "x" +
                          std::to_string(d.width) + " but --res is " + std::to_string(o.res));
  }
  o.classes = d.classes;
  return split_dataset(d, parse_split(o.split));
}

TrainConfig train_config(const Options& o) {
  TrainConfig c;
  c.epochs = o.epochs;
  c.batch_size = o.batch_size;
  c.lr = o.lr;
  c.weight_decay = o.weight_decay;
  c.warmup_epochs = o.warmup_epochs;
  c.seed = o.seed;
  c.recalibration_batches = o.eval_batches;
  c.wall_time = parse_switch("--wall-time", o.wall_time);
  c.validate();
  return c;
}

ArchitectureConfig load_arch(const SpaceDefinition& space, const std::string& path) {
  if (path.empty()) throw ValidationError("--arch is required");
  return deserialize(space, read_text(path));
}

// Creates the output directory and writes its manifest before any work.
class Run {
 public:
  Run(const std::string& command, const std::vector<std::string>& argv, const CLI::App& sub,
      const Options& o) {
    if (o.out.empty()) return;
    dir_ = o.out;
    fs::create_directories(dir_);
    manifest_["command"] = command;
    manifest_["argv"] = argv;
    json cfg = json::object();
    for (const CLI::Option* opt : sub.get_options()) {
      if (opt->get_lnames().empty()) continue;
      const std::string name = opt->get_lnames().front();
      if (name == "help") continue;
      if (opt->count() > 0) {
        cfg[name] = opt->as<std::string>();
      } else {
        cfg[name] = opt->get_default_str();
      }
    }
    manifest_["config"] = cfg;
    manifest_["seed"] = o.seed;
    manifest_["version"] = TRIONAS_VERSION;
    manifest_["started_at"] = utc_now();
    manifest_["inputs"] = json::object();
    manifest_["outputs"] = json::array();
    if (o.data != "synthetic") manifest_["inputs"]["data"] = o.data;
    if (!o.arch.empty()) manifest_["inputs"]["arch"] = o.arch;
    if (!o.checkpoint.empty()) manifest_["inputs"]["checkpoint"] = o.checkpoint;
    if (!o.supernet.empty()) manifest_["inputs"]["supernet"] = o.supernet;
    flush();
  }

  bool active() const { return !dir_.empty(); }
  fs::path path(const std::string& name) {
    manifest_["outputs"].push_back(name);
    return dir_ / name;
  }
  void note(const std::string& key, json value) {
    if (!active()) return;
    manifest_[key] = std::move(value);
    flush();
  }
  void finish() {
    if (!active()) return;
    manifest_["finished_at"] = utc_now();
    flush();
  }

 private:
  void flush() { write_text(dir_ / "manifest.json", manifest_.dump(2) + "\n"); }

  fs::path dir_;
  json manifest_;
};

void require_out(const Options& o) {
  if (o.out.empty()) throw ValidationError("--out is required");
}

EpochCallback progress(const char* what) {
  return [what](const EpochMetrics& m) {
    std::fprintf(stderr, "[%s] epoch %d lr %.5f loss %.4f min_acc %.4f max_acc %.4f\n", what,
                 m.epoch, m.lr, m.train_loss, m.min_acc, m.max_acc);
  };
}

// ---------------------------------------------------------------------------

int cmd_space_card(const Options& o, Run& run) {
  const SpaceDefinition space = SpaceDefinition::standard(o.base_width);
  std::ostringstream os;
  for (Operator op : kAllOperators) {
    os << operator_name(op) << ' ' << block_choice_count(space, op) << '\n';
  }
  os << "per_block " << block_choice_total(space) << '\n';
  const BigInt total = total_cardinality(space);
  os << "total " << total << '\n';
  char sci[64];
  std::snprintf(sci, sizeof sci, "%.4e", total.convert_to<double>());
  os << "total_approx " << sci << '\n';
  std::cout << os.str();
  if (run.active()) write_text(run.path("card.txt"), os.str());
  return 0;
}

int cmd_space_sample(const Options& o, Run& run) {
  require_out(o);
  const NetConfig nc = net_config(o, 3);
  const SpaceDefinition space = nc.space();
  if (o.n < 1) throw ValidationError("--n must be positive");
  const SamplingMode mode = parse_sampling_mode(o.policy);
  Rng rng(o.seed);
  const int64_t upper = o.budget_flops > 0 ? o.budget_flops : INT64_MAX;
  std::string index = "file,flops,params\n";
  for (int i = 0; i < o.n; ++i) {
    ArchitectureConfig c;
    int64_t f = 0;
    int tries = 0;
    for (;; ++tries) {
      if (tries == 100000) {
        throw SearchError("no config with FLOPs in [" + std::to_string(o.min_flops) + ", " +
                          std::to_string(upper) + "] after 100000 draws");
      }
      c = random_config(space, rng, mode);
      f = flops(space, c, o.res);
      if (f >= o.min_flops && f <= upper) break;
    }
    char name[32];
    std::snprintf(name, sizeof name, "sample_%03d.trio", i);
    write_text(run.path(name), serialize(c));
    index += std::string(name) + "," + std::to_string(f) + "," +
             std::to_string(params(space, c, o.res)) + "\n";
  }
  write_text(run.path("samples.csv"), index);
  return 0;
}

int cmd_cost(const Options& o, Run& run) {
  const SpaceDefinition space = net_config(o, 3).space();
  const CostReport report = cost_report(space, load_arch(space, o.arch), o.res);
  const std::string csv = cost_csv(report);
  std::cout << csv;
  if (run.active()) write_text(run.path("cost.csv"), csv);
  return 0;
}

int cmd_data_gen(const Options& o, Run& run) {
  require_out(o);
  SyntheticSpec spec;
  spec.count = o.count;
  spec.image_size = o.res;
  spec.classes = o.classes;
  const Dataset d = generate_synthetic(spec, o.seed);
  write_dataset(run.path("data.tds").string(), d);
  return 0;
}

std::string candidate_eval_csv(SupernetWeights& store, Sharing sharing, const Splits& s,
                               const TrainConfig& cfg) {
  const SpaceDefinition& space = store.space();
  const int res = store.config().resolution;
  const std::vector<std::pair<std::string, ArchitectureConfig>> probes = {
      {"min", global_min_config(space, res)},
      {"max", global_max_config(space, res)},
      {"conv_max", uniform_max_config(space, Operator::kConv, res)},
      {"local_max", uniform_max_config(space, Operator::kLocal, res)},
      {"axial_max", uniform_max_config(space, Operator::kAxial, res)},
  };
  std::string out = "candidate,flops,accuracy\n";
  char buf[128];
  for (const auto& [name, arch] : probes) {
    CandidateNet net = instantiate_candidate(store, arch, sharing);
    const double acc = recalibrated_accuracy(net, s.train, s.test, cfg.recalibration_batches,
                                             cfg.batch_size);
    std::snprintf(buf, sizeof buf, "%s,%lld,%.6f\n", name.c_str(),
                  static_cast<long long>(flops(space, arch, res)), acc);
    out += buf;
  }
  return out;
}

int cmd_train_supernet(Options& o, Run& run) {
  require_out(o);
  Splits s = load_splits(o);
  const TrainConfig cfg = train_config(o);
  SamplingPolicy policy;
  policy.mode = parse_sampling_mode(o.policy);
  policy.sandwich = parse_switch("--sandwich", o.sandwich);
  policy.seed = o.seed + 1;
  const Sharing sharing = parse_sharing(o.sharing);
  SupernetWeights store = SupernetWeights::create(net_config(o, s.train.channels), o.seed);
  const TrainResult r = train_supernet(store, policy, sharing, s.train, s.test, cfg,
                                       progress("train-supernet"));
  write_text(run.path("metrics.csv"), metrics_csv(r.log));
  save_supernet(run.path("supernet.ckpt").string(), store);
  write_text(run.path("final_eval.csv"), candidate_eval_csv(store, sharing, s, cfg));
  run.note("steps", {{"forward", r.stats.forward_passes},
                     {"backward", r.stats.backward_passes},
                     {"optimizer", r.stats.optimizer_steps}});
  return 0;
}

int cmd_search(Options& o, Run& run) {
  require_out(o);
  if (o.supernet.empty()) throw ValidationError("--supernet is required");
  const SupernetWeights store = load_supernet(o.supernet);
  const NetConfig& nc = store.config();
  o.res = nc.resolution;
  const Splits s = load_splits(o);
  const SpaceDefinition& space = store.space();
  EvoConfig cfg;
  cfg.population = o.population;
  cfg.generations = o.generations;
  cfg.parent_fraction = o.parent_fraction;
  cfg.mutation_prob = o.mutation_prob;
  cfg.crossover_fraction = o.crossover_fraction;
  cfg.eval_batches = o.eval_batches;
  cfg.batch_size = o.batch_size;
  cfg.seed = o.seed;
  cfg.threads = env_threads(1);
  const int64_t lo = flops(space, global_min_config(space, nc.resolution), nc.resolution);
  const int64_t hi = flops(space, global_max_config(space, nc.resolution), nc.resolution);
  cfg.budget_flops = o.budget_flops > 0 ? o.budget_flops : (lo + hi) / 2;
  run.note("budget_flops", cfg.budget_flops);
  const Sharing sharing = parse_sharing(o.sharing);
  const FitnessFn fitness =
      supernet_fitness(store, sharing, s.train, s.evo, cfg.eval_batches, cfg.batch_size);
  const SearchResult r = evolutionary_search(space, nc.resolution, cfg, fitness);
  write_text(run.path("history.csv"), history_csv(r.history));
  write_text(run.path("best.trio"), serialize(r.best.config));
  char buf[128];
  std::snprintf(buf, sizeof buf, "fitness,flops,params\n%.6f,%lld,%lld\n", r.best.fitness,
                static_cast<long long>(r.best.flops),
                static_cast<long long>(params(space, r.best.config, nc.resolution)));
  write_text(run.path("best.csv"), buf);
  std::cerr << "[search] best fitness " << r.best.fitness << " flops " << r.best.flops << "\n";
  return 0;
}

int cmd_retrain(Options& o, Run& run) {
  require_out(o);
  Splits s = load_splits(o);
  const NetConfig nc = net_config(o, s.train.channels);
  const ArchitectureConfig arch = load_arch(nc.space(), o.arch);
  const TrainConfig cfg = train_config(o);
  RetrainResult r = retrain_scratch(nc, arch, s.train.concat(s.evo), s.test, cfg, progress("retrain"));
  write_text(run.path("metrics.csv"), metrics_csv(r.train.log));
  save_standalone(run.path("model.ckpt").string(), r.net);
  char buf[128];
  std::snprintf(buf, sizeof buf, "test_accuracy,flops,params\n%.6f,%lld,%lld\n", r.accuracy,
                static_cast<long long>(flops(nc.space(), arch, nc.resolution)),
                static_cast<long long>(params(nc.space(), arch, nc.resolution)));
  write_text(run.path("result.csv"), buf);
  return 0;
}

int cmd_eval(Options& o, Run& run) {
  if (o.checkpoint.empty()) throw ValidationError("--checkpoint is required");
  const std::string kind = checkpoint_kind(o.checkpoint);
  double acc = 0;
  if (kind == "standalone") {
    CandidateNet net = load_standalone(o.checkpoint);
    o.res = net.config().resolution;
    const Splits s = load_splits(o);
    acc = evaluate(net, s.test, o.batch_size);
  } else {
    const SupernetWeights store = load_supernet(o.checkpoint);
    o.res = store.config().resolution;
    const Splits s = load_splits(o);
    CandidateNet net = instantiate_candidate(store, load_arch(store.space(), o.arch),
                                             parse_sharing(o.sharing));
    acc = recalibrated_accuracy(net, s.train, s.test, o.eval_batches, o.batch_size);
  }
  char buf[64];
  std::snprintf(buf, sizeof buf, "test_accuracy\n%.6f\n", acc);
  std::cout << buf;
  if (run.active()) write_text(run.path("eval.csv"), buf);
  return 0;
}

// ---------------------------------------------------------------------------

void add_seed(CLI::App* c, Options& o) { c->add_option("--seed", o.seed, "random seed")->capture_default_str(); }
void add_out(CLI::App* c, Options& o) { c->add_option("--out", o.out, "output directory"); }
void add_net(CLI::App* c, Options& o) {
  c->add_option("--res", o.res, "input resolution")->capture_default_str();
  c->add_option("--base-width", o.base_width, "stage-0 width (multiple of 8)")->capture_default_str();
  c->add_option("--stem-stride", o.stem_stride, "stem convolution stride")->capture_default_str();
  c->add_option("--classes", o.classes, "class count")->capture_default_str();
}
void add_data(CLI::App* c, Options& o) {
  c->add_option("--data", o.data, "dataset file or 'synthetic'")->capture_default_str();
  c->add_option("--data-seed", o.data_seed, "seed of the synthetic dataset")->capture_default_str();
  c->add_option("--count", o.count, "synthetic example count")->capture_default_str();
  c->add_option("--split", o.split, "train,evo,test example counts")->capture_default_str();
  c->add_option("--batch-size", o.batch_size, "batch size")->capture_default_str();
  c->add_option("--eval-batches", o.eval_batches, "BN recalibration batches")->capture_default_str();
}
void add_train(CLI::App* c, Options& o) {
  c->add_option("--epochs", o.epochs, "training epochs")->capture_default_str();
  c->add_option("--lr", o.lr, "base learning rate")->capture_default_str();
  c->add_option("--weight-decay", o.weight_decay, "weight decay")->capture_default_str();
  c->add_option("--warmup-epochs", o.warmup_epochs, "linear warmup epochs")->capture_default_str();
  c->add_option("--wall-time", o.wall_time, "record per-epoch seconds (on|off)")->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  Options o;
  CLI::App app{"trionas: one-shot architecture search over convolution, local and axial attention"};
  app.require_subcommand(1);

  CLI::App* space = app.add_subcommand("space", "search-space utilities");
  space->require_subcommand(1);
  CLI::App* card = space->add_subcommand("card", "print per-operator and total cardinality");
  card->add_option("--base-width", o.base_width, "stage-0 width (multiple of 8)")->capture_default_str();
  add_out(card, o);
  CLI::App* sample = space->add_subcommand("sample", "draw random architectures");
  add_seed(sample, o);
  add_out(sample, o);
  add_net(sample, o);
  sample->add_option("--policy", o.policy, "hierarchical|uniform-candidate")->capture_default_str();
  sample->add_option("--n", o.n, "number of samples")->capture_default_str();
  sample->add_option("--budget-flops", o.budget_flops, "keep samples at or below this FLOPs");
  sample->add_option("--min-flops", o.min_flops, "keep samples at or above this FLOPs");

  CLI::App* cost = app.add_subcommand("cost", "analytical FLOPs / params breakdown");
  add_out(cost, o);
  add_net(cost, o);
  cost->add_option("--arch", o.arch, "architecture file")->required();

  CLI::App* data = app.add_subcommand("data", "dataset utilities");
  data->require_subcommand(1);
  CLI::App* gen = data->add_subcommand("gen", "render the synthetic dataset");
  add_seed(gen, o);
  add_out(gen, o);
  gen->add_option("--count", o.count, "example count")->capture_default_str();
  gen->add_option("--res", o.res, "image size")->capture_default_str();
  gen->add_option("--classes", o.classes, "class count")->capture_default_str();

  CLI::App* train = app.add_subcommand("train-supernet", "train the weight-sharing supernet");
  add_seed(train, o);
  add_out(train, o);
  add_net(train, o);
  add_data(train, o);
  add_train(train, o);
  train->add_option("--policy", o.policy, "hierarchical|uniform-candidate")->capture_default_str();
  train->add_option("--sandwich", o.sandwich, "on|off")->capture_default_str();
  train->add_option("--sharing", o.sharing, "mhs|naive")->capture_default_str();

  CLI::App* search = app.add_subcommand("search", "evolutionary search on a trained supernet");
  add_seed(search, o);
  add_out(search, o);
  add_data(search, o);
  search->add_option("--supernet", o.supernet, "supernet checkpoint")->required();
  search->add_option("--budget-flops", o.budget_flops, "FLOPs budget (default: midpoint of min and max)");
  search->add_option("--sharing", o.sharing, "mhs|naive")->capture_default_str();
  search->add_option("--population", o.population, "population size")->capture_default_str();
  search->add_option("--generations", o.generations, "generations")->capture_default_str();
  search->add_option("--parent-fraction", o.parent_fraction, "surviving share")->capture_default_str();
  search->add_option("--mutation-prob", o.mutation_prob, "per-field mutation probability")->capture_default_str();
  search->add_option("--crossover-fraction", o.crossover_fraction, "share of offspring from crossover")->capture_default_str();

  CLI::App* retrain = app.add_subcommand("retrain", "train an architecture from scratch");
  add_seed(retrain, o);
  add_out(retrain, o);
  add_net(retrain, o);
  add_data(retrain, o);
  add_train(retrain, o);
  retrain->add_option("--arch", o.arch, "architecture file")->required();

  CLI::App* eval = app.add_subcommand("eval", "test accuracy of a checkpoint");
  add_out(eval, o);
  add_data(eval, o);
  eval->add_option("--checkpoint", o.checkpoint, "supernet or stand-alone checkpoint")->required();
  eval->add_option("--arch", o.arch, "architecture file (supernet checkpoints)");
  eval->add_option("--sharing", o.sharing, "mhs|naive")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << app.help();
    return 1;
  }

  const std::vector<std::string> args(argv, argv + argc);
  try {
    auto dispatch = [&](CLI::App* sub, const std::string& name, auto fn) -> std::optional<int> {
      if (!sub->parsed()) return std::nullopt;
      Run run(name, args, *sub, o);
      const int code = fn(o, run);
      run.finish();
      return code;
    };
    std::optional<int> code;
    if (!code) code = dispatch(card, "space card", cmd_space_card);
    if (!code) code = dispatch(sample, "space sample", cmd_space_sample);
    if (!code) code = dispatch(cost, "cost", cmd_cost);
    if (!code) code = dispatch(gen, "data gen", cmd_data_gen);
    if (!code) code = dispatch(train, "train-supernet", cmd_train_supernet);
    if (!code) code = dispatch(search, "search", cmd_search);
    if (!code) code = dispatch(retrain, "retrain", cmd_retrain);
    if (!code) code = dispatch(eval, "eval", cmd_eval);
    return code.value_or(1);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
