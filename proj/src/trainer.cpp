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

#include "trionas/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <numeric>
#include <unordered_map>

namespace trionas {

void TrainConfig::validate() const {
  auto fail = [](const std::string& what) { throw ValidationError("train config: " + what); };
  if (epochs < 0) fail("epochs must be non-negative");
  if (batch_size < 1) fail("batch size must be positive");
  if (!(lr > 0)) fail("learning rate must be positive");
  if (momentum < 0 || momentum >= 1) fail("momentum must be in [0, 1)");
  if (weight_decay < 0) fail("weight decay must be non-negative");
  if (label_smoothing < 0 || label_smoothing >= 1) fail("label smoothing must be in [0, 1)");
  if (warmup_epochs < 0 || warmup_epochs > epochs) fail("warmup epochs must be in [0, epochs]");
  if (recalibration_batches < 1) fail("recalibration batches must be positive");
}

LrSchedule::LrSchedule(double base, int64_t warmup_steps, int64_t total_steps)
    : base_(base), warmup_(warmup_steps), total_(total_steps) {
  if (warmup_steps < 0 || total_steps < warmup_steps) {
    throw ValidationError("lr schedule: need 0 <= warmup <= total steps");
  }
}

double LrSchedule::at(int64_t step) const {
  if (step < warmup_) return base_ * static_cast<double>(step + 1) / static_cast<double>(warmup_);
  const int64_t decay_steps = total_ - warmup_;
  if (decay_steps <= 0) return base_;
  const double progress =
      std::min(1.0, static_cast<double>(step - warmup_ + 1) / static_cast<double>(decay_steps));
  return base_ * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

Sgd::Sgd(std::vector<Tensor> params, double momentum)
    : params_(std::move(params)), velocity_(params_.size()), momentum_(momentum) {}

void Sgd::zero_grad() {
  for (const Tensor& p : params_) p.clear_grad();
}

void Sgd::step(double lr, double weight_decay, CandidateNet* decay) {
  std::unordered_map<const Real*, std::size_t> slot;
  for (std::size_t i = 0; i < params_.size(); ++i) slot[params_[i].ptr()] = i;
  std::vector<std::vector<uint8_t>> mask(params_.size());
  if (decay != nullptr && weight_decay > 0) {
    for (const NamedView& v : decay->named_parameters()) {
      auto it = slot.find(v.view->source().ptr());
      if (it == slot.end()) continue;
      auto& m = mask[it->second];
      m.resize(static_cast<std::size_t>(params_[it->second].numel()), 0);
      if (v.view->is_slice()) {
        for (int64_t j : v.view->index()) m[static_cast<std::size_t>(j)] = 1;
      } else {
        std::fill(m.begin(), m.end(), 1);
      }
    }
  }
  const Real mu = static_cast<Real>(momentum_);
  const Real wd = static_cast<Real>(weight_decay);
  const Real rate = static_cast<Real>(lr);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = params_[i];
    if (!p.has_grad()) continue;
    auto w = p.data();
    auto g = p.grad();
    auto& v = velocity_[i];
    if (v.empty()) v.assign(w.size(), Real(0));
    const auto& m = mask[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      Real gj = g[j];
      if (!m.empty() && m[j]) gj += wd * w[j];
      v[j] = mu * v[j] + gj;
      w[j] -= rate * (gj + mu * v[j]);
    }
  }
}

std::string metrics_csv(const std::vector<EpochMetrics>& log) {
  std::string out = "epoch,lr,train_loss,min_acc,max_acc,seconds\n";
  char buf[256];
  for (const EpochMetrics& m : log) {
    std::snprintf(buf, sizeof buf, "%d,%.8g,%.6f,%.6f,%.6f,", m.epoch, m.lr, m.train_loss,
                  m.min_acc, m.max_acc);
    out += buf;
    if (m.seconds >= 0) {
      std::snprintf(buf, sizeof buf, "%.3f", m.seconds);
      out += buf;
    }
    out += '\n';
  }
  return out;
}

void bn_recalibrate(CandidateNet& net, const Dataset& data, int batches, int batch_size) {
  if (batches < 1) throw ValidationError("bn_recalibrate: batch count must be at least 1");
  if (batch_size < 1) throw ValidationError("bn_recalibrate: batch size must be positive");
  if (data.size() == 0) throw ValidationError("bn_recalibrate: empty dataset");
  NoGradGuard guard;
  net.reset_running_stats();
  for (int b = 0; b < batches; ++b) {
    const int64_t begin = static_cast<int64_t>(b) * batch_size;
    if (begin >= data.size()) break;
    const int64_t end = std::min<int64_t>(data.size(), begin + batch_size);
    std::vector<int64_t> idx(static_cast<std::size_t>(end - begin));
    std::iota(idx.begin(), idx.end(), begin);
    net.forward(make_batch(data, idx), BnMode::kRecalibrate);
  }
}

double evaluate(CandidateNet& net, const Dataset& data, int batch_size) {
  if (data.size() == 0) throw ValidationError("evaluate: empty dataset");
  NoGradGuard guard;
  int64_t correct = 0;
  for (int64_t begin = 0; begin < data.size(); begin += batch_size) {
    const int64_t end = std::min<int64_t>(data.size(), begin + batch_size);
    std::vector<int64_t> idx(static_cast<std::size_t>(end - begin));
    std::iota(idx.begin(), idx.end(), begin);
    const Tensor logits = net.forward(make_batch(data, idx), BnMode::kEval);
    const int64_t k = logits.dim(1);
    const Real* l = logits.ptr();
    for (std::size_t b = 0; b < idx.size(); ++b) {
      const Real* row = l + static_cast<int64_t>(b) * k;
      const int64_t pred = std::max_element(row, row + k) - row;
      if (pred == data.labels[static_cast<std::size_t>(idx[b])]) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

double recalibrated_accuracy(CandidateNet& net, const Dataset& recal, const Dataset& eval,
                             int batches, int batch_size) {
  bn_recalibrate(net, recal, batches, batch_size);
  return evaluate(net, eval, batch_size);
}

namespace {

struct StepOutcome {
  double loss = 0;
  CandidateNet* decay = nullptr;
};

using StepFn = std::function<StepOutcome(const Tensor&, const std::vector<int>&, TrainStats&)>;
using EvalFn = std::function<std::pair<double, double>()>;

double forward_backward(CandidateNet& net, const Tensor& x, const std::vector<int>& y,
                        Real smoothing, TrainStats& stats) {
  Tape tape;
  const Tensor logits = net.forward(x, BnMode::kTrain);
  const Tensor loss = cross_entropy(logits, y, smoothing);
  ++stats.forward_passes;
  const double value = loss.item();
  if (!std::isfinite(value)) throw NonFiniteError("non-finite loss");
  tape.backward(loss);
  ++stats.backward_passes;
  return value;
}

TrainResult run_training(std::vector<Tensor> params, const Dataset& train,
                         const TrainConfig& cfg, const StepFn& step_fn,
                         const EvalFn& eval_fn, const EpochCallback& on_epoch) {
  cfg.validate();
  if (train.size() == 0) throw ValidationError("training split is empty");
  const int64_t batch = std::min<int64_t>(cfg.batch_size, train.size());
  const int64_t steps_per_epoch = train.size() / batch;
  const LrSchedule schedule(cfg.lr, cfg.warmup_epochs * steps_per_epoch,
                            cfg.epochs * steps_per_epoch);
  Sgd sgd(std::move(params), cfg.momentum);
  Rng order_rng(cfg.seed);
  std::vector<int64_t> order(static_cast<std::size_t>(train.size()));
  std::iota(order.begin(), order.end(), 0);
  TrainResult result;
  int64_t step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    std::shuffle(order.begin(), order.end(), order_rng.engine());
    double loss_sum = 0;
    double lr = 0;
    for (int64_t b = 0; b < steps_per_epoch; ++b, ++step) {
      const std::span<const int64_t> idx(order.data() + b * batch, static_cast<std::size_t>(batch));
      const Tensor x = make_batch(train, idx);
      const std::vector<int> y = batch_labels(train, idx);
      sgd.zero_grad();
      StepOutcome out;
      try {
        out = step_fn(x, y, result.stats);
      } catch (const NonFiniteError& e) {
        throw TrainingError("training diverged at step " + std::to_string(step) + ": " + e.what());
      }
      lr = schedule.at(step);
      sgd.step(lr, cfg.weight_decay, out.decay);
      ++result.stats.optimizer_steps;
      loss_sum += out.loss;
    }
    EpochMetrics m;
    m.epoch = epoch;
    m.lr = lr;
    m.train_loss = loss_sum / static_cast<double>(steps_per_epoch);
    std::tie(m.min_acc, m.max_acc) = eval_fn();
    if (cfg.wall_time) {
      m.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
    result.log.push_back(m);
    if (on_epoch) on_epoch(m);
  }
  return result;
}

}  // namespace

TrainResult train_supernet(SupernetWeights& store, const SamplingPolicy& policy,
                           Sharing sharing, const Dataset& train, const Dataset& eval,
                           const TrainConfig& cfg, const EpochCallback& on_epoch) {
  if (eval.size() == 0) throw ValidationError("evaluation split is empty");
  const SpaceDefinition& space = store.space();
  const int res = store.config().resolution;
  Rng sample_rng(policy.seed);
  std::vector<CandidateNet> live;
  const Real smoothing = static_cast<Real>(cfg.label_smoothing);
  StepFn step = [&](const Tensor& x, const std::vector<int>& y, TrainStats& stats) {
    const SampleStep s = sample_step(policy, space, res, sample_rng);
    live.clear();
    double loss = 0;
    for (const ArchitectureConfig& a : s.configs) {
      live.push_back(instantiate_candidate(store, a, sharing));
      loss += forward_backward(live.back(), x, y, smoothing, stats);
    }
    return StepOutcome{loss / static_cast<double>(s.configs.size()), &live[s.decay_index]};
  };
  const ArchitectureConfig lo = global_min_config(space, res);
  const ArchitectureConfig hi = global_max_config(space, res);
  EvalFn eval_fn = [&]() {
    CandidateNet a = instantiate_candidate(store, lo, sharing);
    CandidateNet b = instantiate_candidate(store, hi, sharing);
    return std::pair{
        recalibrated_accuracy(a, train, eval, cfg.recalibration_batches, cfg.batch_size),
        recalibrated_accuracy(b, train, eval, cfg.recalibration_batches, cfg.batch_size)};
  };
  return run_training(store.parameters(), train, cfg, step, eval_fn, on_epoch);
}

RetrainResult retrain_scratch(const NetConfig& config, const ArchitectureConfig& arch,
                              const Dataset& train, const Dataset& eval,
                              const TrainConfig& cfg, const EpochCallback& on_epoch) {
  if (eval.size() == 0) throw ValidationError("evaluation split is empty");
  RetrainResult r{build_standalone(config, arch, cfg.seed), {}, 0};
  CandidateNet& net = r.net;
  const Real smoothing = static_cast<Real>(cfg.label_smoothing);
  StepFn step = [&](const Tensor& x, const std::vector<int>& y, TrainStats& stats) {
    return StepOutcome{forward_backward(net, x, y, smoothing, stats), &net};
  };
  EvalFn eval_fn = [&]() {
    const double acc = evaluate(net, eval, cfg.batch_size);
    return std::pair{acc, acc};
  };
  r.train = run_training(net.parameter_tensors(), train, cfg, step, eval_fn, on_epoch);
  r.accuracy = r.train.log.empty() ? evaluate(net, eval, cfg.batch_size)
                                   : r.train.log.back().max_acc;
  return r;
}

}  // namespace trionas
