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

#ifndef TRIONAS_TRAINER_HPP_
#define TRIONAS_TRAINER_HPP_

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "trionas/data.hpp"
#include "trionas/sampling.hpp"
#include "trionas/supernet.hpp"

namespace trionas {

struct TrainConfig {
  int epochs = 30;
  int batch_size = 64;
  double lr = 0.1;
  double momentum = 0.9;  // Nesterov
  double weight_decay = 8e-5;
  double label_smoothing = 0.1;
  int warmup_epochs = 2;
  uint64_t seed = 0;
  int recalibration_batches = 10;  // before each per-epoch evaluation
  bool wall_time = false;          // fill the metrics `seconds` column

  void validate() const;
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Linear warmup to the base rate, then cosine decay reaching zero at the last
// step.
class LrSchedule {
 public:
  LrSchedule(double base, int64_t warmup_steps, int64_t total_steps);
  double at(int64_t step) const;

 private:
  double base_;
  int64_t warmup_;
  int64_t total_;
};

// SGD with Nesterov momentum over a fixed parameter list.
class Sgd {
 public:
  Sgd(std::vector<Tensor> params, double momentum);
  void zero_grad();
  // Weight decay is applied only to the entries `decay` reads.
  void step(double lr, double weight_decay, CandidateNet* decay);
  const std::vector<Tensor>& params() const { return params_; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<Real>> velocity_;
  double momentum_;
};

struct EpochMetrics {
  int epoch = 0;
  double lr = 0;
  double train_loss = 0;
  double min_acc = 0;
  double max_acc = 0;
  double seconds = -1;  // negative when not recorded
};

struct TrainStats {
  int64_t forward_passes = 0;
  int64_t backward_passes = 0;
  int64_t optimizer_steps = 0;
};

struct TrainResult {
  std::vector<EpochMetrics> log;
  TrainStats stats;
};

// Header `epoch,lr,train_loss,min_acc,max_acc,seconds`.
std::string metrics_csv(const std::vector<EpochMetrics>& log);

using EpochCallback = std::function<void(const EpochMetrics&)>;

// Trains the store on `train` with candidates drawn by `policy`; per-epoch
// min / max candidate accuracy is measured on `eval` after BN recalibration.
TrainResult train_supernet(SupernetWeights& store, const SamplingPolicy& policy,
                           Sharing sharing, const Dataset& train, const Dataset& eval,
                           const TrainConfig& cfg, const EpochCallback& on_epoch = {});

struct RetrainResult {
  CandidateNet net;
  TrainResult train;
  double accuracy = 0;  // on `eval`
};

// Fresh stand-alone network for `arch` trained with the same recipe. Weight
// decay covers every parameter.
RetrainResult retrain_scratch(const NetConfig& config, const ArchitectureConfig& arch,
                              const Dataset& train, const Dataset& eval,
                              const TrainConfig& cfg, const EpochCallback& on_epoch = {});

// Resets running statistics and re-estimates them as a cumulative average over
// the first `batches` fixed-order batches of `data`. Parameters are untouched.
void bn_recalibrate(CandidateNet& net, const Dataset& data, int batches, int batch_size);

// Top-1 accuracy with running statistics.
double evaluate(CandidateNet& net, const Dataset& data, int batch_size);

// Recalibrate, then evaluate.
double recalibrated_accuracy(CandidateNet& net, const Dataset& recal, const Dataset& eval,
                             int batches, int batch_size);

}  // namespace trionas

#endif  // TRIONAS_TRAINER_HPP_
