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

#ifndef TRIONAS_DATA_HPP_
#define TRIONAS_DATA_HPP_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "trionas/tensor.hpp"

namespace trionas {

// Images stored as u8 HWC pixels with u16 labels.
struct Dataset {
  int height = 0;
  int width = 0;
  int channels = 0;
  int classes = 0;
  std::vector<uint8_t> pixels;
  std::vector<uint16_t> labels;

  int64_t size() const { return static_cast<int64_t>(labels.size()); }
  int64_t image_bytes() const { return static_cast<int64_t>(height) * width * channels; }
  // Examples [begin, end).
  Dataset slice(int64_t begin, int64_t end) const;
  Dataset concat(const Dataset& other) const;
};

struct SyntheticSpec {
  int count = 2600;
  int image_size = 32;
  int channels = 3;
  int classes = 2;
  int bars = 3;  // one distractor at a different orientation, the rest agree
  double noise = 0.15;
};

// Each image holds several short oriented bars and a blob over pixel noise.
// All but one bar follow the class orientation, so the label is decided by
// the majority orientation across the whole image. Labels cycle through the
// classes and are then shuffled, so class counts differ by at most one.
Dataset generate_synthetic(const SyntheticSpec& spec, uint64_t seed);

// Binary file: magic "TDS1", u32 count, h, w, channels, classes, then
// count x h*w*channels u8 pixels, then count x u16 labels. Little-endian.
void write_dataset(const std::string& path, const Dataset& data);
Dataset read_dataset(const std::string& path);

// Consecutive index ranges: train, then evo, then test.
struct SplitSizes {
  int64_t train = 2000;
  int64_t evo = 200;
  int64_t test = 400;
};

struct Splits {
  Dataset train;
  Dataset evo;
  Dataset test;
};

Splits split_dataset(const Dataset& data, const SplitSizes& sizes);

// Normalised (B, C, H, W) batch of the given examples.
Tensor make_batch(const Dataset& data, std::span<const int64_t> index);
std::vector<int> batch_labels(const Dataset& data, std::span<const int64_t> index);

}  // namespace trionas

#endif  // TRIONAS_DATA_HPP_
