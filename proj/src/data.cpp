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

#include "trionas/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <stdexcept>

#include "trionas/random.hpp"
#include "trionas/space.hpp"

namespace trionas {

Dataset Dataset::slice(int64_t begin, int64_t end) const {
  if (begin < 0 || end < begin || end > size()) {
    throw ValidationError("dataset slice [" + std::to_string(begin) + ", " +
                          std::to_string(end) + ") outside " + std::to_string(size()));
  }
  Dataset d = *this;
  d.pixels.assign(pixels.begin() + begin * image_bytes(), pixels.begin() + end * image_bytes());
  d.labels.assign(labels.begin() + begin, labels.begin() + end);
  return d;
}

Dataset Dataset::concat(const Dataset& other) const {
  if (other.height != height || other.width != width || other.channels != channels ||
      other.classes != classes) {
    throw ValidationError("cannot concatenate datasets of different geometry");
  }
  Dataset d = *this;
  d.pixels.insert(d.pixels.end(), other.pixels.begin(), other.pixels.end());
  d.labels.insert(d.labels.end(), other.labels.begin(), other.labels.end());
  return d;
}

namespace {

// Additive canvas in [0, 1] per channel.
struct Canvas {
  int size;
  int channels;
  std::vector<double> v;

  void blend(int x, int y, const std::vector<double>& colour, double alpha) {
    if (x < 0 || y < 0 || x >= size || y >= size) return;
    for (int c = 0; c < channels; ++c) {
      double& p = v[(static_cast<std::size_t>(y) * size + x) * channels + c];
      p = (1 - alpha) * p + alpha * colour[static_cast<std::size_t>(c)];
    }
  }
};

std::vector<double> random_colour(int channels, Rng& rng) {
  std::vector<double> c(static_cast<std::size_t>(channels));
  for (double& x : c) x = 0.55 + 0.45 * rng.uniform01();
  return c;
}

// Anti-aliased bar of the given length and half-thickness.
void draw_bar(Canvas& canvas, double cx, double cy, double angle, double length,
              double half_width, const std::vector<double>& colour) {
  const double dx = std::cos(angle), dy = std::sin(angle);
  const int reach = static_cast<int>(std::ceil(length / 2 + half_width + 1));
  for (int y = static_cast<int>(cy) - reach; y <= static_cast<int>(cy) + reach; ++y) {
    for (int x = static_cast<int>(cx) - reach; x <= static_cast<int>(cx) + reach; ++x) {
      const double px = x + 0.5 - cx, py = y + 0.5 - cy;
      const double along = px * dx + py * dy;
      const double across = std::abs(-px * dy + py * dx);
      const double a = std::clamp(length / 2 + 0.5 - std::abs(along), 0.0, 1.0) *
                       std::clamp(half_width + 0.5 - across, 0.0, 1.0);
      if (a > 0) canvas.blend(x, y, colour, a);
    }
  }
}

void draw_blob(Canvas& canvas, double cx, double cy, double radius,
               const std::vector<double>& colour) {
  const int r = static_cast<int>(std::ceil(radius)) + 1;
  for (int y = static_cast<int>(cy) - r; y <= static_cast<int>(cy) + r; ++y)
    for (int x = static_cast<int>(cx) - r; x <= static_cast<int>(cx) + r; ++x) {
      const double d = std::hypot(x + 0.5 - cx, y + 0.5 - cy);
      const double a = std::clamp(radius + 0.5 - d, 0.0, 1.0);
      if (a > 0) canvas.blend(x, y, colour, a);
    }
}

void render(Canvas& canvas, const SyntheticSpec& spec, int label, Rng& rng) {
  for (double& p : canvas.v) p = 0.25 * rng.uniform01();
  const double size = spec.image_size;
  const double jitter = std::numbers::pi / 12;
  auto orientation = [&](int cls) {
    return cls * std::numbers::pi / spec.classes + (2 * rng.uniform01() - 1) * jitter;
  };
  draw_blob(canvas, size * (0.15 + 0.7 * rng.uniform01()), size * (0.15 + 0.7 * rng.uniform01()),
            size * (0.06 + 0.06 * rng.uniform01()), random_colour(spec.channels, rng));
  for (int b = 0; b < spec.bars; ++b) {
    int cls = label;
    if (b == 0) {
      cls = static_cast<int>((label + 1 + rng.uniform_int(spec.classes - 1)) % spec.classes);
    }
    const double length = size * (0.25 + 0.12 * rng.uniform01());
    const double cx = size * (0.2 + 0.6 * rng.uniform01());
    const double cy = size * (0.2 + 0.6 * rng.uniform01());
    draw_bar(canvas, cx, cy, orientation(cls), length, 0.5 + 0.5 * rng.uniform01(),
             random_colour(spec.channels, rng));
  }
  for (double& p : canvas.v) p += rng.normal(0.0, spec.noise);
}

constexpr char kMagic[4] = {'T', 'D', 'S', '1'};

void put_u32(std::ostream& os, uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t get_u32(std::istream& is, const std::string& path) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw std::runtime_error(path + ": truncated dataset");
  return b[0] | (b[1] << 8) | (b[2] << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

}  // namespace

Dataset generate_synthetic(const SyntheticSpec& spec, uint64_t seed) {
  if (spec.classes < 2) throw ValidationError("synthetic data needs at least 2 classes");
  if (spec.count < 1 || spec.image_size < 8 || spec.channels < 1 || spec.bars < 2) {
    throw ValidationError("synthetic data needs count >= 1, image size >= 8, channels >= 1, bars >= 2");
  }
  Rng rng(seed);
  Dataset d;
  d.height = d.width = spec.image_size;
  d.channels = spec.channels;
  d.classes = spec.classes;
  d.labels.resize(static_cast<std::size_t>(spec.count));
  for (int i = 0; i < spec.count; ++i) d.labels[static_cast<std::size_t>(i)] = static_cast<uint16_t>(i % spec.classes);
  std::shuffle(d.labels.begin(), d.labels.end(), rng.engine());
  d.pixels.resize(static_cast<std::size_t>(spec.count * d.image_bytes()));
  Canvas canvas{spec.image_size, spec.channels,
                std::vector<double>(static_cast<std::size_t>(d.image_bytes()))};
  for (int i = 0; i < spec.count; ++i) {
    render(canvas, spec, d.labels[static_cast<std::size_t>(i)], rng);
    uint8_t* dst = d.pixels.data() + static_cast<int64_t>(i) * d.image_bytes();
    for (std::size_t j = 0; j < canvas.v.size(); ++j) {
      dst[j] = static_cast<uint8_t>(std::lround(std::clamp(canvas.v[j], 0.0, 1.0) * 255.0));
    }
  }
  return d;
}

void write_dataset(const std::string& path, const Dataset& data) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  os.write(kMagic, 4);
  put_u32(os, static_cast<uint32_t>(data.size()));
  put_u32(os, static_cast<uint32_t>(data.height));
  put_u32(os, static_cast<uint32_t>(data.width));
  put_u32(os, static_cast<uint32_t>(data.channels));
  put_u32(os, static_cast<uint32_t>(data.classes));
  os.write(reinterpret_cast<const char*>(data.pixels.data()),
           static_cast<std::streamsize>(data.pixels.size()));
  for (uint16_t l : data.labels) {
    const unsigned char b[2] = {static_cast<unsigned char>(l), static_cast<unsigned char>(l >> 8)};
    os.write(reinterpret_cast<const char*>(b), 2);
  }
  if (!os) throw std::runtime_error("failed writing " + path);
}

Dataset read_dataset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path);
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw std::runtime_error(path + ": not a dataset file (bad magic)");
  }
  Dataset d;
  const uint32_t count = get_u32(is, path);
  d.height = static_cast<int>(get_u32(is, path));
  d.width = static_cast<int>(get_u32(is, path));
  d.channels = static_cast<int>(get_u32(is, path));
  d.classes = static_cast<int>(get_u32(is, path));
  d.pixels.resize(static_cast<std::size_t>(count) * static_cast<std::size_t>(d.image_bytes()));
  if (!is.read(reinterpret_cast<char*>(d.pixels.data()), static_cast<std::streamsize>(d.pixels.size()))) {
    throw std::runtime_error(path + ": truncated dataset");
  }
  d.labels.resize(count);
  for (uint16_t& l : d.labels) {
    unsigned char b[2];
    if (!is.read(reinterpret_cast<char*>(b), 2)) throw std::runtime_error(path + ": truncated dataset");
    l = static_cast<uint16_t>(b[0] | (b[1] << 8));
    if (l >= d.classes) throw std::runtime_error(path + ": label out of range");
  }
  return d;
}

Splits split_dataset(const Dataset& data, const SplitSizes& sizes) {
  if (sizes.train < 1 || sizes.evo < 0 || sizes.test < 0) {
    throw ValidationError("split sizes must be non-negative with a non-empty train split");
  }
  const int64_t total = sizes.train + sizes.evo + sizes.test;
  if (total > data.size()) {
    throw ValidationError("splits need " + std::to_string(total) + " examples, dataset has " +
                          std::to_string(data.size()));
  }
  Splits s;
  s.train = data.slice(0, sizes.train);
  s.evo = data.slice(sizes.train, sizes.train + sizes.evo);
  s.test = data.slice(sizes.train + sizes.evo, total);
  return s;
}

Tensor make_batch(const Dataset& data, std::span<const int64_t> index) {
  const int64_t B = static_cast<int64_t>(index.size());
  const int64_t C = data.channels, H = data.height, W = data.width;
  Tensor out = Tensor::zeros({B, C, H, W});
  Real* o = out.ptr();
  for (int64_t b = 0; b < B; ++b) {
    const uint8_t* src = data.pixels.data() + index[static_cast<std::size_t>(b)] * data.image_bytes();
    for (int64_t y = 0; y < H; ++y)
      for (int64_t x = 0; x < W; ++x)
        for (int64_t c = 0; c < C; ++c) {
          const Real v = static_cast<Real>(src[(y * W + x) * C + c]) / Real(255);
          o[((b * C + c) * H + y) * W + x] = (v - Real(0.5)) * Real(4);
        }
  }
  return out;
}

std::vector<int> batch_labels(const Dataset& data, std::span<const int64_t> index) {
  std::vector<int> out;
  out.reserve(index.size());
  for (int64_t i : index) out.push_back(data.labels[static_cast<std::size_t>(i)]);
  return out;
}

}  // namespace trionas
