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

#ifndef TRIONAS_TENSOR_HPP_
#define TRIONAS_TENSOR_HPP_

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace trionas {

// The library is compiled twice: single precision for training and double
// precision (TRIONAS_DOUBLE) for gradient checking.
#ifdef TRIONAS_DOUBLE
using Real = double;
#else
using Real = float;
#endif

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {
struct TensorImpl {
  Shape shape;
  std::vector<Real> data;
  std::vector<Real> grad;  // empty until first touched
  bool requires_grad = false;
};
}  // namespace detail

// Dense row-major array with an optional gradient buffer. Copies share
// storage; use clone() for a deep copy.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, Real value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<Real> values,
                     bool requires_grad = false);
  static Tensor scalar(Real value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  int rank() const { return static_cast<int>(impl_->shape.size()); }
  int64_t dim(int axis) const;
  int64_t numel() const { return static_cast<int64_t>(impl_->data.size()); }

  // Handle semantics: a const Tensor still grants access to its storage.
  std::span<Real> data() const { return impl_->data; }
  Real* ptr() const { return impl_->data.data(); }
  Real item() const;

  bool requires_grad() const { return impl_ && impl_->requires_grad; }
  void set_requires_grad(bool on) { impl_->requires_grad = on; }

  bool has_grad() const { return !impl_->grad.empty(); }
  // Allocates a zero gradient buffer on first access.
  std::span<Real> grad() const;
  void zero_grad() const;
  // Drops the gradient buffer (keeping its capacity); has_grad() turns false.
  void clear_grad() const { impl_->grad.clear(); }

  bool same(const Tensor& other) const { return impl_ == other.impl_; }
  Tensor clone() const;
  // Copy with a new shape. Not recorded on the tape.
  Tensor view_as(Shape shape) const;

 private:
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl)
      : impl_(std::move(impl)) {}
  std::shared_ptr<detail::TensorImpl> impl_;
};

// Ordered record of executed primitives. Constructing a Tape makes it the
// active tape for the current thread until it is destroyed; operations on
// tensors that require grad record a backward closure on the active tape.
class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* active();

  void record(std::string kind, Tensor output, std::function<void()> backward);

  // Replays recorded primitives in reverse order. Intermediate gradients are
  // reset on every call; leaf gradients accumulate until zeroed.
  void backward(const Tensor& loss);

  void clear();
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    std::string kind;
    Tensor output;
    std::function<void()> backward;
  };
  std::vector<Node> nodes_;
  Tape* previous_ = nullptr;
};

// Disables recording on the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  Tape* saved_;
};

// True when an op with these inputs must record itself.
bool should_record(std::initializer_list<const Tensor*> inputs);

void backward(const Tensor& loss);

}  // namespace trionas

#endif  // TRIONAS_TENSOR_HPP_
