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

#ifndef TRIONAS_GRADCHECK_HPP_
#define TRIONAS_GRADCHECK_HPP_

#include <functional>
#include <vector>

#include "trionas/tensor.hpp"

namespace trionas {

struct GradCheckReport {
  double max_rel_error = 0;
  bool passed = false;
};

// Compares reverse-mode gradients of the scalar `f` against central
// differences for every element of every input. Relative error is
// |analytic - numeric| / max(1, |analytic|, |numeric|).
// Throws std::logic_error when `f` does not reproduce its own value.
GradCheckReport grad_check(const std::function<Tensor()>& f,
                           std::vector<Tensor> inputs, double eps, double tol);

inline GradCheckReport grad_check(const std::function<Tensor()>& f, Tensor x,
                                  double eps, double tol) {
  return grad_check(f, std::vector<Tensor>{std::move(x)}, eps, tol);
}

}  // namespace trionas

#endif  // TRIONAS_GRADCHECK_HPP_
