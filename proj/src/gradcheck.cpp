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

#include "trionas/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace trionas {

GradCheckReport grad_check(const std::function<Tensor()>& f,
                           std::vector<Tensor> inputs, double eps, double tol) {
  if (!(eps > 0)) throw std::invalid_argument("grad_check: eps must be > 0");
  std::vector<std::vector<Real>> analytic;
  Real reference = 0;
  {
    for (Tensor& x : inputs) {
      x.set_requires_grad(true);
      x.zero_grad();
    }
    Tape tape;
    Tensor y = f();
    reference = y.item();
    tape.backward(y);
    for (Tensor& x : inputs) {
      auto g = x.grad();
      analytic.emplace_back(g.begin(), g.end());
    }
  }
  NoGradGuard no_grad;
  auto eval = [&]() { return static_cast<double>(f().item()); };
  if (eval() != static_cast<double>(reference)) {
    throw std::logic_error(
        "grad_check: function is not deterministic; freeze its state first");
  }
  GradCheckReport report;
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    auto data = inputs[t].data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const Real saved = data[i];
      data[i] = static_cast<Real>(saved + eps);
      const double up = eval();
      data[i] = static_cast<Real>(saved - eps);
      const double down = eval();
      data[i] = saved;
      const double numeric = (up - down) / (2 * eps);
      const double a = analytic[t][i];
      const double denom = std::max({1.0, std::abs(a), std::abs(numeric)});
      report.max_rel_error =
          std::max(report.max_rel_error, std::abs(a - numeric) / denom);
    }
  }
  report.passed = report.max_rel_error <= tol;
  return report;
}

}  // namespace trionas
