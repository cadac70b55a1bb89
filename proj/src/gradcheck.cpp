// Copyright 2026 The ctxmt Authors. All Rights Reserved.
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

#include "ctxmt/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "ctxmt/error.hpp"

namespace ctxmt {

namespace {

double evaluate(const LossFunction& loss_fn, const std::string& name, std::size_t index) {
  NoGradGuard guard;
  const double value = loss_fn().item();
  if (!std::isfinite(value)) {
    throw NumericError("non-finite loss while perturbing " + name + "[" +
                       std::to_string(index) + "]");
  }
  return value;
}

}  // namespace

GradCheckReport compare_gradients(const LossFunction& loss_fn, NamedTensors params,
                                  const GradientMap& analytic,
                                  const GradCheckOptions& options) {
  if (!(options.epsilon > 0.0)) throw UsageError("finite-difference epsilon must be positive");
  GradCheckReport report;
  for (auto& [name, tensor] : params) {
    auto it = analytic.find(name);
    if (it == analytic.end()) throw UsageError("no analytic gradient for " + name);
    const auto expected = it->second.data();
    auto values = tensor.mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + options.epsilon;
      const double plus = evaluate(loss_fn, name, i);
      values[i] = saved - options.epsilon;
      const double minus = evaluate(loss_fn, name, i);
      values[i] = saved;
      const double numeric = (plus - minus) / (2.0 * options.epsilon);
      const double a = expected[i];
      const double scale =
          std::max({std::abs(a), std::abs(numeric), options.absolute_floor});
      const double rel = std::abs(a - numeric) / scale;
      ++report.entries_checked;
      if (rel > report.max_relative_error || report.worst_parameter.empty()) {
        report.max_relative_error = rel;
        report.worst_parameter = name;
        report.worst_index = i;
        report.worst_analytic = a;
        report.worst_numeric = numeric;
      }
    }
  }
  return report;
}

GradCheckReport finite_diff_check(const LossFunction& loss_fn, NamedTensors params,
                                  const GradCheckOptions& options) {
  for (auto& [_, t] : params) t.zero_grad();
  GradientMap analytic;
  {
    GradTape tape;
    Tensor loss = loss_fn();
    analytic = backward(tape, loss, params);
  }
  for (auto& [_, t] : params) t.zero_grad();
  return compare_gradients(loss_fn, std::move(params), analytic, options);
}

}  // namespace ctxmt
