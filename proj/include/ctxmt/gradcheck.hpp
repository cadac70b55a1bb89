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

#pragma once

#include <cstddef>
#include <functional>
#include <string>

#include "ctxmt/tensor.hpp"

namespace ctxmt {

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t entries_checked = 0;
};

struct GradCheckOptions {
  double epsilon = 1e-5;
  // Relative error is |a - n| / max(|a|, |n|, absolute_floor); the floor keeps
  // near-zero gradients from turning roundoff into large ratios.
  double absolute_floor = 1e-6;
};

using LossFunction = std::function<Tensor()>;

// Central differences of loss_fn with respect to every entry of params,
// compared against the supplied analytic gradients. loss_fn is evaluated with
// recording suspended. Throws NumericError on a non-finite perturbed loss.
GradCheckReport compare_gradients(const LossFunction& loss_fn, NamedTensors params,
                                  const GradientMap& analytic,
                                  const GradCheckOptions& options = {});

// Records loss_fn on a fresh tape, runs backward, then compare_gradients.
// Parameter gradients are zeroed before and after.
GradCheckReport finite_diff_check(const LossFunction& loss_fn, NamedTensors params,
                                  const GradCheckOptions& options = {});

}  // namespace ctxmt
