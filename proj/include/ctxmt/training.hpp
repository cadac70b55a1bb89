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
#include <optional>
#include <string>
#include <vector>

#include "ctxmt/bundle.hpp"
#include "ctxmt/config.hpp"
#include "ctxmt/data.hpp"
#include "ctxmt/model.hpp"
#include "json.hpp"

namespace ctxmt::training {

// Mean label-smoothed cross entropy over the non-pad target tokens of a
// batch, through the standard decoder.
Tensor loss_mono(const ModelState& state, const data::Batch& batch, const model::ForwardContext& ctx);
// Same through the dual cross-attention decoder; needs target context.
Tensor loss_bi(const ModelState& state, const data::Batch& batch, const model::ForwardContext& ctx);
// alpha * loss_mono + (1 - alpha) * loss_bi, sharing the source encoding.
Tensor loss_all(const ModelState& state, const data::Batch& batch, double alpha,
                const model::ForwardContext& ctx);

struct BatchObjective {
  Tensor loss;  // what the step minimizes
  double loss_m = 0.0;
  std::optional<double> loss_b;
  double loss_all = 0.0;
  std::size_t correct = 0;  // argmax hits among non-pad targets
  std::size_t counted = 0;
  // Alive context / context before selection, pooled over the batch.
  std::vector<double> src_ratio;
  std::vector<double> tgt_ratio;
};

// Mono mode optimizes loss_mono; bi mode optimizes loss_all with config.alpha.
BatchObjective batch_objective(const ModelState& state, const data::Batch& batch, TrainMode mode,
                               const model::ForwardContext& ctx);

class Adam {
 public:
  explicit Adam(const TrainConfig& config) : config_(config) {}

  // One update at the given 1-based step.
  void step(NamedTensors& params, const GradientMap& grads, double lr, std::size_t step);

  // Slots named "adam.m.<param>" and "adam.v.<param>".
  NamedTensors slots() const;
  void load(const NamedTensors& slots, const NamedTensors& params);

 private:
  TrainConfig config_;
  NamedTensors m_;
  NamedTensors v_;
};

// Scales grads in place so their global norm is at most max_norm; returns
// the norm before scaling.
double clip_gradients(GradientMap& grads, double max_norm);

struct TrainRequest {
  ModelConfig model;
  TrainConfig train;
  DataConfig data;
  std::string out_dir;
  std::optional<std::string> resume;  // checkpoint to continue from
  std::function<void(const nlohmann::json&)> on_step;
};

struct TrainResult {
  ModelBundle bundle;
  std::size_t last_step = 0;
  bool stopped_early = false;
  std::string final_checkpoint;
  std::string metrics_path;
};

// Seeded, single-threaded training. Writes <out>/metrics.jsonl (a header
// with the effective config, then one line per step), <out>/step_<N>.ckpt
// every checkpoint_every steps and <out>/final.ckpt at the end. Batch order
// and dropout draws depend only on (seed, step), so a resumed run replays the
// uninterrupted one. Throws NumericError naming the step on a non-finite loss.
TrainResult train(const data::DocumentCorpus& corpus, const TrainRequest& request);

// The metrics header object for a run.
nlohmann::json metrics_header(const ModelConfig& model, const TrainConfig& train, const DataConfig& data);

}  // namespace ctxmt::training
