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
#include <cstdint>
#include <string>

#include "json.hpp"

namespace ctxmt {

struct ContextWindow {
  std::size_t previous = 1;
  std::size_t next = 1;

  bool operator==(const ContextWindow&) const = default;
};

// Parses "P,N" (e.g. "1,0" for the online setting).
ContextWindow parse_window(const std::string& text);

struct ModelConfig {
  std::size_t vocab_size = 0;
  std::size_t d_model = 128;
  std::size_t d_ffn = 256;
  std::size_t heads = 4;
  std::size_t n_unified = 1;    // N1
  std::size_t n_selection = 5;  // N2
  std::size_t decoder_layers = 6;
  double q = 0.3;
  double alpha = 0.5;
  double gate_c = 1.0;
  double dropout = 0.1;
  double label_smoothing = 0.1;
  std::size_t max_positions = 256;
  ContextWindow context_window;

  std::size_t encoder_layers() const { return n_unified + n_selection; }
  // Throws UsageError naming the first violated constraint.
  void validate() const;

  bool operator==(const ModelConfig&) const = default;
};

enum class TrainMode { kMono, kBi };

TrainMode parse_mode(const std::string& text);
std::string mode_name(TrainMode mode);

struct TrainConfig {
  double learning_rate = 1e-3;  // peak of the inverse-sqrt schedule
  std::size_t warmup_steps = 200;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double adam_epsilon = 1e-9;
  double grad_clip = 0.0;  // global-norm clip, 0 disables
  std::size_t max_steps = 2000;
  std::uint64_t seed = 1;
  std::size_t max_tokens = 256;  // target tokens per batch
  std::size_t checkpoint_every = 500;
  TrainMode mode = TrainMode::kMono;
  // "reference" uses gold target sentences as target context; "model" uses a
  // first-pass context-free translation by the current parameters.
  std::string target_context = "reference";
  // Stop once the running next-token accuracy over the last epoch reaches this
  // value; 0 disables.
  double stop_accuracy = 0.0;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

struct DataConfig {
  std::size_t max_vocab = 8000;
  std::size_t bpe_merges = 0;  // 0 = word-level tokens

  void validate() const;
  bool operator==(const DataConfig&) const = default;
};

struct BeamConfig {
  std::size_t beam = 4;
  double length_penalty = 1.0;
  double max_length_factor = 2.0;
  std::size_t max_length_offset = 5;

  void validate() const;
  bool operator==(const BeamConfig&) const = default;
};

// Learning rate at a 1-based step: peak * min(step / warmup, sqrt(warmup / step)).
double inverse_sqrt_lr(const TrainConfig& config, std::size_t step);

// JSON mapping. from_json rejects unknown keys and fills absent keys from
// defaults; an absent decoder_layers defaults to N1 + N2.
nlohmann::json to_json(const ModelConfig& config);
nlohmann::json to_json(const TrainConfig& config);
nlohmann::json to_json(const DataConfig& config);
nlohmann::json to_json(const BeamConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& j);
TrainConfig train_config_from_json(const nlohmann::json& j);
DataConfig data_config_from_json(const nlohmann::json& j);
BeamConfig beam_config_from_json(const nlohmann::json& j);

// Everything a run needs, one section per config struct. model.vocab_size
// may stay 0; training fills it from the built vocabulary.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  DataConfig data;
  BeamConfig beam;

  void validate() const;
  bool operator==(const RunConfig&) const = default;
};

nlohmann::json to_json(const RunConfig& config);
RunConfig run_config_from_json(const nlohmann::json& j);

// Sets a dotted path ("train.seed=7", "model.context_window.next=0") in a
// config document. The value is parsed as JSON, else kept as a string.
void apply_override(nlohmann::json& document, const std::string& assignment);

}  // namespace ctxmt
