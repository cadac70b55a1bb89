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

#include <cstdint>
#include <string>

#include "ctxmt/config.hpp"
#include "ctxmt/tensor.hpp"
#include "json.hpp"

namespace ctxmt {

// All learnable tensors, addressed by name. The output projection is tied to
// embed.word. Per-layer names:
//
//   embed.{word,position,segment}
//   enc.<l>.{ln_attn,ln_ffn}.{gain,bias}
//   enc.<l>.attn.{wq,bq,wk,bk,wv,bv,wo,bo}
//   enc.<l>.ffn.{w1,b1,w2,b2}
//   enc.ln_final.{gain,bias}
//   dec.<l>.{ln_self,ln_cross,ln_ffn}.{gain,bias}
//   dec.<l>.{self_attn,src_attn,tgt_attn}.{wq,bq,wk,bk,wv,bv,wo,bo}
//   dec.<l>.gate.{w_s,u_t,b}
//   dec.<l>.ffn.{w1,b1,w2,b2}
//   dec.ln_final.{gain,bias}
class ModelState {
 public:
  ModelState() = default;

  // Random initialization; deterministic for a given seed.
  static ModelState initialize(const ModelConfig& config, std::uint64_t seed);
  // Expected shape of every parameter for a config.
  static std::map<std::string, Shape> parameter_shapes(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }
  const NamedTensors& parameters() const { return params_; }
  NamedTensors& parameters() { return params_; }
  const Tensor& at(const std::string& name) const;
  Tensor& at(const std::string& name);

  // Adopts loaded tensors after checking names and shapes against config.
  static ModelState from_tensors(const ModelConfig& config, NamedTensors tensors);

  void zero_grad();

 private:
  ModelConfig config_;
  NamedTensors params_;
};

// On-disk checkpoint: magic "CTXMTCKP", format version, a JSON metadata block
// (model config, vocabulary, training progress) and two named tensor groups
// (parameters and optimizer slots). Doubles are stored as raw little-endian
// IEEE-754, so a round trip is bit-exact.
struct Checkpoint {
  nlohmann::json meta = nlohmann::json::object();
  NamedTensors parameters;
  NamedTensors optimizer;
};

inline constexpr char kCheckpointMagic[8] = {'C', 'T', 'X', 'M', 'T', 'C', 'K', 'P'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::string& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace ctxmt
