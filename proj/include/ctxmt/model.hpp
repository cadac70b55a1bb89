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
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "ctxmt/model_state.hpp"
#include "ctxmt/selection.hpp"
#include "ctxmt/tensor.hpp"

namespace ctxmt::model {

using selection::SegmentLayout;

// Attention probabilities captured during a forward pass, keyed by site:
// "enc.<l>", "dec.<l>.self", "dec.<l>.src", "dec.<l>.tgt".
struct AttentionRecord {
  std::string site;
  Tensor probs;  // [h, queries, keys], detached
};

struct ForwardContext {
  bool training = false;
  std::mt19937_64* rng = nullptr;  // dropout draws; required when training
  std::vector<AttentionRecord>* recorder = nullptr;
  std::optional<double> q;       // overrides config.q
  std::optional<double> gate_c;  // overrides config.gate_c
  // Test hook: when it returns a tensor, that [h, n, n] attention is used for
  // the vote of the given selection layer instead of the layer's own weights.
  std::function<std::optional<Tensor>(std::size_t selection_index)> vote_attention;
};

// One entry per selection layer.
struct SelectionTraceEntry {
  std::size_t layer = 0;            // encoder layer index
  Tensor averaged;                  // [n, n] head-averaged attention
  selection::SelectionDecision decision;
  std::vector<std::uint8_t> alive_before;
  std::vector<std::uint8_t> alive_after;
  double alive_ratio = 1.0;         // after this layer
};

struct EncoderOutput {
  Tensor states;         // [n, d], every position (dead rows are stale)
  SegmentLayout layout;  // final alive flags
  std::vector<SelectionTraceEntry> trace;

  // Rows of the alive tokens only: [layout.m(), d].
  Tensor representations() const;
};

// sqrt(d) * E_w + E_p + E_s.
Tensor embed(const ModelState& state, std::span<const TokenId> ids, const SegmentLayout& layout,
             const ForwardContext& ctx);

// Pre-norm block: x + MHA(LN(x)) then x + FFN(LN(x)); dead tokens are masked
// out as keys.
Tensor unified_layer(const ModelState& state, std::size_t layer, const Tensor& x,
                     const SegmentLayout& layout, const ForwardContext& ctx);

struct SelectionLayerOutput {
  Tensor states;
  SegmentLayout layout;
  SelectionTraceEntry trace;
};

// Runs the unified computation over the alive tokens, then votes with the
// layer's own head-averaged attention and marks rejected context tokens dead.
SelectionLayerOutput selection_layer(const ModelState& state, std::size_t layer,
                                     std::size_t selection_index, const Tensor& x,
                                     const SegmentLayout& layout, double q,
                                     const ForwardContext& ctx);

// N1 unified layers, N2 selection layers, final layer norm.
EncoderOutput encode(const ModelState& state, std::span<const TokenId> ids,
                     const SegmentLayout& layout, const ForwardContext& ctx);

// Logits [prefix, vocab] from the standard decoder over one encoder output.
Tensor decode_mono(const ModelState& state, std::span<const TokenId> prefix,
                   const EncoderOutput& enc, const ForwardContext& ctx);

// gamma = c * sigmoid(z_s W_s + z_t U_t + b);  z = (1 - gamma) z_s + gamma z_t.
struct GateOutput {
  Tensor fused;
  Tensor gamma;  // [n, 1]
};
GateOutput gate_fuse(const Tensor& z_s, const Tensor& z_t, const Tensor& w_s, const Tensor& u_t,
                     const Tensor& b, double c);

// Logits from the dual cross-attention decoder: one attention over the source
// concatenation, one over the target-context concatenation, fused per layer
// by the gate.
Tensor decode_bi(const ModelState& state, std::span<const TokenId> prefix,
                 const EncoderOutput& enc_src, const EncoderOutput& enc_tgt,
                 const ForwardContext& ctx);

}  // namespace ctxmt::model
