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

#include <random>
#include <vector>

#include "ctxmt/config.hpp"
#include "ctxmt/model.hpp"
#include "ctxmt/selection.hpp"

namespace ctxmt::testing {

// Width 16, one unified and one selection layer, one decoder layer.
inline ModelConfig tiny_config() {
  ModelConfig c;
  c.vocab_size = 12;
  c.d_model = 16;
  c.d_ffn = 32;
  c.heads = 2;
  c.n_unified = 1;
  c.n_selection = 1;
  c.decoder_layers = 1;
  c.dropout = 0.0;
  c.max_positions = 16;
  return c;
}

struct EncoderInput {
  std::vector<TokenId> ids;
  selection::SegmentLayout layout;
};

// p current tokens followed by context sentences of the given lengths.
inline EncoderInput random_input(std::size_t p, const std::vector<std::size_t>& context,
                                 selection::Segment segment, std::size_t vocab,
                                 std::mt19937_64& rng) {
  std::vector<selection::SentenceSpan> spans;
  for (std::size_t len : context) spans.push_back({segment, len});
  EncoderInput in;
  in.layout = selection::make_layout(p, spans);
  std::uniform_int_distribution<TokenId> tok(5, static_cast<TokenId>(vocab) - 1);
  for (std::size_t i = 0; i < in.layout.size(); ++i) in.ids.push_back(tok(rng));
  return in;
}

inline std::vector<TokenId> random_tokens(std::size_t n, std::size_t vocab, std::mt19937_64& rng) {
  std::uniform_int_distribution<TokenId> tok(5, static_cast<TokenId>(vocab) - 1);
  std::vector<TokenId> out(n);
  for (auto& t : out) t = tok(rng);
  return out;
}

inline bool bit_equal(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() && std::equal(a.data().begin(), a.data().end(), b.data().begin());
}

}  // namespace ctxmt::testing
