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

#include "ctxmt/model.hpp"

#include <cmath>

#include "ctxmt/error.hpp"
#include "ctxmt/ops.hpp"

namespace ctxmt::model {

namespace {

struct AttentionOutput {
  Tensor output;
  Tensor probs;  // [h, nq, nk]
};

Tensor maybe_dropout(const Tensor& x, const ModelState& state, const ForwardContext& ctx) {
  const double rate = state.config().dropout;
  if (!ctx.training || rate <= 0.0) return x;
  if (ctx.rng == nullptr) throw UsageError("training forward pass needs a dropout RNG");
  return ops::dropout(x, rate, *ctx.rng);
}

void record(const ForwardContext& ctx, std::string site, const Tensor& probs) {
  if (ctx.recorder) ctx.recorder->push_back({std::move(site), probs});
}

AttentionOutput multi_head_attention(const ModelState& state, const std::string& prefix,
                                     const Tensor& queries, const Tensor& keys,
                                     std::span<const std::uint8_t> allowed) {
  const std::size_t d = state.config().d_model;
  const std::size_t h = state.config().heads;
  const std::size_t dk = d / h;
  const std::size_t nq = queries.rows(), nk = keys.rows();
  Tensor q = ops::linear(queries, state.at(prefix + ".wq"), state.at(prefix + ".bq"));
  Tensor k = ops::linear(keys, state.at(prefix + ".wk"), state.at(prefix + ".bk"));
  Tensor v = ops::linear(keys, state.at(prefix + ".wv"), state.at(prefix + ".bv"));
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
  std::vector<Tensor> heads;
  heads.reserve(h);
  std::vector<double> probs(h * nq * nk);
  for (std::size_t head = 0; head < h; ++head) {
    Tensor qh = ops::slice_cols(q, head * dk, dk);
    Tensor kh = ops::slice_cols(k, head * dk, dk);
    Tensor vh = ops::slice_cols(v, head * dk, dk);
    Tensor scores = ops::affine(ops::matmul_bt(qh, kh), scale, 0.0);
    Tensor weights = ops::masked_softmax_rows(scores, allowed);
    std::copy(weights.data().begin(), weights.data().end(), probs.begin() + head * nq * nk);
    heads.push_back(ops::matmul(weights, vh));
  }
  Tensor merged = h == 1 ? heads[0] : ops::concat_cols(heads);
  return {ops::linear(merged, state.at(prefix + ".wo"), state.at(prefix + ".bo")),
          Tensor::from_data({h, nq, nk}, std::move(probs))};
}

Tensor layer_norm(const ModelState& state, const std::string& prefix, const Tensor& x) {
  return ops::layer_norm(x, state.at(prefix + ".gain"), state.at(prefix + ".bias"));
}

Tensor feed_forward(const ModelState& state, const std::string& prefix, const Tensor& x) {
  Tensor hidden = ops::gelu(ops::linear(x, state.at(prefix + ".w1"), state.at(prefix + ".b1")));
  return ops::linear(hidden, state.at(prefix + ".w2"), state.at(prefix + ".b2"));
}

std::vector<std::uint8_t> key_mask(std::size_t rows, std::span<const std::uint8_t> alive) {
  std::vector<std::uint8_t> allowed(rows * alive.size());
  for (std::size_t i = 0; i < rows; ++i)
    std::copy(alive.begin(), alive.end(), allowed.begin() + i * alive.size());
  return allowed;
}

struct LayerResult {
  Tensor states;
  Tensor probs;
};

LayerResult encoder_block(const ModelState& state, std::size_t layer, const Tensor& x,
                          const SegmentLayout& layout, const ForwardContext& ctx) {
  if (layer >= state.config().encoder_layers()) {
    throw UsageError("encoder layer " + std::to_string(layer) + " does not exist");
  }
  if (x.rows() != layout.size()) {
    throw DimensionError("encoder layer input has " + std::to_string(x.rows()) +
                         " rows for a layout of " + std::to_string(layout.size()));
  }
  const std::string p = "enc." + std::to_string(layer);
  const auto allowed = key_mask(layout.size(), layout.alive);
  Tensor h = layer_norm(state, p + ".ln_attn", x);
  auto attn = multi_head_attention(state, p + ".attn", h, h, allowed);
  record(ctx, p, attn.probs);
  Tensor x1 = ops::add(x, maybe_dropout(attn.output, state, ctx));
  Tensor f = feed_forward(state, p + ".ffn", layer_norm(state, p + ".ln_ffn", x1));
  return {ops::add(x1, maybe_dropout(f, state, ctx)), attn.probs};
}

void check_ids(const ModelState& state, std::span<const TokenId> ids) {
  for (TokenId id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= state.config().vocab_size) {
      throw UsageError("token id " + std::to_string(id) + " outside vocabulary of size " +
                       std::to_string(state.config().vocab_size));
    }
  }
}

std::vector<std::size_t> as_rows(std::span<const TokenId> ids) {
  return std::vector<std::size_t>(ids.begin(), ids.end());
}

Tensor decoder(const ModelState& state, std::span<const TokenId> prefix,
               const EncoderOutput& enc_src, const EncoderOutput* enc_tgt,
               const ForwardContext& ctx) {
  const auto& cfg = state.config();
  const std::size_t t = prefix.size();
  if (t == 0) throw UsageError("decoder prefix is empty");
  if (t > cfg.max_positions) {
    throw UsageError("decoder prefix of length " + std::to_string(t) + " exceeds max_positions " +
                     std::to_string(cfg.max_positions));
  }
  check_ids(state, prefix);
  std::vector<std::size_t> positions(t);
  for (std::size_t i = 0; i < t; ++i) positions[i] = i;
  Tensor x = ops::add(
      ops::affine(ops::gather_rows(state.at("embed.word"), as_rows(prefix)),
                  std::sqrt(static_cast<double>(cfg.d_model)), 0.0),
      ops::gather_rows(state.at("embed.position"), positions));
  x = maybe_dropout(x, state, ctx);

  std::vector<std::uint8_t> causal(t * t, 0);
  for (std::size_t i = 0; i < t; ++i)
    for (std::size_t j = 0; j <= i; ++j) causal[i * t + j] = 1;
  const auto src_mask = key_mask(t, enc_src.layout.alive);
  std::vector<std::uint8_t> tgt_mask;
  if (enc_tgt) tgt_mask = key_mask(t, enc_tgt->layout.alive);
  const double c = ctx.gate_c.value_or(cfg.gate_c);

  for (std::size_t l = 0; l < cfg.decoder_layers; ++l) {
    const std::string p = "dec." + std::to_string(l);
    Tensor h = layer_norm(state, p + ".ln_self", x);
    auto self = multi_head_attention(state, p + ".self_attn", h, h, causal);
    record(ctx, p + ".self", self.probs);
    x = ops::add(x, maybe_dropout(self.output, state, ctx));

    h = layer_norm(state, p + ".ln_cross", x);
    auto src = multi_head_attention(state, p + ".src_attn", h, enc_src.states, src_mask);
    record(ctx, p + ".src", src.probs);
    Tensor z = src.output;
    if (enc_tgt) {
      auto tgt = multi_head_attention(state, p + ".tgt_attn", h, enc_tgt->states, tgt_mask);
      record(ctx, p + ".tgt", tgt.probs);
      auto gate = gate_fuse(src.output, tgt.output, state.at(p + ".gate.w_s"),
                            state.at(p + ".gate.u_t"), state.at(p + ".gate.b"), c);
      if (ctx.recorder) {
        record(ctx, p + ".gate",
               Tensor::from_data({1, t, 1}, std::vector<double>(gate.gamma.data().begin(),
                                                                gate.gamma.data().end())));
      }
      z = gate.fused;
    }
    x = ops::add(x, maybe_dropout(z, state, ctx));

    h = layer_norm(state, p + ".ln_ffn", x);
    x = ops::add(x, maybe_dropout(feed_forward(state, p + ".ffn", h), state, ctx));
  }
  Tensor out = layer_norm(state, "dec.ln_final", x);
  return ops::matmul_bt(out, state.at("embed.word"));
}

}  // namespace

Tensor EncoderOutput::representations() const {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < layout.size(); ++i)
    if (layout.alive[i]) rows.push_back(i);
  return ops::gather_rows(states, rows);
}

Tensor embed(const ModelState& state, std::span<const TokenId> ids, const SegmentLayout& layout,
             const ForwardContext& ctx) {
  const auto& cfg = state.config();
  if (ids.size() != layout.size()) {
    throw DimensionError("embed: " + std::to_string(ids.size()) + " ids for a layout of " +
                         std::to_string(layout.size()) + " tokens");
  }
  check_ids(state, ids);
  std::vector<std::size_t> segments(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (layout.positions[i] >= cfg.max_positions) {
      throw UsageError("position " + std::to_string(layout.positions[i]) +
                       " exceeds max_positions " + std::to_string(cfg.max_positions));
    }
    segments[i] = static_cast<std::size_t>(layout.segment_ids[i]);
  }
  Tensor words = ops::affine(ops::gather_rows(state.at("embed.word"), as_rows(ids)),
                             std::sqrt(static_cast<double>(cfg.d_model)), 0.0);
  Tensor x = ops::add(ops::add(words, ops::gather_rows(state.at("embed.position"), layout.positions)),
                      ops::gather_rows(state.at("embed.segment"), segments));
  return maybe_dropout(x, state, ctx);
}

Tensor unified_layer(const ModelState& state, std::size_t layer, const Tensor& x,
                     const SegmentLayout& layout, const ForwardContext& ctx) {
  return encoder_block(state, layer, x, layout, ctx).states;
}

SelectionLayerOutput selection_layer(const ModelState& state, std::size_t layer,
                                     std::size_t selection_index, const Tensor& x,
                                     const SegmentLayout& layout, double q,
                                     const ForwardContext& ctx) {
  auto block = encoder_block(state, layer, x, layout, ctx);
  Tensor votes = block.probs;
  if (ctx.vote_attention) {
    if (auto injected = ctx.vote_attention(selection_index)) votes = *injected;
  }
  auto decision = selection::select_context(votes, layout, q);
  SegmentLayout next = selection::apply_decision(layout, decision);
  SelectionTraceEntry entry;
  entry.layer = layer;
  entry.averaged = selection::average_heads(votes);
  entry.alive_before = layout.alive;
  entry.alive_after = next.alive;
  entry.alive_ratio = next.alive_ratio();
  entry.decision = std::move(decision);
  return {block.states, std::move(next), std::move(entry)};
}

EncoderOutput encode(const ModelState& state, std::span<const TokenId> ids,
                     const SegmentLayout& layout, const ForwardContext& ctx) {
  layout.validate();
  const auto& cfg = state.config();
  const double q = ctx.q.value_or(cfg.q);
  Tensor x = embed(state, ids, layout, ctx);
  EncoderOutput out;
  out.layout = layout;
  for (std::size_t l = 0; l < cfg.n_unified; ++l) x = unified_layer(state, l, x, out.layout, ctx);
  for (std::size_t s = 0; s < cfg.n_selection; ++s) {
    auto sel = selection_layer(state, cfg.n_unified + s, s, x, out.layout, q, ctx);
    x = sel.states;
    out.layout = std::move(sel.layout);
    out.trace.push_back(std::move(sel.trace));
  }
  out.states = layer_norm(state, "enc.ln_final", x);
  return out;
}

Tensor decode_mono(const ModelState& state, std::span<const TokenId> prefix,
                   const EncoderOutput& enc, const ForwardContext& ctx) {
  return decoder(state, prefix, enc, nullptr, ctx);
}

GateOutput gate_fuse(const Tensor& z_s, const Tensor& z_t, const Tensor& w_s, const Tensor& u_t,
                     const Tensor& b, double c) {
  if (z_s.shape() != z_t.shape()) {
    throw DimensionError("gate_fuse: shape mismatch " + shape_string(z_s.shape()) + " vs " +
                         shape_string(z_t.shape()));
  }
  if (!(c >= 0.0 && c <= 1.0)) throw UsageError("gate range c must lie in [0, 1]");
  Tensor pre = ops::add_row(ops::add(ops::matmul(z_s, w_s), ops::matmul(z_t, u_t)), b);
  Tensor gamma = ops::affine(ops::sigmoid(pre), c, 0.0);
  Tensor keep = ops::affine(gamma, -1.0, 1.0);
  Tensor fused = ops::add(ops::mul_col(z_s, keep), ops::mul_col(z_t, gamma));
  return {fused, gamma};
}

Tensor decode_bi(const ModelState& state, std::span<const TokenId> prefix,
                 const EncoderOutput& enc_src, const EncoderOutput& enc_tgt,
                 const ForwardContext& ctx) {
  return decoder(state, prefix, enc_src, &enc_tgt, ctx);
}

}  // namespace ctxmt::model
