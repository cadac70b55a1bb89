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

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>

#include "ctxmt/error.hpp"
#include "ctxmt/gradcheck.hpp"
#include "ctxmt/model.hpp"
#include "ctxmt/ops.hpp"
#include "doctest.h"
#include "model_fixtures.hpp"
#include "selection_fixtures.hpp"

using namespace ctxmt;
using namespace ctxmt::model;
using selection::Segment;

namespace {

struct BiInputs {
  testing::EncoderInput src;
  testing::EncoderInput tgt;
  std::vector<TokenId> prefix;
  std::vector<TokenId> labels;
};

BiInputs bi_inputs(std::mt19937_64& rng, std::size_t vocab) {
  BiInputs in;
  in.src = testing::random_input(3, {4, 3}, Segment::kSourceContext, vocab, rng);
  in.tgt = testing::random_input(3, {3, 2}, Segment::kTargetContext, vocab, rng);
  std::copy(in.src.ids.begin(), in.src.ids.begin() + 3, in.tgt.ids.begin());
  in.labels = testing::random_tokens(4, vocab, rng);
  in.prefix = {1};
  in.prefix.insert(in.prefix.end(), in.labels.begin(), in.labels.end() - 1);
  return in;
}

}  // namespace

TEST_CASE("every parameter matches central differences") {
  std::mt19937_64 rng(7);
  const ModelConfig cfg = testing::tiny_config();
  ModelState state = ModelState::initialize(cfg, 3);
  const BiInputs in = bi_inputs(rng, cfg.vocab_size);
  ForwardContext ctx;

  auto mono = [&] {
    auto enc = encode(state, in.src.ids, in.src.layout, ctx);
    return ops::cross_entropy_smoothed(decode_mono(state, in.prefix, enc, ctx), in.labels, 0.1, 0);
  };
  auto bi = [&] {
    auto es = encode(state, in.src.ids, in.src.layout, ctx);
    auto et = encode(state, in.tgt.ids, in.tgt.layout, ctx);
    return ops::cross_entropy_smoothed(decode_bi(state, in.prefix, es, et, ctx), in.labels, 0.1, 0);
  };

  SUBCASE("mono") {
    NamedTensors params;
    for (const auto& [name, t] : state.parameters())
      if (name.find("tgt_attn") == std::string::npos && name.find("gate") == std::string::npos)
        params.emplace(name, t);
    auto report = finite_diff_check(mono, params);
    INFO(report.worst_parameter << "[" << report.worst_index << "]");
    CHECK(report.max_relative_error < 1e-4);
  }
  SUBCASE("bi, gate included") {
    auto report = finite_diff_check(bi, state.parameters());
    INFO(report.worst_parameter << "[" << report.worst_index << "]");
    CHECK(report.max_relative_error < 1e-4);
    GradTape tape;
    Tensor loss = bi();
    auto grads = backward(tape, loss, state.parameters());
    for (const char* name : {"dec.0.gate.w_s", "dec.0.gate.u_t", "dec.0.gate.b"}) {
      double norm = 0.0;
      for (double g : grads.at(name).data()) norm += g * g;
      CHECK(norm > 0.0);
    }
  }
}

TEST_CASE("q = 0 turns selection layers into unified layers") {
  std::mt19937_64 rng(11);
  ModelConfig cfg = testing::tiny_config();
  cfg.n_selection = 3;
  cfg.decoder_layers = 1;
  ModelState state = ModelState::initialize(cfg, 5);
  auto in = testing::random_input(3, {4, 5}, Segment::kSourceContext, cfg.vocab_size, rng);
  ForwardContext ctx;
  ctx.q = 0.0;
  auto enc = encode(state, in.ids, in.layout, ctx);

  Tensor x = embed(state, in.ids, in.layout, ctx);
  for (std::size_t l = 0; l < cfg.encoder_layers(); ++l) x = unified_layer(state, l, x, in.layout, ctx);
  x = ops::layer_norm(x, state.at("enc.ln_final.gain"), state.at("enc.ln_final.bias"));
  CHECK(testing::bit_equal(enc.states, x));
  for (const auto& entry : enc.trace) CHECK(entry.alive_ratio == 1.0);
  CHECK(enc.layout.alive == in.layout.alive);
}

TEST_CASE("m = p: context that is dead from the start changes nothing") {
  std::mt19937_64 rng(12);
  ModelConfig cfg = testing::tiny_config();
  cfg.n_selection = 2;
  ModelState state = ModelState::initialize(cfg, 6);
  ForwardContext ctx;
  auto full = testing::random_input(4, {5}, Segment::kSourceContext, cfg.vocab_size, rng);
  testing::EncoderInput bare;
  bare.layout = selection::make_layout(4, {});
  bare.ids.assign(full.ids.begin(), full.ids.begin() + 4);
  selection::mark_padding(full.layout, 4);

  auto a = encode(state, bare.ids, bare.layout, ctx);
  auto b = encode(state, full.ids, full.layout, ctx);
  CHECK(testing::bit_equal(a.representations(), b.representations()));
  for (const auto& entry : b.trace) CHECK(entry.alive_ratio == 1.0);

  SUBCASE("dead token ids do not leak") {
    auto changed = full;
    for (std::size_t i = 4; i < changed.ids.size(); ++i) changed.ids[i] = 5;
    auto c = encode(state, changed.ids, changed.layout, ctx);
    CHECK(testing::bit_equal(b.representations(), c.representations()));
    std::vector<TokenId> prefix = {1, 7, 8};
    CHECK(testing::bit_equal(decode_mono(state, prefix, a, ctx), decode_mono(state, prefix, c, ctx)));
  }
}

TEST_CASE("c = 0 makes the dual decoder equal the standard one") {
  std::mt19937_64 rng(13);
  const ModelConfig cfg = testing::tiny_config();
  ModelState state = ModelState::initialize(cfg, 8);
  // non-trivial gate parameters
  for (const char* name : {"dec.0.gate.w_s", "dec.0.gate.u_t", "dec.0.gate.b"}) {
    auto d = state.at(name).mutable_data();
    std::normal_distribution<double> n(0.0, 1.0);
    for (double& v : d) v = n(rng);
  }
  const BiInputs in = bi_inputs(rng, cfg.vocab_size);
  ForwardContext ctx;
  auto es = encode(state, in.src.ids, in.src.layout, ctx);
  auto et = encode(state, in.tgt.ids, in.tgt.layout, ctx);
  ctx.gate_c = 0.0;
  CHECK(testing::bit_equal(decode_bi(state, in.prefix, es, et, ctx),
                           decode_mono(state, in.prefix, es, ctx)));
  ctx.gate_c = 1.0;
  CHECK_FALSE(testing::bit_equal(decode_bi(state, in.prefix, es, et, ctx),
                                 decode_mono(state, in.prefix, es, ctx)));
}

TEST_CASE("gate_fuse") {
  Tensor zs = Tensor::from_data({2, 2}, {1.0, 2.0, 3.0, 4.0});
  Tensor zt = Tensor::from_data({2, 2}, {-1.0, 0.0, 5.0, 1.0});
  Tensor w = Tensor::from_data({2, 1}, {0.5, -0.25});
  Tensor u = Tensor::from_data({2, 1}, {0.1, 0.2});
  Tensor b = Tensor::from_data({1}, {0.3});
  auto out = gate_fuse(zs, zt, w, u, b, 0.5);
  for (std::size_t i = 0; i < 2; ++i) {
    const double pre = zs.at(i, 0) * 0.5 - zs.at(i, 1) * 0.25 + zt.at(i, 0) * 0.1 +
                       zt.at(i, 1) * 0.2 + 0.3;
    const double g = 0.5 / (1.0 + std::exp(-pre));
    CHECK(out.gamma.at(i, 0) == doctest::Approx(g).epsilon(1e-14));
    for (std::size_t j = 0; j < 2; ++j)
      CHECK(out.fused.at(i, j) == doctest::Approx((1 - g) * zs.at(i, j) + g * zt.at(i, j)).epsilon(1e-14));
  }
  CHECK_THROWS_AS(gate_fuse(zs, zt, w, u, b, 1.5), UsageError);
  CHECK_THROWS_AS(gate_fuse(zs, Tensor::zeros({3, 2}), w, u, b, 0.5), DimensionError);
}

TEST_CASE("injected vote attention reproduces the hand instance") {
  ModelConfig cfg = testing::tiny_config();
  cfg.heads = 1;
  ModelState state = ModelState::initialize(cfg, 9);
  auto [attention, layout] = testing::hand_instance();
  std::vector<TokenId> ids = {5, 6, 7, 8, 9};
  ForwardContext ctx;
  ctx.q = 0.5;
  ctx.vote_attention = [&](std::size_t) { return std::optional<Tensor>(attention); };
  auto enc = encode(state, ids, layout, ctx);
  CHECK(enc.layout.alive == std::vector<std::uint8_t>{1, 1, 0, 1, 0});
  REQUIRE(enc.trace.size() == 1);
  CHECK(enc.trace[0].decision.scores == std::vector<int>{0, 2, 0});
  CHECK(enc.trace[0].alive_ratio == doctest::Approx(1.0 / 3.0));
  CHECK(enc.representations().rows() == 3);
}

TEST_CASE("selection shrinks monotonically and keeps every current token") {
  std::mt19937_64 rng(21);
  ModelConfig cfg = testing::tiny_config();
  cfg.n_selection = 5;
  cfg.q = 0.5;
  for (int trial = 0; trial < 20; ++trial) {
    ModelState state = ModelState::initialize(cfg, 100 + trial);
    std::uniform_int_distribution<std::size_t> len(1, 6);
    auto in = testing::random_input(len(rng), {len(rng), len(rng)}, Segment::kSourceContext,
                                    cfg.vocab_size, rng);
    auto enc = encode(state, in.ids, in.layout, ForwardContext{});
    double prev = 1.0;
    for (const auto& entry : enc.trace) {
      CHECK(entry.alive_ratio <= prev);
      prev = entry.alive_ratio;
      for (std::size_t i = 0; i < entry.alive_after.size(); ++i) {
        CHECK(entry.alive_after[i] <= entry.alive_before[i]);
        if (i < in.layout.p) CHECK(entry.alive_after[i] == 1);
      }
    }
  }
}

TEST_CASE("attention recorder and dropout") {
  std::mt19937_64 rng(31);
  ModelConfig cfg = testing::tiny_config();
  cfg.dropout = 0.3;
  ModelState state = ModelState::initialize(cfg, 2);
  const BiInputs in = bi_inputs(rng, cfg.vocab_size);
  std::vector<AttentionRecord> records;
  ForwardContext ctx;
  ctx.recorder = &records;
  auto es = encode(state, in.src.ids, in.src.layout, ctx);
  auto et = encode(state, in.tgt.ids, in.tgt.layout, ctx);
  Tensor eval = decode_bi(state, in.prefix, es, et, ctx);
  std::vector<std::string> sites;
  for (const auto& r : records) sites.push_back(r.site);
  CHECK(sites == std::vector<std::string>{"enc.0", "enc.1", "enc.0", "enc.1", "dec.0.self",
                                          "dec.0.src", "dec.0.tgt", "dec.0.gate"});
  CHECK(records[4].probs.shape() == Shape{2, 4, 4});
  CHECK(records[4].probs[1] == 0.0);  // causal

  ForwardContext train;
  train.training = true;
  CHECK_THROWS_AS(encode(state, in.src.ids, in.src.layout, train), UsageError);
  std::mt19937_64 drop(1);
  train.rng = &drop;
  auto es2 = encode(state, in.src.ids, in.src.layout, train);
  CHECK_FALSE(testing::bit_equal(es.states, es2.states));
}

TEST_CASE("input validation") {
  ModelState state = ModelState::initialize(testing::tiny_config(), 1);
  ForwardContext ctx;
  auto layout = selection::make_layout(2, {});
  std::vector<TokenId> bad = {5, 99};
  CHECK_THROWS_AS(encode(state, bad, layout, ctx), UsageError);
  std::vector<TokenId> short_ids = {5};
  CHECK_THROWS_AS(encode(state, short_ids, layout, ctx), DimensionError);
  std::vector<TokenId> ok = {5, 6};
  auto enc = encode(state, ok, layout, ctx);
  std::vector<TokenId> empty;
  CHECK_THROWS_AS(decode_mono(state, empty, enc, ctx), UsageError);
}

TEST_CASE("checkpoint round trip is bit-exact") {
  const ModelConfig cfg = testing::tiny_config();
  ModelState state = ModelState::initialize(cfg, 4);
  Checkpoint ck;
  ck.meta["model"] = to_json(cfg);
  ck.parameters = state.parameters();
  ck.optimizer["adam.m.embed.word"] = Tensor::full({12, 16}, 1.0 / 3.0);
  const auto path = (std::filesystem::temp_directory_path() / "ctxmt_test_ckpt.bin").string();
  save_checkpoint(path, ck);
  Checkpoint back = load_checkpoint(path);
  CHECK(back.meta == ck.meta);
  REQUIRE(back.parameters.size() == ck.parameters.size());
  for (const auto& [name, t] : ck.parameters) CHECK(testing::bit_equal(t, back.parameters.at(name)));
  CHECK(testing::bit_equal(ck.optimizer.at("adam.m.embed.word"), back.optimizer.at("adam.m.embed.word")));
  auto restored = ModelState::from_tensors(cfg, back.parameters);
  CHECK(testing::bit_equal(restored.at("dec.0.gate.w_s"), state.at("dec.0.gate.w_s")));

  ModelConfig wider = cfg;
  wider.d_model = 32;
  CHECK_THROWS_AS(ModelState::from_tensors(wider, back.parameters), DataError);
  auto missing = back.parameters;
  missing.erase("embed.word");
  CHECK_THROWS_AS(ModelState::from_tensors(cfg, missing), DataError);

  {
    std::FILE* f = std::fopen(path.c_str(), "r+b");
    REQUIRE(f != nullptr);
    std::fputs("NOTACKPT", f);
    std::fclose(f);
  }
  CHECK_THROWS_AS(load_checkpoint(path), DataError);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_checkpoint(path), DataError);
}

TEST_CASE("initialization is seeded") {
  const ModelConfig cfg = testing::tiny_config();
  auto a = ModelState::initialize(cfg, 1), b = ModelState::initialize(cfg, 1),
       c = ModelState::initialize(cfg, 2);
  CHECK(testing::bit_equal(a.at("enc.0.attn.wq"), b.at("enc.0.attn.wq")));
  CHECK_FALSE(testing::bit_equal(a.at("enc.0.attn.wq"), c.at("enc.0.attn.wq")));
  CHECK(a.at("enc.0.ln_attn.gain")[0] == 1.0);
  CHECK(ModelState::parameter_shapes(cfg).at("dec.0.gate.w_s") == Shape{16, 1});
}
