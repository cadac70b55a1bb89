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

#include "ctxmt/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>

#include "ctxmt/error.hpp"
#include "ctxmt/inference.hpp"
#include "ctxmt/ops.hpp"

namespace ctxmt::training {

using data::Vocabulary;
using model::EncoderOutput;
using model::ForwardContext;

namespace {

std::size_t trimmed_width(std::span<const TokenId> row) {
  std::size_t n = row.size();
  while (n > 0 && row[n - 1] == Vocabulary::kPad) --n;
  return n;
}

selection::SegmentLayout trim(const selection::SegmentLayout& layout, std::size_t n) {
  auto out = layout;
  out.segment_ids.resize(n);
  out.positions.resize(n);
  out.alive.resize(n);
  out.original_positions.resize(n);
  return out;
}

struct RowInputs {
  std::vector<TokenId> src_ids;
  selection::SegmentLayout src_layout;
  std::vector<TokenId> tgt_ids;
  selection::SegmentLayout tgt_layout;
  std::vector<TokenId> prefix;
  std::vector<TokenId> labels;
};

RowInputs row_inputs(const data::Batch& batch, std::size_t r, bool with_tgt) {
  RowInputs in;
  auto src = batch.src_row(r);
  const std::size_t n = trimmed_width(src);
  in.src_ids.assign(src.begin(), src.begin() + static_cast<std::ptrdiff_t>(n));
  in.src_layout = trim(batch.src_layouts[r], n);
  if (with_tgt) {
    auto tgt = batch.tgt_ctx_row(r);
    const std::size_t m = trimmed_width(tgt);
    in.tgt_ids.assign(tgt.begin(), tgt.begin() + static_cast<std::ptrdiff_t>(m));
    in.tgt_layout = trim(batch.tgt_ctx_layouts[r], m);
  }
  auto labels = batch.label_row(r);
  const std::size_t t = trimmed_width(labels);
  in.labels.assign(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(t));
  auto dec = batch.decoder_row(r);
  in.prefix.assign(dec.begin(), dec.begin() + static_cast<std::ptrdiff_t>(t));
  return in;
}

struct RatioPool {
  std::vector<std::size_t> alive, total;

  void add(const EncoderOutput& enc, const selection::SegmentLayout& initial) {
    if (alive.size() < enc.trace.size()) {
      alive.resize(enc.trace.size(), 0);
      total.resize(enc.trace.size(), 0);
    }
    for (std::size_t l = 0; l < enc.trace.size(); ++l) {
      const auto& after = enc.trace[l].alive_after;
      for (std::size_t i = initial.p; i < after.size(); ++i) alive[l] += after[i];
      total[l] += initial.context_total;
    }
  }
  std::vector<double> ratios() const {
    std::vector<double> out;
    for (std::size_t l = 0; l < alive.size(); ++l)
      out.push_back(total[l] == 0 ? 1.0 : static_cast<double>(alive[l]) / static_cast<double>(total[l]));
    return out;
  }
};

struct Forward {
  std::optional<Tensor> loss_m, loss_b;
  std::size_t correct = 0, counted = 0;
  RatioPool src, tgt;
};

void count_hits(const Tensor& logits, std::span<const TokenId> labels, Forward& f) {
  const std::size_t v = logits.cols();
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == Vocabulary::kPad) continue;
    const auto row = logits.data().subspan(i * v, v);
    const auto best = std::max_element(row.begin(), row.end()) - row.begin();
    f.correct += best == labels[i] ? 1 : 0;
    ++f.counted;
  }
}

// `hits` selects which logits feed the accuracy count: 0 mono, 1 bi.
Forward run(const ModelState& state, const data::Batch& batch, bool mono, bool bi, int hits,
            const ForwardContext& ctx) {
  if (batch.size() == 0) throw UsageError("empty batch");
  if (batch.labels.empty() || batch.target_tokens() == 0) throw UsageError("batch has no targets");
  if (bi && !batch.has_tgt_context) throw UsageError("bilingual loss needs target context in the batch");
  const double smoothing = state.config().label_smoothing;
  std::vector<Tensor> mono_logits, bi_logits;
  std::vector<TokenId> labels;
  Forward f;
  for (std::size_t r = 0; r < batch.size(); ++r) {
    const RowInputs in = row_inputs(batch, r, bi);
    const auto enc_src = model::encode(state, in.src_ids, in.src_layout, ctx);
    f.src.add(enc_src, in.src_layout);
    if (mono) {
      mono_logits.push_back(model::decode_mono(state, in.prefix, enc_src, ctx));
      if (hits == 0) count_hits(mono_logits.back(), in.labels, f);
    }
    if (bi) {
      const auto enc_tgt = model::encode(state, in.tgt_ids, in.tgt_layout, ctx);
      f.tgt.add(enc_tgt, in.tgt_layout);
      bi_logits.push_back(model::decode_bi(state, in.prefix, enc_src, enc_tgt, ctx));
      if (hits == 1) count_hits(bi_logits.back(), in.labels, f);
    }
    labels.insert(labels.end(), in.labels.begin(), in.labels.end());
  }
  if (mono) {
    f.loss_m = ops::cross_entropy_smoothed(ops::concat_rows(mono_logits), labels, smoothing,
                                           Vocabulary::kPad);
  }
  if (bi) {
    f.loss_b = ops::cross_entropy_smoothed(ops::concat_rows(bi_logits), labels, smoothing,
                                           Vocabulary::kPad);
  }
  return f;
}

Tensor mix(const Tensor& lm, const Tensor& lb, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw UsageError("alpha must lie in [0, 1]");
  const Tensor terms[] = {lm, lb};
  const double weights[] = {alpha, 1.0 - alpha};
  return ops::weighted_sum(terms, weights);
}

std::string checkpoint_path(const std::string& dir, std::size_t step) {
  char name[32];
  std::snprintf(name, sizeof(name), "step_%06zu.ckpt", step);
  return (std::filesystem::path(dir) / name).string();
}

std::mt19937_64 seeded(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(index),
                    static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

std::vector<std::size_t> epoch_order(std::uint64_t seed, std::size_t epoch, std::size_t n) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  auto rng = seeded(seed, 1, epoch);
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

// First-pass context-free translations of every training sentence, used as
// target context.
void refresh_target_context(const ModelBundle& bundle, const data::DocumentCorpus& corpus,
                            ContextWindow window, std::vector<data::ContextExample>& examples) {
  BeamConfig greedy;
  greedy.beam = 1;
  std::size_t base = 0;
  for (const auto& doc : corpus.documents) {
    const auto pass = inference::first_pass(bundle, doc, greedy);
    for (std::size_t k = 0; k < pass.size(); ++k) {
      std::vector<std::vector<TokenId>> ctx;
      const std::size_t first = k >= window.previous ? k - window.previous : 0;
      const std::size_t last = std::min(pass.size() - 1, k + window.next);
      for (std::size_t j = first; j <= last; ++j)
        if (j != k) ctx.push_back(pass[j]);
      examples[base + k] = data::with_target_context(std::move(examples[base + k]), std::move(ctx));
    }
    base += pass.size();
  }
}

bool finite(double x) { return std::isfinite(x); }

}  // namespace

Tensor loss_mono(const ModelState& state, const data::Batch& batch, const ForwardContext& ctx) {
  return *run(state, batch, true, false, 0, ctx).loss_m;
}

Tensor loss_bi(const ModelState& state, const data::Batch& batch, const ForwardContext& ctx) {
  return *run(state, batch, false, true, 1, ctx).loss_b;
}

Tensor loss_all(const ModelState& state, const data::Batch& batch, double alpha,
                const ForwardContext& ctx) {
  auto f = run(state, batch, true, true, 1, ctx);
  return mix(*f.loss_m, *f.loss_b, alpha);
}

BatchObjective batch_objective(const ModelState& state, const data::Batch& batch, TrainMode mode,
                               const ForwardContext& ctx) {
  const bool bi = mode == TrainMode::kBi;
  auto f = run(state, batch, true, bi, bi ? 1 : 0, ctx);
  BatchObjective out;
  out.loss_m = f.loss_m->item();
  if (bi) {
    out.loss_b = f.loss_b->item();
    out.loss = mix(*f.loss_m, *f.loss_b, state.config().alpha);
  } else {
    out.loss = *f.loss_m;
  }
  out.loss_all = out.loss.item();
  out.correct = f.correct;
  out.counted = f.counted;
  out.src_ratio = f.src.ratios();
  out.tgt_ratio = f.tgt.ratios();
  return out;
}

void Adam::step(NamedTensors& params, const GradientMap& grads, double lr, std::size_t step) {
  if (step == 0) throw UsageError("Adam steps are 1-based");
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(step));
  for (auto& [name, p] : params) {
    auto git = grads.find(name);
    if (git == grads.end()) continue;
    auto mit = m_.find(name);
    if (mit == m_.end()) {
      mit = m_.emplace(name, Tensor::zeros(p.shape())).first;
      v_.emplace(name, Tensor::zeros(p.shape()));
    }
    auto m = mit->second.mutable_data();
    auto v = v_.at(name).mutable_data();
    auto w = p.mutable_data();
    const auto g = git->second.data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = b1 * m[i] + (1.0 - b1) * g[i];
      v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
      w[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + config_.adam_epsilon);
    }
  }
}

NamedTensors Adam::slots() const {
  NamedTensors out;
  for (const auto& [name, t] : m_) out.emplace("adam.m." + name, t.clone());
  for (const auto& [name, t] : v_) out.emplace("adam.v." + name, t.clone());
  return out;
}

void Adam::load(const NamedTensors& slots, const NamedTensors& params) {
  m_.clear();
  v_.clear();
  for (const auto& [key, t] : slots) {
    const bool is_m = key.rfind("adam.m.", 0) == 0, is_v = key.rfind("adam.v.", 0) == 0;
    if (!is_m && !is_v) throw DataError("unknown optimizer slot " + key);
    const std::string name = key.substr(7);
    auto it = params.find(name);
    if (it == params.end() || it->second.shape() != t.shape()) {
      throw DataError("optimizer slot " + key + " does not match any parameter");
    }
    (is_m ? m_ : v_).emplace(name, t.clone());
  }
  if (m_.size() != v_.size()) throw DataError("optimizer slots are incomplete");
}

double clip_gradients(GradientMap& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& [_, g] : grads)
    for (double x : g.data()) sq += x * x;
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double scale = max_norm / norm;
    for (auto& [_, g] : grads)
      for (double& x : g.mutable_data()) x *= scale;
  }
  return norm;
}

nlohmann::json metrics_header(const ModelConfig& model, const TrainConfig& train, const DataConfig& data) {
  return {{"header", {{"format", "ctxmt-metrics"},
                      {"version", 1},
                      {"config", {{"model", to_json(model)}, {"train", to_json(train)}, {"data", to_json(data)}}}}}};
}

TrainResult train(const data::DocumentCorpus& corpus, const TrainRequest& request) {
  request.train.validate();
  request.data.validate();
  if (corpus.documents.empty() || corpus.sentence_count() == 0) throw DataError("training corpus is empty");
  if (!corpus.has_targets()) {
    throw DataError(std::string("training needs target sentences for every document") +
                    (request.train.mode == TrainMode::kBi ? " (bi mode reads target context from them)" : ""));
  }
  if (request.out_dir.empty()) throw UsageError("training needs an output directory");
  std::filesystem::create_directories(request.out_dir);

  ModelBundle bundle;
  Adam adam(request.train);
  std::size_t start = 0;
  if (request.resume) {
    const Checkpoint ck = load_checkpoint(*request.resume);
    bundle = bundle_from_checkpoint(ck);
    ModelConfig wanted = request.model;
    wanted.vocab_size = bundle.state.config().vocab_size;
    if (!(wanted == bundle.state.config()) || !(request.data == bundle.data)) {
      throw UsageError("resume: model or data config differs from checkpoint " + *request.resume);
    }
    adam.load(ck.optimizer, bundle.state.parameters());
    start = bundle.step;
  } else {
    bundle.data = request.data;
    bundle.tokenizer = data::Tokenizer::learn(corpus, request.data.bpe_merges);
    bundle.vocab = data::Vocabulary::build(corpus, bundle.tokenizer, request.data.max_vocab);
    ModelConfig model = request.model;
    model.vocab_size = bundle.vocab.size();
    model.validate();
    bundle.state = ModelState::initialize(model, request.train.seed);
  }
  bundle.train = request.train;
  const ModelConfig& cfg = bundle.state.config();
  const TrainConfig& tc = bundle.train;

  auto examples = data::build_examples(corpus, bundle.vocab, bundle.tokenizer, cfg.context_window);
  const bool model_context = tc.mode == TrainMode::kBi && tc.target_context == "model";
  auto batches = data::make_batches(examples, tc.max_tokens);
  const std::size_t per_epoch = batches.size();

  TrainResult result;
  result.metrics_path = (std::filesystem::path(request.out_dir) / "metrics.jsonl").string();
  std::deque<std::pair<std::size_t, std::size_t>> window;
  std::size_t window_correct = 0, window_counted = 0;
  auto push_window = [&](std::size_t correct, std::size_t counted) {
    window.emplace_back(correct, counted);
    window_correct += correct;
    window_counted += counted;
    if (window.size() > per_epoch) {
      window_correct -= window.front().first;
      window_counted -= window.front().second;
      window.pop_front();
    }
  };
  {
    std::vector<std::string> kept;
    if (start > 0) {
      std::ifstream old(result.metrics_path);
      for (std::string line; std::getline(old, line);) {
        auto j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.contains("step")) continue;
        if (j["step"].get<std::size_t>() > start) break;
        kept.push_back(line);
        push_window(j.value("correct", std::size_t{0}), j.value("tokens", std::size_t{0}));
      }
    }
    std::ofstream out(result.metrics_path, std::ios::trunc);
    if (!out) throw DataError("cannot write metrics log " + result.metrics_path);
    out << metrics_header(cfg, tc, bundle.data).dump() << '\n';
    for (const auto& line : kept) out << line << '\n';
  }
  std::ofstream metrics(result.metrics_path, std::ios::app);

  auto save = [&](const std::string& path) {
    save_checkpoint(path, make_checkpoint(bundle, adam.slots()));
  };

  std::vector<std::size_t> order;
  std::size_t order_epoch = static_cast<std::size_t>(-1);
  std::size_t step = start;
  while (step < tc.max_steps) {
    ++step;
    const std::size_t epoch = (step - 1) / per_epoch;
    if (epoch != order_epoch) {
      order = epoch_order(tc.seed, epoch, per_epoch);
      order_epoch = epoch;
      if (model_context) {
        refresh_target_context(bundle, corpus, cfg.context_window, examples);
        batches = data::make_batches(examples, tc.max_tokens);
      }
    }
    const auto& batch = batches[order[(step - 1) % per_epoch]];
    const double lr = inverse_sqrt_lr(tc, step);
    auto rng = seeded(tc.seed, 2, step);
    ForwardContext ctx;
    ctx.training = true;
    ctx.rng = &rng;

    bundle.state.zero_grad();
    GradTape tape;
    auto obj = batch_objective(bundle.state, batch, tc.mode, ctx);
    if (!finite(obj.loss_all)) {
      throw NumericError("non-finite loss at step " + std::to_string(step) +
                         " (loss_m=" + std::to_string(obj.loss_m) + ")");
    }
    auto grads = backward(tape, obj.loss, bundle.state.parameters());
    const double norm = clip_gradients(grads, tc.grad_clip);
    if (!finite(norm)) throw NumericError("non-finite gradient at step " + std::to_string(step));
    adam.step(bundle.state.parameters(), grads, lr, step);
    bundle.step = step;
    push_window(obj.correct, obj.counted);

    nlohmann::json line = {{"step", step},
                           {"epoch", epoch},
                           {"loss_m", obj.loss_m},
                           {"loss_b", obj.loss_b ? nlohmann::json(*obj.loss_b) : nlohmann::json(nullptr)},
                           {"loss_all", obj.loss_all},
                           {"lr", lr},
                           {"grad_norm", norm},
                           {"selection_ratio_per_layer", obj.src_ratio},
                           {"correct", obj.correct},
                           {"tokens", obj.counted},
                           {"accuracy", obj.counted ? static_cast<double>(obj.correct) / static_cast<double>(obj.counted) : 0.0}};
    if (tc.mode == TrainMode::kBi) line["tgt_selection_ratio_per_layer"] = obj.tgt_ratio;
    metrics << line.dump() << '\n';
    metrics.flush();
    if (request.on_step) request.on_step(line);

    if (tc.checkpoint_every > 0 && step % tc.checkpoint_every == 0) save(checkpoint_path(request.out_dir, step));
    if (tc.stop_accuracy > 0.0 && window.size() == per_epoch && window_counted > 0 &&
        static_cast<double>(window_correct) / static_cast<double>(window_counted) >= tc.stop_accuracy) {
      result.stopped_early = true;
      break;
    }
  }
  result.final_checkpoint = (std::filesystem::path(request.out_dir) / "final.ckpt").string();
  save(result.final_checkpoint);
  result.last_step = step;
  result.bundle = std::move(bundle);
  return result;
}

}  // namespace ctxmt::training
