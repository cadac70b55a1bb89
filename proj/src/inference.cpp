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

#include "ctxmt/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ctxmt/error.hpp"

namespace ctxmt::inference {

using data::Vocabulary;

namespace {

bool emittable(TokenId t) { return t != Vocabulary::kPad && t != Vocabulary::kBos; }

std::vector<TokenId> with_bos(const std::vector<TokenId>& tokens) {
  std::vector<TokenId> prefix;
  prefix.reserve(tokens.size() + 1);
  prefix.push_back(Vocabulary::kBos);
  prefix.insert(prefix.end(), tokens.begin(), tokens.end());
  return prefix;
}

struct Candidate {
  std::size_t parent;
  TokenId token;
  double log_prob;
};

}  // namespace

std::size_t max_output_length(const BeamConfig& config, std::size_t source_length) {
  const auto scaled = static_cast<std::size_t>(
      std::floor(config.max_length_factor * static_cast<double>(source_length)));
  return std::max<std::size_t>(1, scaled + config.max_length_offset);
}

double hypothesis_score(double log_prob, std::size_t length, double penalty) {
  if (penalty == 0.0) return log_prob;
  return log_prob / std::pow(static_cast<double>(length), penalty);
}

Hypothesis beam_search(const NextTokenScorer& scorer, std::size_t max_length,
                       const BeamConfig& config) {
  config.validate();
  if (max_length == 0) throw UsageError("beam_search: max_length must be positive");
  struct Live {
    std::vector<TokenId> tokens;
    double log_prob;
  };
  std::vector<Live> live = {{{}, 0.0}};
  std::vector<Hypothesis> finished;
  auto finish = [&](const Live& from, double log_prob) {
    Hypothesis h{from.tokens, log_prob, 0.0};
    h.score = hypothesis_score(log_prob, h.tokens.size() + 1, config.length_penalty);
    finished.push_back(std::move(h));
  };

  for (std::size_t step = 1; step <= max_length && !live.empty(); ++step) {
    std::vector<Candidate> candidates;
    for (std::size_t i = 0; i < live.size(); ++i) {
      const auto lp = scorer(with_bos(live[i].tokens));
      if (step == max_length) {
        finish(live[i], live[i].log_prob + lp[Vocabulary::kEos]);
        continue;
      }
      for (std::size_t t = 0; t < lp.size(); ++t) {
        const auto tok = static_cast<TokenId>(t);
        if (emittable(tok)) candidates.push_back({i, tok, live[i].log_prob + lp[t]});
      }
    }
    if (step == max_length) break;
    std::stable_sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
      if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
      if (a.parent != b.parent) return a.parent < b.parent;
      return a.token < b.token;
    });
    std::vector<Live> next;
    for (std::size_t rank = 0; rank < candidates.size() && next.size() < config.beam; ++rank) {
      const auto& c = candidates[rank];
      if (c.token == Vocabulary::kEos) {
        if (rank < config.beam) finish(live[c.parent], c.log_prob);
        continue;
      }
      Live grown{live[c.parent].tokens, c.log_prob};
      grown.tokens.push_back(c.token);
      next.push_back(std::move(grown));
    }
    live = std::move(next);
    if (finished.size() >= config.beam) break;
  }
  if (config.beam > 1) finished.push_back(greedy_search(scorer, max_length, config.length_penalty));
  if (finished.empty()) throw NumericError("beam_search produced no finished hypothesis");
  return *std::min_element(finished.begin(), finished.end(), [](const Hypothesis& a, const Hypothesis& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.tokens < b.tokens;
  });
}

Hypothesis greedy_search(const NextTokenScorer& scorer, std::size_t max_length, double penalty) {
  if (max_length == 0) throw UsageError("greedy_search: max_length must be positive");
  Hypothesis h;
  for (std::size_t step = 1; step <= max_length; ++step) {
    const auto lp = scorer(with_bos(h.tokens));
    TokenId best = Vocabulary::kEos;
    if (step < max_length) {
      double best_lp = -std::numeric_limits<double>::infinity();
      for (std::size_t t = 0; t < lp.size(); ++t) {
        if (emittable(static_cast<TokenId>(t)) && lp[t] > best_lp) {
          best_lp = lp[t];
          best = static_cast<TokenId>(t);
        }
      }
    }
    h.log_prob += lp[static_cast<std::size_t>(best)];
    if (best == Vocabulary::kEos) break;
    h.tokens.push_back(best);
  }
  h.score = hypothesis_score(h.log_prob, h.tokens.size() + 1, penalty);
  return h;
}

NextTokenScorer make_scorer(const ModelState& state, const model::EncoderOutput& src,
                            const model::EncoderOutput* tgt) {
  return [&state, &src, tgt](std::span<const TokenId> prefix) {
    NoGradGuard no_grad;
    model::ForwardContext ctx;
    Tensor logits = tgt ? model::decode_bi(state, prefix, src, *tgt, ctx)
                        : model::decode_mono(state, prefix, src, ctx);
    const std::size_t v = logits.cols();
    const auto row = logits.data().subspan((logits.rows() - 1) * v, v);
    const double mx = *std::max_element(row.begin(), row.end());
    double total = 0.0;
    for (double x : row) total += std::exp(x - mx);
    const double lse = mx + std::log(total);
    std::vector<double> out(v);
    for (std::size_t i = 0; i < v; ++i) out[i] = row[i] - lse;
    return out;
  };
}

Hypothesis translate_example(const ModelState& state, const data::ContextExample& example,
                             TrainMode mode, const BeamConfig& config) {
  NoGradGuard no_grad;
  model::ForwardContext ctx;
  const auto src_cat = data::source_concatenation(example);
  const auto enc_src = model::encode(state, src_cat.ids, src_cat.layout, ctx);
  std::optional<model::EncoderOutput> enc_tgt;
  if (mode == TrainMode::kBi) {
    const auto tgt_cat = data::target_concatenation(example);
    enc_tgt = model::encode(state, tgt_cat.ids, tgt_cat.layout, ctx);
  }
  const std::size_t limit = std::min(max_output_length(config, example.current_src.size()),
                                     state.config().max_positions);
  auto scorer = make_scorer(state, enc_src, enc_tgt ? &*enc_tgt : nullptr);
  return beam_search(scorer, limit, config);
}

FirstPass first_pass(const ModelBundle& bundle, const data::Document& document,
                     const BeamConfig& config) {
  data::Document bare{document.doc_id, document.src, {}};
  data::DocumentCorpus one{{bare}};
  FirstPass out;
  for (const auto& ex : data::build_examples(one, bundle.vocab, bundle.tokenizer, {0, 0}))
    out.push_back(translate_example(bundle.state, ex, TrainMode::kMono, config).tokens);
  return out;
}

std::vector<std::vector<TokenId>> translate_document(const ModelBundle& bundle,
                                                     const data::Document& document,
                                                     const TranslateOptions& options,
                                                     std::map<std::string, FirstPass>* cache) {
  data::Document bare{document.doc_id, document.src, {}};
  data::DocumentCorpus one{{bare}};
  auto examples = data::build_examples(one, bundle.vocab, bundle.tokenizer, options.window);
  std::vector<std::vector<TokenId>> out;
  if (options.mode == TrainMode::kMono) {
    for (const auto& ex : examples)
      out.push_back(translate_example(bundle.state, ex, TrainMode::kMono, options.beam).tokens);
    return out;
  }
  FirstPass local;
  const FirstPass* pass = nullptr;
  if (cache) {
    auto it = cache->find(document.doc_id);
    if (it == cache->end()) it = cache->emplace(document.doc_id, first_pass(bundle, document, options.beam)).first;
    pass = &it->second;
  } else {
    local = first_pass(bundle, document, options.beam);
    pass = &local;
  }
  const std::size_t k_total = examples.size();
  for (std::size_t k = 0; k < k_total; ++k) {
    std::vector<std::vector<TokenId>> ctx;
    const std::size_t first = k >= options.window.previous ? k - options.window.previous : 0;
    const std::size_t last = std::min(k_total - 1, k + options.window.next);
    for (std::size_t j = first; j <= last; ++j)
      if (j != k) ctx.push_back((*pass)[j]);
    auto ex = data::with_target_context(examples[k], std::move(ctx));
    out.push_back(translate_example(bundle.state, ex, TrainMode::kBi, options.beam).tokens);
  }
  return out;
}

std::vector<std::vector<std::string>> translate_corpus(const ModelBundle& bundle,
                                                       const data::DocumentCorpus& corpus,
                                                       const TranslateOptions& options) {
  std::map<std::string, FirstPass> cache;
  std::vector<std::vector<std::string>> out;
  for (const auto& doc : corpus.documents) {
    std::vector<std::string> sentences;
    for (const auto& ids : translate_document(bundle, doc, options, &cache)) {
      const auto tokens = bundle.vocab.decode(ids);
      sentences.push_back(bundle.tokenizer.detokenize(tokens));
    }
    out.push_back(std::move(sentences));
    cache.erase(doc.doc_id);
  }
  return out;
}

}  // namespace ctxmt::inference
