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

#include <array>
#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ctxmt/bundle.hpp"
#include "ctxmt/config.hpp"
#include "ctxmt/data.hpp"
#include "ctxmt/model.hpp"
#include "json.hpp"

namespace ctxmt::inference {

struct Hypothesis {
  std::vector<TokenId> tokens;  // without BOS and EOS
  double log_prob = 0.0;        // includes the EOS step
  double score = 0.0;
};

// Log-probabilities of the next token given BOS + tokens so far.
using NextTokenScorer = std::function<std::vector<double>(std::span<const TokenId> prefix)>;

// floor(factor * source_length) + offset.
std::size_t max_output_length(const BeamConfig& config, std::size_t source_length);

// log_prob / length^penalty, length counting EOS.
double hypothesis_score(double log_prob, std::size_t length, double penalty);

// Keeps `beam` live prefixes ranked by summed log-probability; a prefix
// ending in EOS within the top `beam` candidates is finished. Stops once
// `beam` hypotheses are finished; at max_length every live prefix is closed
// with EOS. The greedy hypothesis also competes for the final pick, so a
// wider beam never returns a lower score than beam 1. Ties go to the lower
// token id. PAD and BOS are never emitted.
Hypothesis beam_search(const NextTokenScorer& scorer, std::size_t max_length,
                       const BeamConfig& config);

// Argmax decoding, scored with the same rule.
Hypothesis greedy_search(const NextTokenScorer& scorer, std::size_t max_length, double penalty);

// Scorer over one encoded input; dual cross-attention when tgt is non-null.
NextTokenScorer make_scorer(const ModelState& state, const model::EncoderOutput& src,
                            const model::EncoderOutput* tgt);

// Translates one example; TrainMode::kBi needs example.has_tgt_context.
Hypothesis translate_example(const ModelState& state, const data::ContextExample& example,
                             TrainMode mode, const BeamConfig& config);

// Context-free translations of every sentence of a document.
using FirstPass = std::vector<std::vector<TokenId>>;

struct TranslateOptions {
  TrainMode mode = TrainMode::kMono;
  ContextWindow window;
  BeamConfig beam;
};

// Document translation. In bi mode the target context comes from a first
// context-free pass with the same model, computed once per document and kept
// in `cache` (keyed by doc_id) when one is given.
std::vector<std::vector<TokenId>> translate_document(const ModelBundle& bundle,
                                                     const data::Document& document,
                                                     const TranslateOptions& options,
                                                     std::map<std::string, FirstPass>* cache = nullptr);

FirstPass first_pass(const ModelBundle& bundle, const data::Document& document,
                     const BeamConfig& config);

// Detokenized output for every document, in corpus order.
std::vector<std::vector<std::string>> translate_corpus(const ModelBundle& bundle,
                                                       const data::DocumentCorpus& corpus,
                                                       const TranslateOptions& options);

// Corpus-level BLEU-4 over whitespace tokens, case-sensitive. Modified
// n-gram precisions are pooled over the corpus; brevity penalty
// exp(1 - r/c) when c < r. With `smooth`, a precision with zero matches
// becomes 1 / (total + 1). Returned in percent.
struct BleuStats {
  std::array<std::size_t, 4> matches{};
  std::array<std::size_t, 4> totals{};
  std::size_t hyp_length = 0;
  std::size_t ref_length = 0;
};
BleuStats bleu_stats(std::span<const std::string> hypotheses, std::span<const std::string> references);
double bleu_from_stats(const BleuStats& stats, bool smooth);
double corpus_bleu(std::span<const std::string> hypotheses, std::span<const std::string> references,
                   bool smooth = false);

// Selection trace of one example: per encoder and selection layer, the
// head-averaged attention among the tokens alive before the layer, baselines,
// vote counts, kept and dropped tokens with surface forms, and alive ratio.
inline constexpr int kTraceVersion = 1;
nlohmann::json selection_trace(const ModelBundle& bundle, const data::ContextExample& example,
                               TrainMode mode, std::optional<double> q = std::nullopt);
void export_trace(const nlohmann::json& trace, const std::string& path);

}  // namespace ctxmt::inference
