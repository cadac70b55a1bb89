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
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ctxmt/config.hpp"
#include "ctxmt/selection.hpp"
#include "ctxmt/tensor.hpp"

namespace ctxmt::data {

struct Document {
  std::string doc_id;
  std::vector<std::string> src;
  std::vector<std::string> tgt;  // empty when the corpus has no references
};

struct DocumentCorpus {
  std::vector<Document> documents;

  bool has_targets() const;
  std::size_t sentence_count() const;
};

// One JSON object per line: {"doc_id": str, "src": [str], "tgt": [str]?}.
// Blank lines are skipped; errors carry "<name>:<line>".
DocumentCorpus parse_corpus(std::istream& in, const std::string& name);
DocumentCorpus load_corpus(const std::string& path);

// Whitespace tokenization with optional learned character-pair merges.
// Subword pieces that do not end a word carry a trailing "@@".
class Tokenizer {
 public:
  Tokenizer() = default;
  explicit Tokenizer(std::vector<std::pair<std::string, std::string>> merges);

  // Learns up to `merges` pair merges from the corpus (source and target
  // sides). Most frequent pair first, ties broken lexicographically.
  static Tokenizer learn(const DocumentCorpus& corpus, std::size_t merges);

  std::vector<std::string> tokenize(const std::string& text) const;
  std::string detokenize(std::span<const std::string> tokens) const;

  const std::vector<std::pair<std::string, std::string>>& merges() const { return merges_; }
  bool subword() const { return !merges_.empty(); }

 private:
  std::vector<std::string> split_word(const std::string& word) const;

  std::vector<std::pair<std::string, std::string>> merges_;
  std::map<std::pair<std::string, std::string>, std::size_t> rank_;
};

class Vocabulary {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kBos = 1;
  static constexpr TokenId kEos = 2;
  static constexpr TokenId kUnk = 3;
  static constexpr TokenId kSep = 4;
  static constexpr std::size_t kReserved = 5;
  static const std::vector<std::string>& reserved_tokens();

  Vocabulary();
  // Reserved tokens first, then the given tokens in order.
  static Vocabulary from_tokens(std::span<const std::string> tokens);
  // Frequency-ranked (ties lexicographic) over both corpus sides.
  static Vocabulary build(const DocumentCorpus& corpus, const Tokenizer& tokenizer,
                          std::size_t max_size);

  std::size_t size() const { return tokens_.size(); }
  TokenId id(const std::string& token) const;  // kUnk when absent
  const std::string& token(TokenId id) const;
  // Every token including the reserved ones, in id order.
  const std::vector<std::string>& tokens() const { return tokens_; }

  std::vector<TokenId> encode(std::span<const std::string> tokens) const;
  // Drops BOS/PAD, stops at the first EOS.
  std::vector<std::string> decode(std::span<const TokenId> ids) const;

  // Header line "#ctxmt-vocab v1 reserved=5", then one token per line.
  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::map<std::string, TokenId> index_;
};

struct ContextExample {
  std::string doc_id;
  std::size_t sentence_index = 0;
  std::vector<TokenId> current_src;
  std::vector<std::vector<TokenId>> src_context;  // previous sentences first
  std::vector<std::vector<TokenId>> tgt_context;
  bool has_tgt_context = false;
  std::vector<TokenId> target;  // empty at inference time
};

// Ids plus layout for one encoder input.
struct Concatenation {
  std::vector<TokenId> ids;
  selection::SegmentLayout layout;
};

// Current source sentence plus EOS (the p voters), then each source context
// sentence closed by the separator token. Positions restart for each
// sentence; a separator takes the next position of the sentence it closes.
Concatenation source_concatenation(const ContextExample& example);
// Current source sentence followed by the target context sentences.
Concatenation target_concatenation(const ContextExample& example);

// Sentence k's window: up to `previous` sentences before it and `next` after
// it, never crossing the document. Target context comes from the reference
// translations when present.
std::vector<ContextExample> build_examples(const DocumentCorpus& corpus, const Vocabulary& vocab,
                                           const Tokenizer& tokenizer, ContextWindow window);

// Example with its target context replaced by the given sentences.
ContextExample with_target_context(ContextExample example,
                                   std::vector<std::vector<TokenId>> tgt_context);

// Padded, length-bucketed group of examples. Matrices are row-major
// [size(), width]; padding is PAD and is dead in the layouts.
struct Batch {
  std::vector<std::size_t> example_indices;
  std::size_t src_width = 0;
  std::vector<TokenId> src_ids;
  std::vector<selection::SegmentLayout> src_layouts;
  bool has_tgt_context = false;
  std::size_t tgt_ctx_width = 0;
  std::vector<TokenId> tgt_ctx_ids;
  std::vector<selection::SegmentLayout> tgt_ctx_layouts;
  std::size_t target_width = 0;
  std::vector<TokenId> decoder_input;  // BOS + target
  std::vector<TokenId> labels;         // target + EOS

  std::size_t size() const { return example_indices.size(); }
  std::span<const TokenId> src_row(std::size_t i) const;
  std::span<const TokenId> tgt_ctx_row(std::size_t i) const;
  std::span<const TokenId> decoder_row(std::size_t i) const;
  std::span<const TokenId> label_row(std::size_t i) const;
  std::size_t target_tokens() const;  // non-pad labels
};

// Target tokens of an example as counted against the batch budget
// (target length + EOS).
std::size_t target_token_count(const ContextExample& example);

// Sorted by source length then target length, packed greedily so that each
// batch holds at most max_tokens target tokens.
std::vector<Batch> make_batches(std::span<const ContextExample> examples, std::size_t max_tokens);

}  // namespace ctxmt::data
