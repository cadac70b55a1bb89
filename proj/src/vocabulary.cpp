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

#include <algorithm>
#include <fstream>
#include <sstream>

#include "ctxmt/data.hpp"
#include "ctxmt/error.hpp"

namespace ctxmt::data {

namespace {

constexpr const char* kEndOfWord = "</w>";
constexpr const char* kContinuation = "@@";
constexpr const char* kVocabHeader = "#ctxmt-vocab v1 reserved=";

std::vector<std::string> split_whitespace(const std::string& text) {
  std::istringstream is(text);
  std::vector<std::string> out;
  for (std::string w; is >> w;) out.push_back(w);
  return out;
}

// UTF-8 aware split into code points; the last symbol carries </w>.
std::vector<std::string> characters(const std::string& word) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < word.size();) {
    const auto c = static_cast<unsigned char>(word[i]);
    std::size_t len = 1;
    if (c >= 0xF0) len = 4;
    else if (c >= 0xE0) len = 3;
    else if (c >= 0xC0) len = 2;
    len = std::min(len, word.size() - i);
    out.push_back(word.substr(i, len));
    i += len;
  }
  if (!out.empty()) out.back() += kEndOfWord;
  return out;
}

void merge_pair(std::vector<std::string>& symbols, const std::string& a, const std::string& b) {
  std::vector<std::string> merged;
  merged.reserve(symbols.size());
  for (std::size_t i = 0; i < symbols.size(); ++i) {
    if (i + 1 < symbols.size() && symbols[i] == a && symbols[i + 1] == b) {
      merged.push_back(a + b);
      ++i;
    } else {
      merged.push_back(symbols[i]);
    }
  }
  symbols = std::move(merged);
}

}  // namespace

Tokenizer::Tokenizer(std::vector<std::pair<std::string, std::string>> merges)
    : merges_(std::move(merges)) {
  for (std::size_t i = 0; i < merges_.size(); ++i) rank_.emplace(merges_[i], i);
}

Tokenizer Tokenizer::learn(const DocumentCorpus& corpus, std::size_t merges) {
  std::map<std::string, std::size_t> word_counts;
  for (const auto& doc : corpus.documents) {
    for (const auto* side : {&doc.src, &doc.tgt})
      for (const auto& sentence : *side)
        for (const auto& w : split_whitespace(sentence)) ++word_counts[w];
  }
  std::vector<std::pair<std::vector<std::string>, std::size_t>> words;
  for (const auto& [w, n] : word_counts) words.emplace_back(characters(w), n);

  std::vector<std::pair<std::string, std::string>> learned;
  while (learned.size() < merges) {
    std::map<std::pair<std::string, std::string>, std::size_t> pairs;
    for (const auto& [symbols, n] : words)
      for (std::size_t i = 0; i + 1 < symbols.size(); ++i) pairs[{symbols[i], symbols[i + 1]}] += n;
    const std::pair<std::string, std::string>* best = nullptr;
    std::size_t best_count = 1;  // a merge must occur at least twice
    for (const auto& [pair, n] : pairs) {
      if (n > best_count) {  // strict: map order keeps the lexicographically first on ties
        best = &pair;
        best_count = n;
      }
    }
    if (best == nullptr) break;
    const auto chosen = *best;
    for (auto& [symbols, _] : words) merge_pair(symbols, chosen.first, chosen.second);
    learned.push_back(chosen);
  }
  return Tokenizer(std::move(learned));
}

std::vector<std::string> Tokenizer::split_word(const std::string& word) const {
  auto symbols = characters(word);
  while (symbols.size() > 1) {
    std::size_t best_rank = merges_.size();
    std::size_t best_at = 0;
    for (std::size_t i = 0; i + 1 < symbols.size(); ++i) {
      auto it = rank_.find({symbols[i], symbols[i + 1]});
      if (it != rank_.end() && it->second < best_rank) {
        best_rank = it->second;
        best_at = i;
      }
    }
    if (best_rank == merges_.size()) break;
    symbols[best_at] += symbols[best_at + 1];
    symbols.erase(symbols.begin() + static_cast<std::ptrdiff_t>(best_at) + 1);
  }
  const std::string eow = kEndOfWord;
  for (std::size_t i = 0; i < symbols.size(); ++i) {
    if (i + 1 < symbols.size()) {
      symbols[i] += kContinuation;
    } else {
      symbols[i].erase(symbols[i].size() - eow.size());
    }
  }
  return symbols;
}

std::vector<std::string> Tokenizer::tokenize(const std::string& text) const {
  auto words = split_whitespace(text);
  if (!subword()) return words;
  std::vector<std::string> out;
  for (const auto& w : words) {
    auto pieces = split_word(w);
    out.insert(out.end(), pieces.begin(), pieces.end());
  }
  return out;
}

std::string Tokenizer::detokenize(std::span<const std::string> tokens) const {
  std::string out;
  const std::string cont = kContinuation;
  bool glue = false;
  for (const auto& t : tokens) {
    if (!out.empty() && !glue) out += ' ';
    const bool continues =
        subword() && t.size() > cont.size() && t.compare(t.size() - cont.size(), cont.size(), cont) == 0;
    out += continues ? t.substr(0, t.size() - cont.size()) : t;
    glue = continues;
  }
  return out;
}

const std::vector<std::string>& Vocabulary::reserved_tokens() {
  static const std::vector<std::string> reserved = {"<pad>", "<s>", "</s>", "<unk>", "<sep>"};
  return reserved;
}

Vocabulary::Vocabulary() {
  for (const auto& t : reserved_tokens()) {
    index_.emplace(t, static_cast<TokenId>(tokens_.size()));
    tokens_.push_back(t);
  }
}

Vocabulary Vocabulary::from_tokens(std::span<const std::string> tokens) {
  Vocabulary v;
  for (const auto& t : tokens) {
    if (t.empty() || t.find_first_of(" \t\r\n") != std::string::npos) {
      throw DataError("vocabulary token \"" + t + "\" is empty or contains whitespace");
    }
    if (!v.index_.emplace(t, static_cast<TokenId>(v.tokens_.size())).second) {
      throw DataError("duplicate vocabulary token \"" + t + "\"");
    }
    v.tokens_.push_back(t);
  }
  return v;
}

Vocabulary Vocabulary::build(const DocumentCorpus& corpus, const Tokenizer& tokenizer,
                             std::size_t max_size) {
  if (max_size < kReserved) {
    throw UsageError("vocabulary size " + std::to_string(max_size) + " is smaller than the " +
                     std::to_string(kReserved) + " reserved tokens");
  }
  std::map<std::string, std::size_t> counts;
  for (const auto& doc : corpus.documents)
    for (const auto* side : {&doc.src, &doc.tgt})
      for (const auto& sentence : *side)
        for (const auto& t : tokenizer.tokenize(sentence)) ++counts[t];
  for (const auto& r : reserved_tokens()) counts.erase(r);
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> keep;
  for (std::size_t i = 0; i < ranked.size() && keep.size() + kReserved < max_size; ++i)
    keep.push_back(ranked[i].first);
  return from_tokens(keep);
}

TokenId Vocabulary::id(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw UsageError("token id " + std::to_string(id) + " outside vocabulary");
  }
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<TokenId> Vocabulary::encode(std::span<const std::string> tokens) const {
  std::vector<TokenId> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(id(t));
  return ids;
}

std::vector<std::string> Vocabulary::decode(std::span<const TokenId> ids) const {
  std::vector<std::string> out;
  for (TokenId id : ids) {
    if (id == kEos) break;
    if (id == kBos || id == kPad) continue;
    out.push_back(token(id));
  }
  return out;
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot write vocabulary " + path);
  os << kVocabHeader << kReserved << '\n';
  for (const auto& t : tokens_) os << t << '\n';
  if (!os) throw DataError("failed writing vocabulary " + path);
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open vocabulary " + path);
  std::string header;
  std::getline(is, header);
  if (header != std::string(kVocabHeader) + std::to_string(kReserved)) {
    throw DataError(path + ": not a ctxmt vocabulary (bad header)");
  }
  std::vector<std::string> lines;
  for (std::string line; std::getline(is, line);) lines.push_back(line);
  if (lines.size() < kReserved ||
      !std::equal(reserved_tokens().begin(), reserved_tokens().end(), lines.begin())) {
    throw DataError(path + ": reserved tokens missing or reordered");
  }
  return from_tokens(std::span<const std::string>(lines).subspan(kReserved));
}

}  // namespace ctxmt::data
