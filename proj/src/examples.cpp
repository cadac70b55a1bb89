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
#include <numeric>

#include "ctxmt/data.hpp"
#include "ctxmt/error.hpp"

namespace ctxmt::data {

using selection::Segment;
using selection::SentenceSpan;

namespace {

// Current sentence + EOS, then each context sentence closed by SEP.
Concatenation concatenate(const std::vector<TokenId>& current,
                          const std::vector<std::vector<TokenId>>& context, Segment segment) {
  Concatenation c;
  c.ids = current;
  c.ids.push_back(Vocabulary::kEos);
  std::vector<SentenceSpan> spans;
  for (const auto& sentence : context) {
    c.ids.insert(c.ids.end(), sentence.begin(), sentence.end());
    c.ids.push_back(Vocabulary::kSep);
    spans.push_back({segment, sentence.size() + 1});
  }
  c.layout = selection::make_layout(current.size() + 1, spans);
  return c;
}

void pad_into(const Concatenation& c, std::size_t width, Segment segment,
              std::vector<TokenId>& ids, std::vector<selection::SegmentLayout>& layouts) {
  const std::size_t n = c.ids.size();
  ids.insert(ids.end(), c.ids.begin(), c.ids.end());
  ids.insert(ids.end(), width - n, Vocabulary::kPad);
  auto layout = c.layout;
  for (std::size_t i = n; i < width; ++i) {
    layout.segment_ids.push_back(segment);
    layout.positions.push_back(0);
    layout.alive.push_back(1);
    layout.original_positions.push_back(i);
    ++layout.context_total;
  }
  selection::mark_padding(layout, n);
  layouts.push_back(std::move(layout));
}

std::span<const TokenId> row(const std::vector<TokenId>& m, std::size_t width, std::size_t i) {
  return std::span<const TokenId>(m).subspan(i * width, width);
}

}  // namespace

Concatenation source_concatenation(const ContextExample& example) {
  return concatenate(example.current_src, example.src_context, Segment::kSourceContext);
}

Concatenation target_concatenation(const ContextExample& example) {
  if (!example.has_tgt_context) {
    throw UsageError("example " + example.doc_id + "#" + std::to_string(example.sentence_index) +
                     " has no target context");
  }
  return concatenate(example.current_src, example.tgt_context, Segment::kTargetContext);
}

std::vector<ContextExample> build_examples(const DocumentCorpus& corpus, const Vocabulary& vocab,
                                           const Tokenizer& tokenizer, ContextWindow window) {
  std::vector<ContextExample> out;
  for (const auto& doc : corpus.documents) {
    auto encode = [&](const std::string& s) { return vocab.encode(tokenizer.tokenize(s)); };
    std::vector<std::vector<TokenId>> src, tgt;
    for (const auto& s : doc.src) src.push_back(encode(s));
    for (const auto& s : doc.tgt) tgt.push_back(encode(s));
    const bool has_tgt = !doc.tgt.empty();
    const std::size_t k_total = src.size();
    for (std::size_t k = 0; k < k_total; ++k) {
      ContextExample ex;
      ex.doc_id = doc.doc_id;
      ex.sentence_index = k;
      ex.current_src = src[k];
      ex.has_tgt_context = has_tgt;
      const std::size_t first = k >= window.previous ? k - window.previous : 0;
      const std::size_t last = std::min(k_total - 1, k + window.next);
      for (std::size_t j = first; j <= last; ++j) {
        if (j == k) continue;
        ex.src_context.push_back(src[j]);
        if (has_tgt) ex.tgt_context.push_back(tgt[j]);
      }
      if (has_tgt) ex.target = tgt[k];
      out.push_back(std::move(ex));
    }
  }
  return out;
}

ContextExample with_target_context(ContextExample example,
                                   std::vector<std::vector<TokenId>> tgt_context) {
  example.tgt_context = std::move(tgt_context);
  example.has_tgt_context = true;
  return example;
}

std::span<const TokenId> Batch::src_row(std::size_t i) const { return row(src_ids, src_width, i); }
std::span<const TokenId> Batch::tgt_ctx_row(std::size_t i) const {
  return row(tgt_ctx_ids, tgt_ctx_width, i);
}
std::span<const TokenId> Batch::decoder_row(std::size_t i) const {
  return row(decoder_input, target_width, i);
}
std::span<const TokenId> Batch::label_row(std::size_t i) const {
  return row(labels, target_width, i);
}

std::size_t Batch::target_tokens() const {
  return static_cast<std::size_t>(
      std::count_if(labels.begin(), labels.end(), [](TokenId t) { return t != Vocabulary::kPad; }));
}

std::size_t target_token_count(const ContextExample& example) { return example.target.size() + 1; }

std::vector<Batch> make_batches(std::span<const ContextExample> examples, std::size_t max_tokens) {
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<std::size_t> src_len(examples.size());
  for (std::size_t i = 0; i < examples.size(); ++i) {
    src_len[i] = source_concatenation(examples[i]).ids.size();
    if (target_token_count(examples[i]) > max_tokens) {
      throw UsageError("example " + examples[i].doc_id + "#" +
                       std::to_string(examples[i].sentence_index) + " has " +
                       std::to_string(target_token_count(examples[i])) +
                       " target tokens, above the batch budget of " + std::to_string(max_tokens));
    }
  }
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (src_len[a] != src_len[b]) return src_len[a] < src_len[b];
    return examples[a].target.size() < examples[b].target.size();
  });

  std::vector<std::vector<std::size_t>> groups;
  std::size_t used = 0;
  for (std::size_t idx : order) {
    const std::size_t n = target_token_count(examples[idx]);
    if (groups.empty() || used + n > max_tokens) {
      groups.emplace_back();
      used = 0;
    }
    groups.back().push_back(idx);
    used += n;
  }

  std::vector<Batch> batches;
  for (const auto& group : groups) {
    Batch b;
    b.example_indices = group;
    b.has_tgt_context = std::all_of(group.begin(), group.end(),
                                    [&](std::size_t i) { return examples[i].has_tgt_context; });
    std::vector<Concatenation> srcs, tgts;
    for (std::size_t i : group) {
      srcs.push_back(source_concatenation(examples[i]));
      b.src_width = std::max(b.src_width, srcs.back().ids.size());
      if (b.has_tgt_context) {
        tgts.push_back(target_concatenation(examples[i]));
        b.tgt_ctx_width = std::max(b.tgt_ctx_width, tgts.back().ids.size());
      }
      b.target_width = std::max(b.target_width, target_token_count(examples[i]));
    }
    for (const auto& c : srcs) pad_into(c, b.src_width, Segment::kSourceContext, b.src_ids, b.src_layouts);
    for (const auto& c : tgts)
      pad_into(c, b.tgt_ctx_width, Segment::kTargetContext, b.tgt_ctx_ids, b.tgt_ctx_layouts);
    for (std::size_t i : group) {
      const auto& t = examples[i].target;
      b.decoder_input.push_back(Vocabulary::kBos);
      b.decoder_input.insert(b.decoder_input.end(), t.begin(), t.end());
      b.decoder_input.insert(b.decoder_input.end(), b.target_width - t.size() - 1, Vocabulary::kPad);
      b.labels.insert(b.labels.end(), t.begin(), t.end());
      b.labels.push_back(Vocabulary::kEos);
      b.labels.insert(b.labels.end(), b.target_width - t.size() - 1, Vocabulary::kPad);
    }
    batches.push_back(std::move(b));
  }
  return batches;
}

}  // namespace ctxmt::data
