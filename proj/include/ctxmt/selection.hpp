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
#include <cstdint>
#include <span>
#include <vector>

#include "ctxmt/tensor.hpp"

// Attention-vote context selection.
//
// The encoder input is a concatenation whose first p positions hold the
// sentence being translated ("current" tokens); the remaining positions hold
// context tokens. Each current token i votes for a context token k when its
// head-averaged attention a[i][k] reaches its own baseline
//
//   baseline[i] = (1/p) * sum_{j < p, j != i} a[i][j]
//
// and a context token survives when its vote count reaches q * p. Dead tokens
// are never candidates and never come back.
//
// Notes:
//  - voters are the current tokens, positions [0, p).
//  - the baseline divides a (p-1)-term sum by p. With p == 1 it is 0 and
//    every alive context token gets the single vote.
//  - ties count as votes.
namespace ctxmt::selection {

enum class Segment : std::uint8_t {
  kCurrent = 0,
  kSourceContext = 1,
  kTargetContext = 2,
};

// Bookkeeping for one encoder concatenation (possibly padded).
struct SegmentLayout {
  std::size_t p = 0;  // current-sentence tokens, always positions [0, p)
  std::vector<Segment> segment_ids;
  std::vector<std::size_t> positions;  // position ids, restarted per sentence
  std::vector<std::uint8_t> alive;
  std::vector<std::size_t> original_positions;
  // Context tokens alive before any selection (padding excluded).
  std::size_t context_total = 0;

  std::size_t size() const { return segment_ids.size(); }
  // Alive token count.
  std::size_t m() const;
  std::size_t alive_context() const;
  // alive_context / context_total, or 1 when there is no context.
  double alive_ratio() const;
  bool is_candidate(std::size_t i) const { return i >= p && alive[i] != 0; }
  // Throws UsageError when an invariant is broken.
  void validate() const;
};

// Builds a fully-alive layout: p current tokens followed by the given
// context sentences, each tagged with its segment. Positions restart at 0 for
// the current sentence and for every context sentence.
struct SentenceSpan {
  Segment segment;
  std::size_t length;
};
SegmentLayout make_layout(std::size_t p, std::span<const SentenceSpan> context);

// Marks positions [from, size) dead without counting them as context
// (padding).
void mark_padding(SegmentLayout& layout, std::size_t from);

struct SelectionDecision {
  std::vector<std::size_t> candidates;  // alive context positions, ascending
  std::vector<int> scores;              // votes per candidate, 0..p
  std::vector<std::uint8_t> keep;       // per candidate
  std::vector<double> baselines;        // per voter, length p
  double threshold = 0.0;               // q * p
};

// [h, n, n] -> [n, n], elementwise mean over heads.
Tensor average_heads(const Tensor& attention);

// One baseline per current token.
std::vector<double> source_baseline(const Tensor& averaged, const SegmentLayout& layout);

// Votes for every alive context token; fills candidates, scores and
// baselines (keep and threshold are left for select()).
SelectionDecision correlation_scores(const Tensor& averaged,
                                     std::span<const double> baseline,
                                     const SegmentLayout& layout);

// keep[k] = scores[k] >= q * p.
std::vector<std::uint8_t> select(std::span<const int> scores, double q, std::size_t p);

// average_heads -> source_baseline -> correlation_scores -> select.
SelectionDecision select_context(const Tensor& attention, const SegmentLayout& layout,
                                 double q);

// Copy of layout with rejected candidates marked dead.
SegmentLayout apply_decision(const SegmentLayout& layout, const SelectionDecision& decision);

// Independent nested-loop reference for select_context; returns the keep mask
// over alive context positions in ascending order.
std::vector<std::uint8_t> oracle_select(const Tensor& attention, const SegmentLayout& layout,
                                        double q);

}  // namespace ctxmt::selection
