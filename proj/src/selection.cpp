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

#include "ctxmt/selection.hpp"

#include <string>

#include "ctxmt/error.hpp"

namespace ctxmt::selection {

namespace {

void check_q(double q) {
  if (!(q >= 0.0 && q <= 1.0)) {
    throw UsageError("selection threshold q must lie in [0, 1], got " + std::to_string(q));
  }
}

void check_square(const Tensor& a, const SegmentLayout& layout, const char* op) {
  if (a.ndim() != 2 || a.dim(0) != a.dim(1) || a.dim(0) != layout.size()) {
    throw DimensionError(std::string(op) + ": attention of shape " + shape_string(a.shape()) +
                         " does not match a layout of " + std::to_string(layout.size()) +
                         " tokens");
  }
}

}  // namespace

std::size_t SegmentLayout::m() const {
  std::size_t n = 0;
  for (auto a : alive) n += a != 0;
  return n;
}

std::size_t SegmentLayout::alive_context() const {
  std::size_t n = 0;
  for (std::size_t i = p; i < alive.size(); ++i) n += alive[i] != 0;
  return n;
}

double SegmentLayout::alive_ratio() const {
  if (context_total == 0) return 1.0;
  return static_cast<double>(alive_context()) / static_cast<double>(context_total);
}

void SegmentLayout::validate() const {
  const std::size_t n = segment_ids.size();
  if (positions.size() != n || alive.size() != n || original_positions.size() != n) {
    throw UsageError("segment layout: per-token arrays disagree in length");
  }
  if (p == 0) throw UsageError("segment layout: empty current sentence");
  if (p > n) throw UsageError("segment layout: p exceeds the concatenation length");
  for (std::size_t i = 0; i < p; ++i) {
    if (segment_ids[i] != Segment::kCurrent || !alive[i]) {
      throw UsageError("segment layout: current-sentence token " + std::to_string(i) +
                       " must be alive and tagged current");
    }
  }
  for (std::size_t i = p; i < n; ++i) {
    if (segment_ids[i] == Segment::kCurrent) {
      throw UsageError("segment layout: context token " + std::to_string(i) +
                       " tagged as current");
    }
  }
  if (alive_context() > context_total) {
    throw UsageError("segment layout: more alive context tokens than context tokens");
  }
}

SegmentLayout make_layout(std::size_t p, std::span<const SentenceSpan> context) {
  SegmentLayout layout;
  layout.p = p;
  auto push = [&](Segment seg, std::size_t pos) {
    layout.original_positions.push_back(layout.segment_ids.size());
    layout.segment_ids.push_back(seg);
    layout.positions.push_back(pos);
    layout.alive.push_back(1);
  };
  for (std::size_t i = 0; i < p; ++i) push(Segment::kCurrent, i);
  for (const auto& span : context) {
    if (span.segment == Segment::kCurrent) {
      throw UsageError("make_layout: context sentence tagged as current");
    }
    for (std::size_t i = 0; i < span.length; ++i) push(span.segment, i);
    layout.context_total += span.length;
  }
  return layout;
}

void mark_padding(SegmentLayout& layout, std::size_t from) {
  for (std::size_t i = from; i < layout.size(); ++i) {
    if (i < layout.p) throw UsageError("mark_padding: cannot pad current-sentence tokens");
    if (layout.alive[i]) {
      layout.alive[i] = 0;
      --layout.context_total;
    }
  }
}

Tensor average_heads(const Tensor& attention) {
  if (attention.ndim() != 3 || attention.dim(1) != attention.dim(2)) {
    throw DimensionError("average_heads: expected [h, n, n], got " +
                         shape_string(attention.shape()));
  }
  const std::size_t h = attention.dim(0), n = attention.dim(1);
  if (h == 0) throw UsageError("average_heads: no attention heads");
  std::vector<double> out(n * n, 0.0);
  const auto a = attention.data();
  for (std::size_t head = 0; head < h; ++head)
    for (std::size_t i = 0; i < n * n; ++i) out[i] += a[head * n * n + i];
  const double heads = static_cast<double>(h);
  for (double& v : out) v /= heads;
  return Tensor::from_data({n, n}, std::move(out));
}

std::vector<double> source_baseline(const Tensor& averaged, const SegmentLayout& layout) {
  if (layout.p == 0) throw UsageError("source_baseline: empty current sentence");
  check_square(averaged, layout, "source_baseline");
  const std::size_t n = layout.size(), p = layout.p;
  std::vector<double> baseline(p, 0.0);
  for (std::size_t i = 0; i < p; ++i) {
    const double* row = averaged.data().data() + i * n;
    double total = 0.0;
    for (std::size_t j = 0; j < p; ++j) {
      if (j != i) total += row[j];
    }
    baseline[i] = total / static_cast<double>(p);
  }
  return baseline;
}

SelectionDecision correlation_scores(const Tensor& averaged, std::span<const double> baseline,
                                     const SegmentLayout& layout) {
  check_square(averaged, layout, "correlation_scores");
  if (baseline.size() != layout.p) {
    throw DimensionError("correlation_scores: " + std::to_string(baseline.size()) +
                         " baselines for p = " + std::to_string(layout.p));
  }
  const std::size_t n = layout.size();
  SelectionDecision decision;
  decision.baselines.assign(baseline.begin(), baseline.end());
  for (std::size_t k = layout.p; k < n; ++k) {
    if (!layout.is_candidate(k)) continue;
    int votes = 0;
    for (std::size_t i = 0; i < layout.p; ++i) {
      if (averaged.data()[i * n + k] >= baseline[i]) ++votes;
    }
    decision.candidates.push_back(k);
    decision.scores.push_back(votes);
  }
  return decision;
}

std::vector<std::uint8_t> select(std::span<const int> scores, double q, std::size_t p) {
  check_q(q);
  const double threshold = q * static_cast<double>(p);
  std::vector<std::uint8_t> keep(scores.size());
  for (std::size_t k = 0; k < scores.size(); ++k)
    keep[k] = static_cast<double>(scores[k]) >= threshold ? 1 : 0;
  return keep;
}

SelectionDecision select_context(const Tensor& attention, const SegmentLayout& layout,
                                 double q) {
  check_q(q);
  const Tensor averaged = average_heads(attention);
  const auto baseline = source_baseline(averaged, layout);
  SelectionDecision decision = correlation_scores(averaged, baseline, layout);
  decision.keep = select(decision.scores, q, layout.p);
  decision.threshold = q * static_cast<double>(layout.p);
  return decision;
}

SegmentLayout apply_decision(const SegmentLayout& layout, const SelectionDecision& decision) {
  SegmentLayout next = layout;
  for (std::size_t c = 0; c < decision.candidates.size(); ++c) {
    const std::size_t k = decision.candidates[c];
    if (k < layout.p) throw UsageError("apply_decision: current-sentence token as candidate");
    if (!decision.keep[c]) next.alive[k] = 0;
  }
  return next;
}

}  // namespace ctxmt::selection
