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

// Brute-force reference for the selection rule. Shares nothing with
// selection.cpp beyond the layout type: every quantity is recomputed from the
// raw [h, n, n] attention with plain loops.

#include <string>

#include "ctxmt/error.hpp"
#include "ctxmt/selection.hpp"

namespace ctxmt::selection {

std::vector<std::uint8_t> oracle_select(const Tensor& attention, const SegmentLayout& layout,
                                        double q) {
  if (!(q >= 0.0 && q <= 1.0)) throw UsageError("oracle_select: q outside [0, 1]");
  if (attention.ndim() != 3) throw DimensionError("oracle_select: expected [h, n, n]");
  const std::size_t h = attention.dim(0);
  const std::size_t n = attention.dim(1);
  const std::size_t p = layout.p;
  if (h == 0) throw UsageError("oracle_select: no attention heads");
  if (p == 0) throw UsageError("oracle_select: empty current sentence");
  if (attention.dim(2) != n || n != layout.size()) {
    throw DimensionError("oracle_select: attention does not match layout");
  }
  const auto raw = attention.data();
  auto mean_attention = [&](std::size_t i, std::size_t j) {
    double s = 0.0;
    for (std::size_t head = 0; head < h; ++head) s += raw[(head * n + i) * n + j];
    return s / static_cast<double>(h);
  };

  std::vector<std::uint8_t> keep;
  for (std::size_t k = p; k < n; ++k) {
    if (!layout.alive[k]) continue;
    int votes = 0;
    for (std::size_t i = 0; i < p; ++i) {
      double others = 0.0;
      for (std::size_t j = 0; j < p; ++j) {
        if (j == i) continue;
        others += mean_attention(i, j);
      }
      const double baseline = others / static_cast<double>(p);
      if (mean_attention(i, k) >= baseline) votes += 1;
    }
    keep.push_back(static_cast<double>(votes) >= q * static_cast<double>(p) ? 1 : 0);
  }
  return keep;
}

}  // namespace ctxmt::selection
