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
#include <map>
#include <sstream>

#include "ctxmt/error.hpp"
#include "ctxmt/inference.hpp"

namespace ctxmt::inference {

namespace {

using Ngram = std::vector<std::string>;

std::vector<std::string> words(const std::string& s) {
  std::istringstream is(s);
  std::vector<std::string> out;
  for (std::string w; is >> w;) out.push_back(w);
  return out;
}

std::map<Ngram, std::size_t> ngram_counts(const std::vector<std::string>& w, std::size_t n) {
  std::map<Ngram, std::size_t> counts;
  for (std::size_t i = 0; i + n <= w.size(); ++i) ++counts[Ngram(w.begin() + i, w.begin() + i + n)];
  return counts;
}

}  // namespace

BleuStats bleu_stats(std::span<const std::string> hypotheses, std::span<const std::string> references) {
  if (hypotheses.size() != references.size()) {
    throw DataError("BLEU needs one reference per hypothesis: got " + std::to_string(hypotheses.size()) +
                    " hypotheses and " + std::to_string(references.size()) + " references");
  }
  BleuStats s;
  for (std::size_t i = 0; i < hypotheses.size(); ++i) {
    const auto hyp = words(hypotheses[i]);
    const auto ref = words(references[i]);
    s.hyp_length += hyp.size();
    s.ref_length += ref.size();
    for (std::size_t n = 1; n <= 4; ++n) {
      const auto h = ngram_counts(hyp, n);
      const auto r = ngram_counts(ref, n);
      for (const auto& [gram, count] : h) {
        auto it = r.find(gram);
        if (it != r.end()) s.matches[n - 1] += std::min(count, it->second);
        s.totals[n - 1] += count;
      }
    }
  }
  return s;
}

double bleu_from_stats(const BleuStats& s, bool smooth) {
  if (s.hyp_length == 0) return 0.0;
  double log_precision = 0.0;
  for (std::size_t n = 0; n < 4; ++n) {
    double p;
    if (s.matches[n] == 0) {
      if (!smooth) return 0.0;
      p = 1.0 / static_cast<double>(s.totals[n] + 1);
    } else {
      p = static_cast<double>(s.matches[n]) / static_cast<double>(s.totals[n]);
    }
    log_precision += std::log(p) / 4.0;
  }
  const double c = static_cast<double>(s.hyp_length), r = static_cast<double>(s.ref_length);
  const double brevity = c < r ? 1.0 - r / c : 0.0;
  return 100.0 * std::exp(brevity + log_precision);
}

double corpus_bleu(std::span<const std::string> hypotheses, std::span<const std::string> references,
                   bool smooth) {
  return bleu_from_stats(bleu_stats(hypotheses, references), smooth);
}

}  // namespace ctxmt::inference
