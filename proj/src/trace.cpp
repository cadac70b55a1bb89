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

#include <fstream>

#include "ctxmt/error.hpp"
#include "ctxmt/inference.hpp"

namespace ctxmt::inference {

namespace {

const char* segment_name(selection::Segment s) {
  switch (s) {
    case selection::Segment::kCurrent: return "current";
    case selection::Segment::kSourceContext: return "source_context";
    case selection::Segment::kTargetContext: return "target_context";
  }
  return "unknown";
}

nlohmann::json token_ref(std::size_t index, const std::vector<std::string>& surface) {
  return {{"index", index}, {"token", surface[index]}};
}

nlohmann::json encoder_trace(const ModelBundle& bundle, const data::Concatenation& cat,
                             const char* side, std::optional<double> q) {
  model::ForwardContext ctx;
  ctx.q = q;
  const auto enc = model::encode(bundle.state, cat.ids, cat.layout, ctx);
  std::vector<std::string> surface;
  for (TokenId id : cat.ids) surface.push_back(bundle.vocab.token(id));

  nlohmann::json out;
  out["side"] = side;
  out["tokens"] = surface;
  auto segments = nlohmann::json::array();
  for (auto s : cat.layout.segment_ids) segments.push_back(segment_name(s));
  out["segments"] = segments;
  out["positions"] = cat.layout.positions;
  out["p"] = cat.layout.p;
  out["context_total"] = cat.layout.context_total;

  auto layers = nlohmann::json::array();
  for (const auto& entry : enc.trace) {
    std::vector<std::size_t> alive;
    for (std::size_t i = 0; i < entry.alive_before.size(); ++i)
      if (entry.alive_before[i]) alive.push_back(i);
    auto attention = nlohmann::json::array();
    for (std::size_t i : alive) {
      std::vector<double> row;
      for (std::size_t j : alive) row.push_back(entry.averaged.at(i, j));
      attention.push_back(row);
    }
    const auto& d = entry.decision;
    auto kept = nlohmann::json::array(), dropped = nlohmann::json::array();
    for (std::size_t c = 0; c < d.candidates.size(); ++c)
      (d.keep[c] ? kept : dropped).push_back(token_ref(d.candidates[c], surface));
    layers.push_back({{"layer", entry.layer},
                      {"alive_tokens", alive},
                      {"attention", attention},
                      {"baselines", d.baselines},
                      {"candidates", d.candidates},
                      {"scores", d.scores},
                      {"threshold", d.threshold},
                      {"kept", kept},
                      {"dropped", dropped},
                      {"alive_ratio", entry.alive_ratio}});
  }
  out["selection_layers"] = layers;
  std::vector<std::size_t> final_alive;
  for (std::size_t i = 0; i < enc.layout.size(); ++i)
    if (enc.layout.alive[i]) final_alive.push_back(i);
  out["final_alive"] = final_alive;
  out["final_alive_ratio"] = enc.layout.alive_ratio();
  return out;
}

}  // namespace

nlohmann::json selection_trace(const ModelBundle& bundle, const data::ContextExample& example,
                               TrainMode mode, std::optional<double> q) {
  NoGradGuard no_grad;
  nlohmann::json trace;
  trace["schema"] = "ctxmt-selection-trace";
  trace["version"] = kTraceVersion;
  trace["model"] = to_json(bundle.state.config());
  trace["q"] = q.value_or(bundle.state.config().q);
  trace["example"] = {{"doc_id", example.doc_id}, {"sentence_index", example.sentence_index}};
  auto encoders = nlohmann::json::array();
  encoders.push_back(encoder_trace(bundle, data::source_concatenation(example), "source", q));
  if (mode == TrainMode::kBi) {
    encoders.push_back(encoder_trace(bundle, data::target_concatenation(example), "target", q));
  }
  trace["encoders"] = encoders;
  return trace;
}

void export_trace(const nlohmann::json& trace, const std::string& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("cannot write trace " + path);
  os << trace.dump(2) << '\n';
  if (!os) throw DataError("failed writing trace " + path);
}

}  // namespace ctxmt::inference
