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

#include "ctxmt/config.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "ctxmt/error.hpp"

namespace ctxmt {

using nlohmann::json;

namespace {

// Reads fields out of a JSON object and complains about leftovers.
class FieldReader {
 public:
  FieldReader(const json& j, std::string section) : j_(j), section_(std::move(section)) {
    if (!j_.is_object()) throw UsageError(section_ + ": expected a JSON object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      if constexpr (std::is_same_v<T, std::size_t> || std::is_same_v<T, std::uint64_t>) {
        if (!it->is_number_unsigned()) throw UsageError("");
      }
      out = it->template get<T>();
    } catch (const std::exception&) {
      throw UsageError(section_ + "." + key + ": invalid value " + it->dump());
    }
  }

  bool has(const char* key) const { return j_.contains(key); }
  const json& raw(const char* key) {
    seen_.insert(key);
    return j_.at(key);
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw UsageError(section_ + ": unknown key \"" + it.key() + "\"");
    }
  }

 private:
  const json& j_;
  std::string section_;
  std::set<std::string> seen_;
};

void require(bool ok, const std::string& what) {
  if (!ok) throw UsageError(what);
}

}  // namespace

ContextWindow parse_window(const std::string& text) {
  const auto comma = text.find(',');
  auto parse = [&](const std::string& part) -> std::size_t {
    if (part.empty() || !std::all_of(part.begin(), part.end(), ::isdigit)) {
      throw UsageError("context window must look like P,N with non-negative integers, got \"" +
                       text + "\"");
    }
    return static_cast<std::size_t>(std::stoul(part));
  };
  if (comma == std::string::npos) parse("");
  return {parse(text.substr(0, comma)), parse(text.substr(comma + 1))};
}

void ModelConfig::validate() const {
  require(vocab_size >= 1, "model.vocab_size must be positive");
  require(d_model >= 1, "model.d_model must be positive");
  require(d_ffn >= 1, "model.d_ffn must be positive");
  require(heads >= 1 && d_model % heads == 0, "model.d_model must be divisible by model.heads");
  require(n_unified + n_selection >= 1, "model needs N1 + N2 >= 1 encoder layers");
  require(decoder_layers >= 1, "model.decoder_layers must be positive");
  require(q >= 0.0 && q <= 1.0, "model.q must lie in [0, 1]");
  require(alpha >= 0.0 && alpha <= 1.0, "model.alpha must lie in [0, 1]");
  require(gate_c >= 0.0 && gate_c <= 1.0, "model.gate_c must lie in [0, 1]");
  require(dropout >= 0.0 && dropout < 1.0, "model.dropout must lie in [0, 1)");
  require(label_smoothing >= 0.0 && label_smoothing < 1.0,
          "model.label_smoothing must lie in [0, 1)");
  require(max_positions >= 1, "model.max_positions must be positive");
}

TrainMode parse_mode(const std::string& text) {
  if (text == "mono") return TrainMode::kMono;
  if (text == "bi") return TrainMode::kBi;
  throw UsageError("mode must be \"mono\" or \"bi\", got \"" + text + "\"");
}

std::string mode_name(TrainMode mode) { return mode == TrainMode::kMono ? "mono" : "bi"; }

void TrainConfig::validate() const {
  require(learning_rate > 0.0, "train.learning_rate must be positive");
  require(warmup_steps >= 1, "train.warmup_steps must be at least 1");
  require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0,
          "train.beta1/beta2 must lie in [0, 1)");
  require(adam_epsilon > 0.0, "train.adam_epsilon must be positive");
  require(grad_clip >= 0.0, "train.grad_clip must be non-negative");
  require(max_tokens >= 1, "train.max_tokens must be positive");
  require(target_context == "reference" || target_context == "model",
          "train.target_context must be \"reference\" or \"model\"");
  require(stop_accuracy >= 0.0 && stop_accuracy <= 1.0, "train.stop_accuracy must lie in [0, 1]");
}

void DataConfig::validate() const {
  require(max_vocab >= 1, "data.max_vocab must be positive");
}

void BeamConfig::validate() const {
  require(beam >= 1, "beam.beam must be at least 1");
  require(length_penalty >= 0.0, "beam.length_penalty must be non-negative");
  require(max_length_factor >= 0.0, "beam.max_length_factor must be non-negative");
}

double inverse_sqrt_lr(const TrainConfig& config, std::size_t step) {
  const double s = static_cast<double>(std::max<std::size_t>(step, 1));
  const double w = static_cast<double>(config.warmup_steps);
  return config.learning_rate * std::min(s / w, std::sqrt(w / s));
}

json to_json(const ModelConfig& c) {
  return json{{"vocab_size", c.vocab_size},
              {"d_model", c.d_model},
              {"d_ffn", c.d_ffn},
              {"heads", c.heads},
              {"n_unified", c.n_unified},
              {"n_selection", c.n_selection},
              {"decoder_layers", c.decoder_layers},
              {"q", c.q},
              {"alpha", c.alpha},
              {"gate_c", c.gate_c},
              {"dropout", c.dropout},
              {"label_smoothing", c.label_smoothing},
              {"max_positions", c.max_positions},
              {"context_window",
               {{"previous", c.context_window.previous}, {"next", c.context_window.next}}}};
}

json to_json(const TrainConfig& c) {
  return json{{"learning_rate", c.learning_rate},   {"warmup_steps", c.warmup_steps},
              {"beta1", c.beta1},                   {"beta2", c.beta2},
              {"adam_epsilon", c.adam_epsilon},     {"grad_clip", c.grad_clip},
              {"max_steps", c.max_steps},           {"seed", c.seed},
              {"max_tokens", c.max_tokens},         {"checkpoint_every", c.checkpoint_every},
              {"mode", mode_name(c.mode)},          {"target_context", c.target_context},
              {"stop_accuracy", c.stop_accuracy}};
}

json to_json(const DataConfig& c) {
  return json{{"max_vocab", c.max_vocab}, {"bpe_merges", c.bpe_merges}};
}

json to_json(const BeamConfig& c) {
  return json{{"beam", c.beam},
              {"length_penalty", c.length_penalty},
              {"max_length_factor", c.max_length_factor},
              {"max_length_offset", c.max_length_offset}};
}

ModelConfig model_config_from_json(const json& j) {
  ModelConfig c;
  FieldReader r(j, "model");
  r.get("vocab_size", c.vocab_size);
  r.get("d_model", c.d_model);
  r.get("d_ffn", c.d_ffn);
  r.get("heads", c.heads);
  r.get("n_unified", c.n_unified);
  r.get("n_selection", c.n_selection);
  c.decoder_layers = c.n_unified + c.n_selection;
  r.get("decoder_layers", c.decoder_layers);
  r.get("q", c.q);
  r.get("alpha", c.alpha);
  r.get("gate_c", c.gate_c);
  r.get("dropout", c.dropout);
  r.get("label_smoothing", c.label_smoothing);
  r.get("max_positions", c.max_positions);
  if (r.has("context_window")) {
    FieldReader w(r.raw("context_window"), "model.context_window");
    w.get("previous", c.context_window.previous);
    w.get("next", c.context_window.next);
    w.finish();
  }
  r.finish();
  return c;
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  FieldReader r(j, "train");
  r.get("learning_rate", c.learning_rate);
  r.get("warmup_steps", c.warmup_steps);
  r.get("beta1", c.beta1);
  r.get("beta2", c.beta2);
  r.get("adam_epsilon", c.adam_epsilon);
  r.get("grad_clip", c.grad_clip);
  r.get("max_steps", c.max_steps);
  r.get("seed", c.seed);
  r.get("max_tokens", c.max_tokens);
  r.get("checkpoint_every", c.checkpoint_every);
  std::string mode = mode_name(c.mode);
  r.get("mode", mode);
  c.mode = parse_mode(mode);
  r.get("target_context", c.target_context);
  r.get("stop_accuracy", c.stop_accuracy);
  r.finish();
  return c;
}

DataConfig data_config_from_json(const json& j) {
  DataConfig c;
  FieldReader r(j, "data");
  r.get("max_vocab", c.max_vocab);
  r.get("bpe_merges", c.bpe_merges);
  r.finish();
  return c;
}

BeamConfig beam_config_from_json(const json& j) {
  BeamConfig c;
  FieldReader r(j, "beam");
  r.get("beam", c.beam);
  r.get("length_penalty", c.length_penalty);
  r.get("max_length_factor", c.max_length_factor);
  r.get("max_length_offset", c.max_length_offset);
  r.finish();
  return c;
}

void RunConfig::validate() const {
  ModelConfig m = model;
  if (m.vocab_size == 0) m.vocab_size = 1;
  m.validate();
  train.validate();
  data.validate();
  beam.validate();
}

json to_json(const RunConfig& c) {
  return json{{"model", to_json(c.model)},
              {"train", to_json(c.train)},
              {"data", to_json(c.data)},
              {"beam", to_json(c.beam)}};
}

RunConfig run_config_from_json(const json& j) {
  RunConfig c;
  FieldReader r(j, "config");
  if (r.has("model")) c.model = model_config_from_json(r.raw("model"));
  if (r.has("train")) c.train = train_config_from_json(r.raw("train"));
  if (r.has("data")) c.data = data_config_from_json(r.raw("data"));
  if (r.has("beam")) c.beam = beam_config_from_json(r.raw("beam"));
  r.finish();
  c.validate();
  return c;
}

void apply_override(json& document, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw UsageError("override must look like section.key=value, got \"" + assignment + "\"");
  }
  const std::string path = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;

  if (!document.is_object()) document = json::object();
  json* node = &document;
  std::size_t start = 0;
  for (;;) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) throw UsageError("override has an empty key: \"" + assignment + "\"");
    if (dot == std::string::npos) {
      (*node)[key] = std::move(value);
      return;
    }
    json& child = (*node)[key];
    if (child.is_null()) child = json::object();
    if (!child.is_object()) throw UsageError("override path \"" + path + "\" runs through a non-object");
    node = &child;
    start = dot + 1;
  }
}

}  // namespace ctxmt
