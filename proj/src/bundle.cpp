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

#include "ctxmt/bundle.hpp"

#include "ctxmt/error.hpp"

namespace ctxmt {

nlohmann::json bundle_meta(const ModelBundle& bundle) {
  nlohmann::json meta;
  meta["model"] = to_json(bundle.state.config());
  meta["train"] = to_json(bundle.train);
  meta["data"] = to_json(bundle.data);
  meta["step"] = bundle.step;
  meta["vocab"] = bundle.vocab.tokens();
  auto merges = nlohmann::json::array();
  for (const auto& [a, b] : bundle.tokenizer.merges()) merges.push_back({a, b});
  meta["merges"] = merges;
  return meta;
}

Checkpoint make_checkpoint(const ModelBundle& bundle, NamedTensors optimizer) {
  Checkpoint ck;
  ck.meta = bundle_meta(bundle);
  ck.parameters = bundle.state.parameters();
  ck.optimizer = std::move(optimizer);
  return ck;
}

ModelBundle bundle_from_checkpoint(const Checkpoint& checkpoint) {
  const auto& meta = checkpoint.meta;
  for (const char* key : {"model", "train", "data", "step", "vocab", "merges"}) {
    if (!meta.contains(key)) throw DataError(std::string("checkpoint metadata lacks \"") + key + "\"");
  }
  ModelBundle b;
  try {
    const auto model = model_config_from_json(meta.at("model"));
    b.train = train_config_from_json(meta.at("train"));
    b.data = data_config_from_json(meta.at("data"));
    b.step = meta.at("step").get<std::size_t>();
    auto tokens = meta.at("vocab").get<std::vector<std::string>>();
    const auto& reserved = data::Vocabulary::reserved_tokens();
    if (tokens.size() < reserved.size() ||
        !std::equal(reserved.begin(), reserved.end(), tokens.begin())) {
      throw DataError("checkpoint vocabulary does not start with the reserved tokens");
    }
    b.vocab = data::Vocabulary::from_tokens(
        std::span<const std::string>(tokens).subspan(reserved.size()));
    if (b.vocab.size() != model.vocab_size) {
      throw DataError("checkpoint vocabulary has " + std::to_string(b.vocab.size()) +
                      " tokens but the model expects " + std::to_string(model.vocab_size));
    }
    std::vector<std::pair<std::string, std::string>> merges;
    for (const auto& m : meta.at("merges")) merges.emplace_back(m.at(0), m.at(1));
    b.tokenizer = data::Tokenizer(std::move(merges));
    b.state = ModelState::from_tensors(model, checkpoint.parameters);
  } catch (const UsageError& e) {
    throw DataError(std::string("checkpoint metadata is invalid: ") + e.what());
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint metadata is invalid: ") + e.what());
  }
  return b;
}

ModelBundle load_bundle(const std::string& path) { return bundle_from_checkpoint(load_checkpoint(path)); }

}  // namespace ctxmt
