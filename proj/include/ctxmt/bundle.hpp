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
#include <string>

#include "ctxmt/config.hpp"
#include "ctxmt/data.hpp"
#include "ctxmt/model_state.hpp"

namespace ctxmt {

// Everything needed to translate with a trained model. A checkpoint file is
// self-contained: its metadata carries the configs, vocabulary and merges.
struct ModelBundle {
  ModelState state;
  data::Vocabulary vocab;
  data::Tokenizer tokenizer;
  DataConfig data;
  TrainConfig train;
  std::size_t step = 0;
};

nlohmann::json bundle_meta(const ModelBundle& bundle);
Checkpoint make_checkpoint(const ModelBundle& bundle, NamedTensors optimizer = {});
// Throws DataError when the metadata and tensors disagree (vocabulary size,
// dimensions, missing parameters).
ModelBundle bundle_from_checkpoint(const Checkpoint& checkpoint);
ModelBundle load_bundle(const std::string& path);

}  // namespace ctxmt
