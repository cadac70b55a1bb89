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
#include <istream>

#include "ctxmt/data.hpp"
#include "ctxmt/error.hpp"
#include "json.hpp"

namespace ctxmt::data {

bool DocumentCorpus::has_targets() const {
  for (const auto& d : documents)
    if (d.tgt.empty() && !d.src.empty()) return false;
  return true;
}

std::size_t DocumentCorpus::sentence_count() const {
  std::size_t n = 0;
  for (const auto& d : documents) n += d.src.size();
  return n;
}

namespace {

std::vector<std::string> string_array(const nlohmann::json& j, const char* key,
                                      const std::string& where) {
  if (!j.is_array()) throw DataError(where + ": \"" + key + "\" must be an array of strings");
  std::vector<std::string> out;
  out.reserve(j.size());
  for (const auto& s : j) {
    if (!s.is_string()) throw DataError(where + ": \"" + key + "\" must be an array of strings");
    out.push_back(s.get<std::string>());
  }
  return out;
}

}  // namespace

DocumentCorpus parse_corpus(std::istream& in, const std::string& name) {
  DocumentCorpus corpus;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = name + ":" + std::to_string(line_no);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const std::exception& e) {
      throw DataError(where + ": malformed JSON: " + e.what());
    }
    if (!j.is_object()) throw DataError(where + ": expected a JSON object");
    Document doc;
    if (!j.contains("doc_id") || !j["doc_id"].is_string()) {
      throw DataError(where + ": missing string field \"doc_id\"");
    }
    doc.doc_id = j["doc_id"].get<std::string>();
    if (!j.contains("src")) throw DataError(where + ": missing field \"src\"");
    doc.src = string_array(j["src"], "src", where);
    if (j.contains("tgt") && !j["tgt"].is_null()) {
      doc.tgt = string_array(j["tgt"], "tgt", where);
      if (doc.tgt.size() != doc.src.size()) {
        throw DataError(where + ": document \"" + doc.doc_id + "\" has " +
                        std::to_string(doc.src.size()) + " source but " +
                        std::to_string(doc.tgt.size()) + " target sentences");
      }
    }
    for (auto it = j.begin(); it != j.end(); ++it) {
      if (it.key() != "doc_id" && it.key() != "src" && it.key() != "tgt") {
        throw DataError(where + ": unknown field \"" + it.key() + "\"");
      }
    }
    corpus.documents.push_back(std::move(doc));
  }
  return corpus;
}

DocumentCorpus load_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open corpus " + path);
  return parse_corpus(in, path);
}

}  // namespace ctxmt::data
