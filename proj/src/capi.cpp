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

#include "ctxmt/ctxmt.h"

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "ctxmt/bundle.hpp"
#include "ctxmt/config.hpp"
#include "ctxmt/error.hpp"
#include "ctxmt/inference.hpp"
#include "ctxmt/training.hpp"
#include "json.hpp"

struct ctxmt_model {
  ctxmt::ModelBundle bundle;
  std::string path;
};

namespace {

using nlohmann::json;

thread_local std::string g_last_error;

template <typename F>
ctxmt_status guarded(F&& body) {
  g_last_error.clear();
  try {
    body();
    return CTXMT_OK;
  } catch (const ctxmt::Error& e) {
    g_last_error = e.what();
    return static_cast<ctxmt_status>(e.kind());
  } catch (const json::exception& e) {
    g_last_error = std::string("invalid JSON: ") + e.what();
    return CTXMT_USAGE_ERROR;
  } catch (const std::filesystem::filesystem_error& e) {
    g_last_error = e.what();
    return CTXMT_DATA_ERROR;
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return CTXMT_NUMERIC_ERROR;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return CTXMT_DATA_ERROR;
  }
}

void require_arg(const void* p, const char* name) {
  if (!p) throw ctxmt::UsageError(std::string(name) + " must not be NULL");
}

char* dup_string(const std::string& s) {
  char* out = new char[s.size() + 1];
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ctxmt::DataError("cannot open " + path);
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ctxmt::UsageError(path + ": not valid JSON");
  return j;
}

std::ofstream open_output(const std::string& path) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ctxmt::DataError("cannot write " + path);
  return out;
}

struct Options {
  ctxmt::inference::TranslateOptions translate;
  json echo;
};

Options parse_options(const ctxmt::ModelBundle& bundle, const char* options_json) {
  Options o;
  o.translate.mode = bundle.train.mode;
  o.translate.window = bundle.state.config().context_window;
  json j = options_json ? json::parse(options_json) : json::object();
  if (!j.is_object()) throw ctxmt::UsageError("options must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    const auto& key = it.key();
    if (key == "mode") {
      o.translate.mode = ctxmt::parse_mode(it->get<std::string>());
    } else if (key == "window") {
      o.translate.window = ctxmt::parse_window(it->get<std::string>());
    } else if (key == "beam") {
      o.translate.beam = ctxmt::beam_config_from_json(*it);
    } else {
      throw ctxmt::UsageError("options: unknown key \"" + key + "\"");
    }
  }
  o.translate.beam.validate();
  const auto& w = o.translate.window;
  o.echo = {{"mode", ctxmt::mode_name(o.translate.mode)},
            {"window", std::to_string(w.previous) + "," + std::to_string(w.next)},
            {"beam", ctxmt::to_json(o.translate.beam)}};
  return o;
}

// Sentences of a hypothesis or reference file.
std::vector<std::string> read_sentences(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ctxmt::DataError("cannot open " + path);
  std::vector<std::string> out;
  std::string line;
  std::size_t number = 0;
  bool jsonl = false, decided = false;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!decided) {
      if (line.empty()) continue;
      jsonl = line.front() == '{';
      decided = true;
    }
    if (!jsonl) {
      out.push_back(line);
      continue;
    }
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const json j = json::parse(line, nullptr, false);
    const std::string where = path + ":" + std::to_string(number);
    if (j.is_discarded() || !j.is_object()) throw ctxmt::DataError(where + ": malformed JSON line");
    if (j.contains("header")) continue;
    const char* key = j.contains("hyp") ? "hyp" : "tgt";
    if (!j.contains(key) || !j[key].is_array()) throw ctxmt::DataError(where + ": no \"hyp\" or \"tgt\" array");
    for (const auto& s : j[key]) {
      if (!s.is_string()) throw ctxmt::DataError(where + ": sentences must be strings");
      out.push_back(s.get<std::string>());
    }
  }
  return out;
}

}  // namespace

extern "C" {

const char* ctxmt_version(void) { return "0.1.0"; }

const char* ctxmt_last_error(void) { return g_last_error.c_str(); }

void ctxmt_string_free(char* s) { delete[] s; }

ctxmt_status ctxmt_config_resolve(const char* config_path, const char* const* overrides,
                                  size_t override_count, char** effective_json) {
  return guarded([&] {
    require_arg(effective_json, "effective_json");
    json doc = config_path ? read_json_file(config_path) : json::object();
    if (!doc.is_object()) throw ctxmt::UsageError("config file must hold a JSON object");
    for (size_t i = 0; i < override_count; ++i) {
      require_arg(overrides[i], "override");
      ctxmt::apply_override(doc, overrides[i]);
    }
    *effective_json = dup_string(ctxmt::to_json(ctxmt::run_config_from_json(doc)).dump());
  });
}

ctxmt_status ctxmt_train(const char* corpus_path, const char* config_json, const char* out_dir,
                         const char* resume_path, ctxmt_step_callback callback, void* user,
                         char** summary_json) {
  return guarded([&] {
    require_arg(corpus_path, "corpus_path");
    require_arg(config_json, "config_json");
    require_arg(out_dir, "out_dir");
    const auto run = ctxmt::run_config_from_json(json::parse(config_json));
    ctxmt::training::TrainRequest req;
    req.model = run.model;
    req.train = run.train;
    req.data = run.data;
    req.out_dir = out_dir;
    if (resume_path) req.resume = resume_path;
    if (callback) {
      req.on_step = [callback, user](const json& line) { callback(line.dump().c_str(), user); };
    }
    const auto corpus = ctxmt::data::load_corpus(corpus_path);
    const auto result = ctxmt::training::train(corpus, req);
    if (summary_json) {
      *summary_json = dup_string(json{{"last_step", result.last_step},
                                      {"stopped_early", result.stopped_early},
                                      {"final_checkpoint", result.final_checkpoint},
                                      {"metrics", result.metrics_path}}
                                     .dump());
    }
  });
}

ctxmt_status ctxmt_model_load(const char* checkpoint_path, ctxmt_model** model) {
  return guarded([&] {
    require_arg(checkpoint_path, "checkpoint_path");
    require_arg(model, "model");
    *model = nullptr;
    auto m = std::make_unique<ctxmt_model>();
    m->bundle = ctxmt::load_bundle(checkpoint_path);
    m->path = checkpoint_path;
    *model = m.release();
  });
}

void ctxmt_model_free(ctxmt_model* model) { delete model; }

ctxmt_status ctxmt_model_info(const ctxmt_model* model, char** info_json) {
  return guarded([&] {
    require_arg(model, "model");
    require_arg(info_json, "info_json");
    json info = ctxmt::bundle_meta(model->bundle);
    info.erase("vocab");
    info.erase("merges");
    info["vocab_size"] = model->bundle.vocab.size();
    info["checkpoint"] = model->path;
    *info_json = dup_string(info.dump());
  });
}

ctxmt_status ctxmt_translate_file(const ctxmt_model* model, const char* corpus_path,
                                  const char* options_json, const char* out_path) {
  return guarded([&] {
    require_arg(model, "model");
    require_arg(corpus_path, "corpus_path");
    require_arg(out_path, "out_path");
    const auto& bundle = model->bundle;
    const auto options = parse_options(bundle, options_json);
    const auto corpus = ctxmt::data::load_corpus(corpus_path);
    const auto hyps = ctxmt::inference::translate_corpus(bundle, corpus, options.translate);

    auto out = open_output(out_path);
    json header = {{"format", "ctxmt-translations"},
                   {"version", 1},
                   {"checkpoint", model->path},
                   {"step", bundle.step},
                   {"model", ctxmt::to_json(bundle.state.config())},
                   {"data", ctxmt::to_json(bundle.data)},
                   {"translate", options.echo}};
    out << json{{"header", header}}.dump() << '\n';
    for (std::size_t d = 0; d < corpus.documents.size(); ++d) {
      const auto& doc = corpus.documents[d];
      json line = {{"doc_id", doc.doc_id}, {"src", doc.src}};
      if (!doc.tgt.empty()) line["tgt"] = doc.tgt;
      line["hyp"] = hyps[d];
      out << line.dump() << '\n';
    }
    if (!out.flush()) throw ctxmt::DataError("cannot write " + std::string(out_path));
  });
}

ctxmt_status ctxmt_inspect(const ctxmt_model* model, const char* corpus_path, size_t index,
                           const char* options_json, const char* out_path) {
  return guarded([&] {
    require_arg(model, "model");
    require_arg(corpus_path, "corpus_path");
    require_arg(out_path, "out_path");
    const auto& bundle = model->bundle;
    const auto options = parse_options(bundle, options_json);
    const auto corpus = ctxmt::data::load_corpus(corpus_path);
    const std::size_t total = corpus.sentence_count();
    if (index >= total) {
      throw ctxmt::UsageError("index " + std::to_string(index) + " out of range: corpus has " +
                              std::to_string(total) + " sentences");
    }
    std::size_t skip = index;
    const ctxmt::data::Document* doc = nullptr;
    for (const auto& d : corpus.documents) {
      if (skip < d.src.size()) {
        doc = &d;
        break;
      }
      skip -= d.src.size();
    }
    ctxmt::data::Document bare{doc->doc_id, doc->src, {}};
    auto examples = ctxmt::data::build_examples(ctxmt::data::DocumentCorpus{{bare}}, bundle.vocab,
                                                bundle.tokenizer, options.translate.window);
    auto example = examples.at(skip);
    if (options.translate.mode == ctxmt::TrainMode::kBi) {
      const auto pass = ctxmt::inference::first_pass(bundle, *doc, options.translate.beam);
      const auto& w = options.translate.window;
      const std::size_t first = skip >= w.previous ? skip - w.previous : 0;
      const std::size_t last = std::min(examples.size() - 1, skip + w.next);
      std::vector<std::vector<ctxmt::TokenId>> ctx;
      for (std::size_t j = first; j <= last; ++j)
        if (j != skip) ctx.push_back(pass[j]);
      example = ctxmt::data::with_target_context(std::move(example), std::move(ctx));
    }
    auto trace = ctxmt::inference::selection_trace(bundle, example, options.translate.mode);
    trace["doc_id"] = doc->doc_id;
    trace["sentence"] = skip;
    trace["options"] = options.echo;
    ctxmt::inference::export_trace(trace, out_path);
  });
}

ctxmt_status ctxmt_bleu_files(const char* hyp_path, const char* ref_path, int smooth, double* bleu) {
  return guarded([&] {
    require_arg(hyp_path, "hyp_path");
    require_arg(ref_path, "ref_path");
    require_arg(bleu, "bleu");
    const auto hyps = read_sentences(hyp_path);
    const auto refs = read_sentences(ref_path);
    *bleu = ctxmt::inference::corpus_bleu(hyps, refs, smooth != 0);
  });
}

}  // extern "C"
