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

// ctxmt: train, translate, evaluate and inspect context-aware translation
// models. Exit codes: 0 success, 1 usage, 2 data error, 3 numeric failure.

#include <cstdio>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ctxmt/ctxmt.h"
#include "json.hpp"

namespace {

using nlohmann::json;

struct ModelDeleter {
  void operator()(ctxmt_model* m) const { ctxmt_model_free(m); }
};
using ModelHandle = std::unique_ptr<ctxmt_model, ModelDeleter>;

struct OwnedString {
  char* p = nullptr;
  ~OwnedString() { ctxmt_string_free(p); }
  std::string str() const { return p ? p : ""; }
};

int fail(ctxmt_status status) {
  std::cerr << "ctxmt: error: " << ctxmt_last_error() << '\n';
  return static_cast<int>(status);
}

int usage(const std::string& message) {
  std::cerr << "ctxmt: error: " << message << '\n';
  return CTXMT_USAGE_ERROR;
}

int resolve_config(const std::string& config_path, const std::vector<std::string>& overrides,
                   std::string& effective) {
  std::vector<const char*> argv;
  for (const auto& o : overrides) argv.push_back(o.c_str());
  OwnedString out;
  auto status = ctxmt_config_resolve(config_path.empty() ? nullptr : config_path.c_str(), argv.data(),
                                     argv.size(), &out.p);
  if (status != CTXMT_OK) return fail(status);
  effective = out.str();
  return 0;
}

struct TrainArgs {
  std::string corpus, config, out, resume, mode;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> set;
  std::size_t log_every = 100;
};

void log_step(const char* line, void* user) {
  const auto every = *static_cast<std::size_t*>(user);
  if (every == 0) return;
  const auto j = json::parse(line);
  const auto step = j["step"].get<std::size_t>();
  if (step % every != 0) return;
  std::fprintf(stderr, "step %zu  epoch %zu  loss_all %.4f  lr %.3g  acc %.4f\n", step,
               j["epoch"].get<std::size_t>(), j["loss_all"].get<double>(), j["lr"].get<double>(),
               j["accuracy"].get<double>());
}

int run_train(TrainArgs& a) {
  auto overrides = a.set;
  if (!a.mode.empty()) overrides.push_back("train.mode=" + a.mode);
  if (a.seed) overrides.push_back("train.seed=" + std::to_string(*a.seed));
  std::string effective;
  if (int rc = resolve_config(a.config, overrides, effective)) return rc;
  std::cerr << "effective config: " << effective << '\n';
  OwnedString summary;
  auto status = ctxmt_train(a.corpus.c_str(), effective.c_str(), a.out.c_str(),
                            a.resume.empty() ? nullptr : a.resume.c_str(), log_step, &a.log_every,
                            &summary.p);
  if (status != CTXMT_OK) return fail(status);
  std::cout << summary.str() << '\n';
  return 0;
}

struct DecodeArgs {
  std::string corpus, checkpoint, out, mode, window;
  std::optional<std::size_t> beam;
  std::optional<double> length_penalty;
  std::size_t index = 0;
};

int load_model(const std::string& path, ModelHandle& model) {
  ctxmt_model* raw = nullptr;
  auto status = ctxmt_model_load(path.c_str(), &raw);
  if (status != CTXMT_OK) return fail(status);
  model.reset(raw);
  return 0;
}

std::string decode_options(const DecodeArgs& a) {
  json o = json::object();
  if (!a.mode.empty()) o["mode"] = a.mode;
  if (!a.window.empty()) o["window"] = a.window;
  if (a.beam || a.length_penalty) {
    o["beam"] = json::object();
    if (a.beam) o["beam"]["beam"] = *a.beam;
    if (a.length_penalty) o["beam"]["length_penalty"] = *a.length_penalty;
  }
  return o.dump();
}

void echo_model(const ctxmt_model* model, const std::string& options) {
  OwnedString info;
  if (ctxmt_model_info(model, &info.p) == CTXMT_OK) std::cerr << "model: " << info.str() << '\n';
  std::cerr << "options: " << options << '\n';
}

int run_translate(const DecodeArgs& a) {
  ModelHandle model;
  if (int rc = load_model(a.checkpoint, model)) return rc;
  const auto options = decode_options(a);
  echo_model(model.get(), options);
  auto status = ctxmt_translate_file(model.get(), a.corpus.c_str(), options.c_str(), a.out.c_str());
  if (status != CTXMT_OK) return fail(status);
  return 0;
}

int run_inspect(const DecodeArgs& a) {
  ModelHandle model;
  if (int rc = load_model(a.checkpoint, model)) return rc;
  const auto options = decode_options(a);
  echo_model(model.get(), options);
  auto status = ctxmt_inspect(model.get(), a.corpus.c_str(), a.index, options.c_str(), a.out.c_str());
  if (status != CTXMT_OK) return fail(status);
  return 0;
}

int run_evaluate(const std::string& hyp, const std::string& ref, bool smooth) {
  double bleu = 0.0;
  auto status = ctxmt_bleu_files(hyp.c_str(), ref.c_str(), smooth ? 1 : 0, &bleu);
  if (status != CTXMT_OK) return fail(status);
  std::printf("BLEU = %.2f\n", bleu);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Context-aware translation with attention-vote context selection"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(ctxmt_version()));

  TrainArgs train;
  auto* cmd_train = app.add_subcommand("train", "Train a model");
  cmd_train->add_option("--corpus", train.corpus, "JSONL corpus")->required()->check(CLI::ExistingFile);
  cmd_train->add_option("--config", train.config, "JSON config (sections model, train, data, beam)")
      ->check(CLI::ExistingFile);
  cmd_train->add_option("--out", train.out, "Output directory")->required();
  cmd_train->add_option("--mode", train.mode, "Training objective")->check(CLI::IsMember({"mono", "bi"}));
  cmd_train->add_option("--seed", train.seed, "Random seed");
  cmd_train->add_option("--set", train.set, "Config override section.key=value (repeatable)");
  cmd_train->add_option("--resume", train.resume, "Continue from a checkpoint")->check(CLI::ExistingFile);
  cmd_train->add_option("--log-every", train.log_every, "Progress line every N steps (0: quiet)");

  DecodeArgs translate;
  auto* cmd_translate = app.add_subcommand("translate", "Translate a corpus");
  cmd_translate->add_option("--corpus", translate.corpus, "JSONL corpus")->required()->check(CLI::ExistingFile);
  cmd_translate->add_option("--checkpoint", translate.checkpoint, "Checkpoint file")
      ->required()
      ->check(CLI::ExistingFile);
  cmd_translate->add_option("--out", translate.out, "Output JSONL")->required();
  cmd_translate->add_option("--mode", translate.mode, "mono or bi (two-pass)")
      ->check(CLI::IsMember({"mono", "bi"}));
  cmd_translate->add_option("--beam", translate.beam, "Beam size");
  cmd_translate->add_option("--length-penalty", translate.length_penalty, "Length penalty exponent");
  cmd_translate->add_option("--window", translate.window, "Context window P,N (1,0 online; 1,1 offline)");

  std::string hyp, ref;
  bool smooth = false;
  auto* cmd_evaluate = app.add_subcommand("evaluate", "Corpus BLEU");
  cmd_evaluate->add_option("--hyp", hyp, "Hypotheses (translation JSONL or plain text)")
      ->required()
      ->check(CLI::ExistingFile);
  cmd_evaluate->add_option("--ref", ref, "References (corpus JSONL or plain text)")
      ->required()
      ->check(CLI::ExistingFile);
  cmd_evaluate->add_flag("--smooth", smooth, "Add-one smoothing of zero n-gram counts");

  DecodeArgs inspect;
  auto* cmd_inspect = app.add_subcommand("inspect", "Export the selection trace of one sentence");
  cmd_inspect->add_option("--corpus", inspect.corpus, "JSONL corpus")->required()->check(CLI::ExistingFile);
  cmd_inspect->add_option("--checkpoint", inspect.checkpoint, "Checkpoint file")
      ->required()
      ->check(CLI::ExistingFile);
  cmd_inspect->add_option("--index", inspect.index, "Sentence index in corpus order")->required();
  cmd_inspect->add_option("--out", inspect.out, "Trace JSON")->required();
  cmd_inspect->add_option("--mode", inspect.mode, "mono or bi")->check(CLI::IsMember({"mono", "bi"}));
  cmd_inspect->add_option("--window", inspect.window, "Context window P,N");

  std::string config_path;
  std::vector<std::string> config_set;
  auto* cmd_config = app.add_subcommand("config", "Print the effective config");
  cmd_config->add_option("--config", config_path, "JSON config")->check(CLI::ExistingFile);
  cmd_config->add_option("--set", config_set, "Config override section.key=value (repeatable)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return CTXMT_USAGE_ERROR;
  }

  try {
    if (*cmd_train) return run_train(train);
    if (*cmd_translate) return run_translate(translate);
    if (*cmd_evaluate) return run_evaluate(hyp, ref, smooth);
    if (*cmd_inspect) return run_inspect(inspect);
    if (*cmd_config) {
      std::string effective;
      if (int rc = resolve_config(config_path, config_set, effective)) return rc;
      std::cout << json::parse(effective).dump(2) << '\n';
      return 0;
    }
  } catch (const std::exception& e) {
    return usage(e.what());
  }
  return usage("no subcommand");
}
