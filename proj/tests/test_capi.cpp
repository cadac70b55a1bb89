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

// Exercises the shared library through its C surface and the ctxmt binary
// through its exit codes and outputs.

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "ctxmt/ctxmt.h"
#include "doctest.h"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Workdir {
  fs::path root;
  explicit Workdir(const std::string& name) : root(fs::temp_directory_path() / ("ctxmt_capi_" + name)) {
    fs::remove_all(root);
    fs::create_directories(root);
  }
  ~Workdir() { fs::remove_all(root); }
  std::string operator/(const std::string& leaf) const { return (root / leaf).string(); }
};

std::string slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

void write_file(const std::string& path, const std::string& text) { std::ofstream(path) << text; }

// Three-sentence documents over a ten-word vocabulary; target copies source.
void write_corpus(const std::string& path, int documents, bool with_targets = true) {
  std::mt19937 rng(7);
  std::ofstream out(path);
  for (int d = 0; d < documents; ++d) {
    std::vector<std::string> src;
    for (int s = 0; s < 3; ++s) {
      std::string line;
      for (int w = 0; w < 4; ++w) line += (w ? " w" : "w") + std::to_string(rng() % 10);
      src.push_back(line);
    }
    json doc = {{"doc_id", "d" + std::to_string(d)}, {"src", src}};
    if (with_targets) doc["tgt"] = src;
    out << doc.dump() << '\n';
  }
}

const json kSmallConfig = {
    {"model", {{"d_model", 16}, {"d_ffn", 32}, {"heads", 2}, {"n_selection", 2}, {"decoder_layers", 1},
               {"max_positions", 32}}},
    {"train", {{"max_steps", 6}, {"warmup_steps", 3}, {"max_tokens", 48}, {"checkpoint_every", 3}}}};

std::string resolve(const json& base, std::vector<std::string> overrides = {}) {
  std::vector<const char*> argv;
  for (const auto& o : overrides) argv.push_back(o.c_str());
  Workdir dir("resolve");
  write_file(dir / "cfg.json", base.dump());
  char* out = nullptr;
  REQUIRE(ctxmt_config_resolve((dir / "cfg.json").c_str(), argv.data(), argv.size(), &out) == CTXMT_OK);
  std::string s = out;
  ctxmt_string_free(out);
  return s;
}

std::string train_run(const Workdir& dir, const std::string& name, const std::string& config) {
  char* summary = nullptr;
  const auto status = ctxmt_train((dir / "corpus.jsonl").c_str(), config.c_str(), (dir / name).c_str(), nullptr,
                                   nullptr, nullptr, &summary);
  INFO(ctxmt_last_error());
  REQUIRE(status == CTXMT_OK);
  const auto j = json::parse(summary);
  ctxmt_string_free(summary);
  return j["final_checkpoint"].get<std::string>();
}

struct Model {
  ctxmt_model* p = nullptr;
  explicit Model(const std::string& path) {
    INFO(ctxmt_last_error());
    REQUIRE(ctxmt_model_load(path.c_str(), &p) == CTXMT_OK);
  }
  ~Model() { ctxmt_model_free(p); }
};

struct Run {
  int code;
  std::string out;
};

Run run_cli(const std::string& args) {
  const std::string cmd = std::string(CTXMT_CLI_PATH) + " " + args + " 2>/dev/null";
  Run r{0, ""};
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::array<char, 256> buf{};
  while (std::fgets(buf.data(), static_cast<int>(buf.size()), pipe)) r.out += buf.data();
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::vector<json> read_jsonl(const std::string& path) {
  std::vector<json> out;
  std::ifstream in(path);
  for (std::string line; std::getline(in, line);) out.push_back(json::parse(line));
  return out;
}

}  // namespace

TEST_CASE("config resolution merges overrides and rejects unknown keys") {
  const auto eff = json::parse(resolve(kSmallConfig, {"train.seed=42", "model.context_window.next=0",
                                                      "train.mode=bi"}));
  CHECK(eff["train"]["seed"] == 42);
  CHECK(eff["train"]["mode"] == "bi");
  CHECK(eff["model"]["context_window"]["next"] == 0);
  CHECK(eff["model"]["d_model"] == 16);
  CHECK(eff["beam"]["beam"] == 4);

  char* out = nullptr;
  CHECK(ctxmt_config_resolve(nullptr, nullptr, 0, &out) == CTXMT_OK);
  const auto defaults = json::parse(out);
  ctxmt_string_free(out);
  CHECK(defaults["model"]["n_unified"] == 1);
  CHECK(defaults["model"]["n_selection"] == 5);

  const char* bad[] = {"model.widht=3"};
  CHECK(ctxmt_config_resolve(nullptr, bad, 1, &out) == CTXMT_USAGE_ERROR);
  CHECK(std::string(ctxmt_last_error()).find("widht") != std::string::npos);
  const char* section[] = {"optimizer.lr=3"};
  CHECK(ctxmt_config_resolve(nullptr, section, 1, &out) == CTXMT_USAGE_ERROR);
  const char* range[] = {"model.q=1.5"};
  CHECK(ctxmt_config_resolve(nullptr, range, 1, &out) == CTXMT_USAGE_ERROR);
  CHECK(ctxmt_config_resolve("/nonexistent/cfg.json", nullptr, 0, &out) == CTXMT_DATA_ERROR);
  CHECK(ctxmt_config_resolve(nullptr, nullptr, 0, nullptr) == CTXMT_USAGE_ERROR);
  CHECK(ctxmt_config_resolve(nullptr, nullptr, 0, &out) == CTXMT_OK);
  CHECK(std::string(ctxmt_last_error()).empty());
  ctxmt_string_free(out);
}

TEST_CASE("train, translate, inspect and score through the C surface") {
  Workdir dir("flow");
  write_corpus(dir / "corpus.jsonl", 4);
  const auto config = resolve(kSmallConfig, {"train.mode=bi"});
  const auto ckpt = train_run(dir, "run", config);
  CHECK(fs::exists(dir / "run/step_000003.ckpt"));
  CHECK(fs::exists(dir / "run/metrics.jsonl"));

  Model model(ckpt);
  char* info = nullptr;
  REQUIRE(ctxmt_model_info(model.p, &info) == CTXMT_OK);
  const auto meta = json::parse(info);
  ctxmt_string_free(info);
  CHECK(meta["step"] == 6);
  CHECK(meta["train"]["mode"] == "bi");

  SUBCASE("translation output keeps the document structure") {
    const auto out = dir / "hyp.jsonl";
    REQUIRE(ctxmt_translate_file(model.p, (dir / "corpus.jsonl").c_str(), R"({"beam":{"beam":2}})",
                                 out.c_str()) == CTXMT_OK);
    const auto lines = read_jsonl(out);
    REQUIRE(lines.size() == 5);
    CHECK(lines[0]["header"]["format"] == "ctxmt-translations");
    CHECK(lines[0]["header"]["translate"]["mode"] == "bi");
    CHECK(lines[0]["header"]["model"]["d_model"] == 16);
    for (std::size_t d = 1; d < lines.size(); ++d) CHECK(lines[d]["hyp"].size() == lines[d]["src"].size());

    const auto again = dir / "hyp2.jsonl";
    REQUIRE(ctxmt_translate_file(model.p, (dir / "corpus.jsonl").c_str(), R"({"beam":{"beam":2}})",
                                 again.c_str()) == CTXMT_OK);
    CHECK(slurp(out) == slurp(again));

    double bleu = -1.0;
    REQUIRE(ctxmt_bleu_files(out.c_str(), (dir / "corpus.jsonl").c_str(), 0, &bleu) == CTXMT_OK);
    CHECK(bleu >= 0.0);
    CHECK(bleu <= 100.0);
  }
  SUBCASE("bad options") {
    const auto out = dir / "x.jsonl";
    const auto corpus = dir / "corpus.jsonl";
    CHECK(ctxmt_translate_file(model.p, corpus.c_str(), R"({"beams":2})", out.c_str()) == CTXMT_USAGE_ERROR);
    CHECK(ctxmt_translate_file(model.p, corpus.c_str(), R"({"window":"1"})", out.c_str()) == CTXMT_USAGE_ERROR);
    CHECK(ctxmt_translate_file(model.p, corpus.c_str(), R"({"beam":{"beam":0}})", out.c_str()) ==
          CTXMT_USAGE_ERROR);
    CHECK(ctxmt_translate_file(model.p, corpus.c_str(), "{", out.c_str()) == CTXMT_USAGE_ERROR);
    CHECK(ctxmt_translate_file(model.p, (dir / "missing.jsonl").c_str(), nullptr, out.c_str()) ==
          CTXMT_DATA_ERROR);
    CHECK(ctxmt_translate_file(nullptr, corpus.c_str(), nullptr, out.c_str()) == CTXMT_USAGE_ERROR);
  }
  SUBCASE("inspect") {
    const auto out = dir / "trace.json";
    REQUIRE(ctxmt_inspect(model.p, (dir / "corpus.jsonl").c_str(), 4, R"({"mode":"mono"})", out.c_str()) ==
            CTXMT_OK);
    const auto trace = json::parse(slurp(out));
    CHECK(trace["doc_id"] == "d1");
    CHECK(trace["sentence"] == 1);
    CHECK(trace["encoders"].size() == 1);
    REQUIRE(ctxmt_inspect(model.p, (dir / "corpus.jsonl").c_str(), 4, R"({"mode":"bi"})", out.c_str()) ==
            CTXMT_OK);
    CHECK(json::parse(slurp(out))["encoders"].size() == 2);
    CHECK(ctxmt_inspect(model.p, (dir / "corpus.jsonl").c_str(), 12, nullptr, out.c_str()) == CTXMT_USAGE_ERROR);
    CHECK(std::string(ctxmt_last_error()).find("out of range") != std::string::npos);
  }
}

TEST_CASE("q=0 model traces keep every token alive") {
  Workdir dir("q0");
  write_corpus(dir / "corpus.jsonl", 2);
  const auto ckpt = train_run(dir, "run", resolve(kSmallConfig, {"model.q=0", "train.max_steps=2"}));
  Model model(ckpt);
  const auto out = dir / "trace.json";
  REQUIRE(ctxmt_inspect(model.p, (dir / "corpus.jsonl").c_str(), 1, nullptr, out.c_str()) == CTXMT_OK);
  const auto trace = json::parse(slurp(out));
  for (const auto& layer : trace["encoders"][0]["selection_layers"]) {
    CHECK(layer["alive_ratio"] == 1.0);
    CHECK(layer["dropped"].empty());
  }
}

TEST_CASE("load and data errors map to status codes") {
  Workdir dir("errors");
  ctxmt_model* m = nullptr;
  CHECK(ctxmt_model_load((dir / "none.ckpt").c_str(), &m) == CTXMT_DATA_ERROR);
  CHECK(m == nullptr);
  write_file(dir / "junk.ckpt", "not a checkpoint");
  CHECK(ctxmt_model_load((dir / "junk.ckpt").c_str(), &m) == CTXMT_DATA_ERROR);
  ctxmt_model_free(nullptr);

  write_corpus(dir / "corpus.jsonl", 2, false);
  const auto config = resolve(kSmallConfig, {"train.mode=bi"});
  CHECK(ctxmt_train((dir / "corpus.jsonl").c_str(), config.c_str(), (dir / "run").c_str(), nullptr, nullptr,
                    nullptr, nullptr) == CTXMT_DATA_ERROR);

  write_file(dir / "a.txt", "a b c\n");
  write_file(dir / "b.txt", "a b c d\ne f g h\n");
  double bleu = 0.0;
  CHECK(ctxmt_bleu_files((dir / "a.txt").c_str(), (dir / "b.txt").c_str(), 0, &bleu) == CTXMT_DATA_ERROR);
  CHECK(ctxmt_bleu_files((dir / "b.txt").c_str(), (dir / "b.txt").c_str(), 0, &bleu) == CTXMT_OK);
  CHECK(bleu == 100.0);
}

TEST_CASE("command line") {
  Workdir dir("cli");
  write_corpus(dir / "corpus.jsonl", 3);
  write_file(dir / "cfg.json", kSmallConfig.dump());

  SUBCASE("evaluate") {
    auto r = run_cli("evaluate --hyp " + (dir / "corpus.jsonl") + " --ref " + (dir / "corpus.jsonl"));
    CHECK(r.code == 0);
    CHECK(r.out == "BLEU = 100.00\n");
    write_file(dir / "one.txt", "w1 w2\n");
    CHECK(run_cli("evaluate --hyp " + (dir / "one.txt") + " --ref " + (dir / "corpus.jsonl")).code == 2);
  }
  SUBCASE("usage errors") {
    CHECK(run_cli("").code == 1);
    CHECK(run_cli("translate --corpus " + (dir / "corpus.jsonl")).code == 1);
    CHECK(run_cli("train --corpus " + (dir / "corpus.jsonl") + " --out " + (dir / "r") + " --mode tri").code == 1);
    CHECK(run_cli("config --set model.nope=1").code == 1);
    CHECK(run_cli("--help").code == 0);
  }
  SUBCASE("training reruns reproduce the metrics log") {
    const std::string base = "train --corpus " + (dir / "corpus.jsonl") + " --config " + (dir / "cfg.json") +
                             " --seed 5 --log-every 0 --out ";
    REQUIRE(run_cli(base + (dir / "a")).code == 0);
    REQUIRE(run_cli(base + (dir / "b")).code == 0);
    CHECK(slurp(dir / "a/metrics.jsonl") == slurp(dir / "b/metrics.jsonl"));
    const auto header = json::parse(slurp(dir / "a/metrics.jsonl").substr(0, slurp(dir / "a/metrics.jsonl").find('\n')));
    CHECK(header["header"]["config"]["train"]["seed"] == 5);

    const auto ckpt = dir / "a/final.ckpt";
    auto r = run_cli("translate --corpus " + (dir / "corpus.jsonl") + " --checkpoint " + ckpt + " --out " +
                     (dir / "hyp.jsonl") + " --beam 1 --window 1,0");
    CHECK(r.code == 0);
    const auto lines = read_jsonl(dir / "hyp.jsonl");
    CHECK(lines[0]["header"]["translate"]["window"] == "1,0");
    CHECK(lines[0]["header"]["translate"]["beam"]["beam"] == 1);
    CHECK(run_cli("inspect --corpus " + (dir / "corpus.jsonl") + " --checkpoint " + ckpt + " --index 99 --out " +
                  (dir / "t.json"))
              .code == 1);
    CHECK(run_cli("translate --corpus " + (dir / "corpus.jsonl") + " --checkpoint " + (dir / "cfg.json") +
                  " --out " + (dir / "x.jsonl"))
              .code == 2);
  }
}
