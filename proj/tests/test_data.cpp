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

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "ctxmt/data.hpp"
#include "ctxmt/error.hpp"
#include "doctest.h"

using namespace ctxmt;
using namespace ctxmt::data;

namespace {

DocumentCorpus parse(const std::string& text) {
  std::istringstream is(text);
  return parse_corpus(is, "mem");
}

std::string read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

// Every sentence is "d<doc> s<k> w..." so context origin is recoverable.
DocumentCorpus random_corpus(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> docs(1, 6), sents(1, 7), words(0, 4);
  DocumentCorpus c;
  const int n = docs(rng);
  for (int d = 0; d < n; ++d) {
    Document doc;
    doc.doc_id = "doc" + std::to_string(d);
    const int k = sents(rng);
    for (int s = 0; s < k; ++s) {
      std::string text = "d" + std::to_string(d) + " s" + std::to_string(s);
      for (int w = words(rng); w > 0; --w) text += " w" + std::to_string(w);
      doc.src.push_back(text);
      doc.tgt.push_back("T" + text);
    }
    c.documents.push_back(doc);
  }
  return c;
}

}  // namespace

TEST_CASE("corpus parsing") {
  CHECK(parse("").documents.empty());
  auto c = parse(R"({"doc_id": "a", "src": ["x y", "y", "z"], "tgt": ["X Y", "Y", "Z"]})"
                 "\n\n"
                 R"({"doc_id": "b", "src": ["q"]})");
  REQUIRE(c.documents.size() == 2);
  CHECK(c.documents[0].src.size() == 3);
  CHECK(c.sentence_count() == 4);
  CHECK_FALSE(c.has_targets());

  try {
    parse("{\"doc_id\": \"ok\", \"src\": [\"a\"]}\n{\"doc_id\": \"bad7\", \"src\": [\"a\", \"b\", \"c\"], "
          "\"tgt\": [\"A\", \"B\"]}");
    FAIL("expected a DataError");
  } catch (const DataError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("bad7") != std::string::npos);
    CHECK(msg.find("mem:2") != std::string::npos);
  }
  CHECK_THROWS_AS(parse("{not json"), DataError);
  CHECK_THROWS_AS(parse(R"({"src": ["a"]})"), DataError);
  CHECK_THROWS_AS(parse(R"({"doc_id": "a", "src": [1]})"), DataError);
  CHECK_THROWS_AS(parse(R"({"doc_id": "a", "src": ["a"], "extra": 1})"), DataError);
  CHECK_THROWS_AS(load_corpus("/nonexistent/corpus.jsonl"), DataError);
}

TEST_CASE("vocabulary") {
  auto c = parse(R"({"doc_id": "a", "src": ["a b", "a"]})");
  Tokenizer tok;
  auto v = Vocabulary::build(c, tok, 100);
  CHECK(v.size() == Vocabulary::kReserved + 2);
  CHECK(v.id("a") < v.id("b"));
  CHECK(v.id("unseen") == Vocabulary::kUnk);
  CHECK(v.token(Vocabulary::kSep) == "<sep>");
  CHECK_THROWS_AS(Vocabulary::build(c, tok, 3), UsageError);

  SUBCASE("ties are lexicographic and the cap is honoured") {
    auto t = parse(R"({"doc_id": "a", "src": ["c b a c"]})");
    auto vt = Vocabulary::build(t, tok, Vocabulary::kReserved + 2);
    CHECK(vt.tokens().back() == "a");
    CHECK(vt.id("c") == 5);
    CHECK(vt.id("b") == Vocabulary::kUnk);
  }
  SUBCASE("save and load are bit-exact") {
    const auto dir = std::filesystem::temp_directory_path();
    const auto p1 = (dir / "ctxmt_vocab_a.txt").string(), p2 = (dir / "ctxmt_vocab_b.txt").string();
    v.save(p1);
    auto back = Vocabulary::load(p1);
    CHECK(back == v);
    back.save(p2);
    CHECK(read_file(p1) == read_file(p2));
    std::ofstream(p2) << "garbage\n";
    CHECK_THROWS_AS(Vocabulary::load(p2), DataError);
    std::filesystem::remove(p1);
    std::filesystem::remove(p2);
  }
  SUBCASE("decode inverts encode modulo UNK") {
    auto ids = v.encode(tok.tokenize("a zz b"));
    CHECK(ids == std::vector<TokenId>{v.id("a"), Vocabulary::kUnk, v.id("b")});
    ids.insert(ids.begin(), Vocabulary::kBos);
    ids.push_back(Vocabulary::kEos);
    ids.push_back(v.id("a"));
    CHECK(tok.detokenize(v.decode(ids)) == "a <unk> b");
  }
}

TEST_CASE("subword merges") {
  auto c = parse(R"({"doc_id": "a", "src": ["lower lowest low low"]})");
  auto tok = Tokenizer::learn(c, 3);
  REQUIRE(tok.merges().size() == 3);
  CHECK(tok.merges()[0] == std::pair<std::string, std::string>{"l", "o"});
  CHECK(tok.merges()[1] == std::pair<std::string, std::string>{"lo", "w"});
  auto pieces = tok.tokenize("lowest slow");
  CHECK(tok.detokenize(pieces) == "lowest slow");
  CHECK(pieces.front() == "low@@");
  CHECK(Tokenizer::learn(c, 0).tokenize("lowest") == std::vector<std::string>{"lowest"});
  // repeated learning is deterministic
  CHECK(Tokenizer::learn(c, 3).merges() == tok.merges());
}

TEST_CASE("context windows") {
  auto c = parse(R"({"doc_id": "a", "src": ["one", "two", "three"], "tgt": ["1", "2", "3"]})"
                 "\n"
                 R"({"doc_id": "b", "src": ["solo"], "tgt": ["S"]})");
  Tokenizer tok;
  auto v = Vocabulary::build(c, tok, 100);
  auto ex = build_examples(c, v, tok, {1, 1});
  REQUIRE(ex.size() == 4);
  CHECK(ex[1].src_context == std::vector<std::vector<TokenId>>{{v.id("one")}, {v.id("three")}});
  CHECK(ex[1].tgt_context == std::vector<std::vector<TokenId>>{{v.id("1")}, {v.id("3")}});
  CHECK(ex[0].src_context.size() == 1);
  CHECK(ex[3].src_context.empty());
  CHECK(ex[3].target == std::vector<TokenId>{v.id("S")});

  CHECK(build_examples(c, v, tok, {1, 0})[1].src_context ==
        std::vector<std::vector<TokenId>>{{v.id("one")}});
  CHECK(build_examples(c, v, tok, {2, 2})[0].src_context.size() == 2);

  auto cat = source_concatenation(ex[1]);
  CHECK(cat.ids == std::vector<TokenId>{v.id("two"), Vocabulary::kEos, v.id("one"), Vocabulary::kSep,
                                        v.id("three"), Vocabulary::kSep});
  CHECK(cat.layout.p == 2);
  CHECK(cat.layout.positions == std::vector<std::size_t>{0, 1, 0, 1, 0, 1});
  CHECK(cat.layout.context_total == 4);
  auto tcat = target_concatenation(ex[1]);
  CHECK(tcat.layout.segment_ids.back() == selection::Segment::kTargetContext);

  auto no_tgt = parse(R"({"doc_id": "x", "src": ["one", "two"]})");
  auto ex2 = build_examples(no_tgt, v, tok, {1, 1});
  CHECK_FALSE(ex2[0].has_tgt_context);
  CHECK_THROWS_AS(target_concatenation(ex2[0]), UsageError);
  auto filled = with_target_context(ex2[0], {{v.id("2")}});
  CHECK(target_concatenation(filled).ids.size() == 4);
}

TEST_CASE("windows never cross documents") {
  std::mt19937_64 rng(5);
  Tokenizer tok;
  for (int trial = 0; trial < 50; ++trial) {
    auto c = random_corpus(rng);
    auto v = Vocabulary::build(c, tok, 1000);
    std::uniform_int_distribution<std::size_t> w(0, 3);
    const ContextWindow window{w(rng), w(rng)};
    auto ex = build_examples(c, v, tok, window);
    REQUIRE(ex.size() == c.sentence_count());
    CHECK(build_examples(c, v, tok, window).size() == ex.size());
    std::size_t i = 0;
    for (const auto& doc : c.documents) {
      const std::string marker = "d" + doc.doc_id.substr(3);
      for (std::size_t k = 0; k < doc.src.size(); ++k, ++i) {
        CHECK(ex[i].doc_id == doc.doc_id);
        CHECK(ex[i].sentence_index == k);
        const std::size_t before = std::min(k, window.previous);
        const std::size_t after = std::min(doc.src.size() - 1 - k, window.next);
        CHECK(ex[i].src_context.size() == before + after);
        for (const auto& s : ex[i].src_context) CHECK(v.token(s.front()) == marker);
      }
    }
  }
}

TEST_CASE("batching") {
  std::mt19937_64 rng(9);
  Tokenizer tok;
  auto c = random_corpus(rng);
  auto v = Vocabulary::build(c, tok, 1000);
  auto ex = build_examples(c, v, tok, {1, 1});

  SUBCASE("single example") {
    auto b = make_batches(std::span(ex).first(1), 64);
    REQUIRE(b.size() == 1);
    CHECK(b[0].size() == 1);
  }
  SUBCASE("budget, padding and coverage") {
    const std::size_t budget = 16;
    auto batches = make_batches(ex, budget);
    std::vector<int> seen(ex.size(), 0);
    for (const auto& b : batches) {
      CHECK(b.target_tokens() <= budget);
      CHECK(b.has_tgt_context);
      for (std::size_t r = 0; r < b.size(); ++r) {
        ++seen[b.example_indices[r]];
        const auto& lay = b.src_layouts[r];
        auto row = b.src_row(r);
        CHECK(lay.size() == b.src_width);
        CHECK_NOTHROW(lay.validate());
        const auto real = source_concatenation(ex[b.example_indices[r]]);
        CHECK(lay.context_total == real.layout.context_total);
        for (std::size_t i = 0; i < b.src_width; ++i) {
          if (row[i] == Vocabulary::kPad) {
            CHECK(lay.alive[i] == 0);
            CHECK_FALSE(lay.is_candidate(i));
          }
        }
        auto dec = b.decoder_row(r);
        auto lab = b.label_row(r);
        CHECK(dec[0] == Vocabulary::kBos);
        const auto& t = ex[b.example_indices[r]].target;
        CHECK(lab[t.size()] == Vocabulary::kEos);
        CHECK(std::equal(t.begin(), t.end(), dec.begin() + 1));
      }
    }
    for (int s : seen) CHECK(s == 1);
  }
  SUBCASE("an example larger than the budget") {
    CHECK_THROWS_AS(make_batches(ex, 1), UsageError);
  }
}
