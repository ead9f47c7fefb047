#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include "chat_fixtures.hpp"
#include "doctest.h"
#include "multifuse/chat.hpp"

using namespace multifuse;

namespace {

std::string fixture_path(const std::string& name) {
  return std::string(MULTIFUSE_TEST_DIR) + "/fixtures/" + name;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("clean_utterance handles the documented annotation forms") {
  CHECK(clean_utterance("the <boy> [//] the boy falls .") == "the the boy falls .");
  CHECK(clean_utterance("&-um (.) cookies .") == "cookies .");
  CHECK(clean_utterance("") == "");
  CHECK(clean_utterance("Mhm &-uh THE curtains (...) are open .") == "mhm the curtains are open .");
  CHECK(clean_utterance("he said xxx and left") == "he said and left");
  CHECK(clean_utterance("keep <these words> here") == "keep these words here");
  CHECK(clean_utterance("tail code [+ exc]") == "tail code");
  CHECK(clean_utterance("a [x 2] b [* s:r] c") == "a b c");
  CHECK(clean_utterance("   spaced    out\ttokens ") == "spaced out tokens");
  CHECK(clean_utterance("\x15" "120_340" "\x15" "inside bullets") == "inside bullets");
}

TEST_CASE("clean_utterance is idempotent on fixture lines and random annotations") {
  for (const auto& fx : chat_fixtures::par_expectations()) {
    std::istringstream in(slurp(fixture_path(fx.file)));
    std::string line;
    while (std::getline(in, line)) {
      const std::string once = clean_utterance(line);
      CHECK(clean_utterance(once) == once);
    }
  }
}

TEST_CASE("fixture corpus parses to the expected utterance lists") {
  for (const auto& fx : chat_fixtures::par_expectations()) {
    CAPTURE(fx.file);
    const Transcript t = parse_chat(slurp(fixture_path(fx.file)), {"PAR"}, fx.file);
    REQUIRE(t.utterances.size() == fx.utterances.size());
    for (std::size_t i = 0; i < fx.utterances.size(); ++i) {
      CHECK(t.utterances[i].speaker == fx.utterances[i].first);
      CHECK(t.utterances[i].text == fx.utterances[i].second);
    }
  }
}

TEST_CASE("speaker filter keeps file order and both speakers when asked") {
  const std::string raw = slurp(fixture_path("f02_basic.cha"));
  const Transcript both = parse_chat(raw, {"PAR", "INV"});
  REQUIRE(both.utterances.size() == 2);
  CHECK(both.utterances[0].speaker == "PAR");
  CHECK(both.utterances[0].text == "the boy is on the stool .");
  CHECK(both.utterances[1].speaker == "INV");
  CHECK(both.utterances[1].text == "mhm .");

  const Transcript inv_only = parse_chat(raw, {"INV"});
  REQUIRE(inv_only.utterances.size() == 1);
  CHECK(inv_only.utterances[0].speaker == "INV");
}

TEST_CASE("parse errors carry line numbers") {
  CHECK_THROWS_WITH_AS(parse_chat("@Begin\ngarbage line\n", {"PAR"}),
                       "parse_chat: line 2: not a header, tier, or continuation",
                       std::runtime_error);
  CHECK_THROWS_WITH_AS(parse_chat("\tcontinuation first\n", {"PAR"}),
                       "parse_chat: line 1: continuation without an open tier", std::runtime_error);
  CHECK_THROWS_WITH_AS(parse_chat("*PAR missing separator\n", {"PAR"}),
                       "parse_chat: line 1: main tier missing ':' followed by tab",
                       std::runtime_error);
}

TEST_CASE("tokenize produces CLS/SEP framing with padding and truncation") {
  Vocab v;
  v.add("the");   // 4
  v.add("boy");   // 5
  v.add("falls"); // 6

  Transcript t;
  t.utterances.push_back({"PAR", "the boy falls"});
  const TokenSequence seq = tokenize(t, v, 6);
  CHECK(seq.ids == std::vector<int>{2, 4, 5, 6, 3, 0});
  CHECK(seq.mask == std::vector<int>{1, 1, 1, 1, 1, 0});
  CHECK(seq.vocab_size == 7);

  Transcript empty;
  const TokenSequence es = tokenize(empty, v, 4);
  CHECK(es.ids == std::vector<int>{2, 3, 0, 0});
  CHECK(es.mask == std::vector<int>{1, 1, 0, 0});

  Transcript longer;
  longer.utterances.push_back({"PAR", "the boy falls the boy falls"});
  const TokenSequence ts = tokenize(longer, v, 4);
  CHECK(ts.ids == std::vector<int>{2, 4, 5, 6});
  CHECK(ts.mask == std::vector<int>{1, 1, 1, 1});

  CHECK_THROWS_AS(tokenize(t, v, 1), std::invalid_argument);
}

TEST_CASE("unknown words map to UNK and terminal punctuation is stripped") {
  Vocab v;
  v.add("cookies");
  Transcript t;
  t.utterances.push_back({"PAR", "cookies everywhere ."});
  const TokenSequence seq = tokenize(t, v, 6);
  // "cookies" -> 4, "everywhere" -> UNK, "." strips to nothing
  CHECK(seq.ids == std::vector<int>{2, 4, 1, 3, 0, 0});
  CHECK(seq.mask == std::vector<int>{1, 1, 1, 1, 0, 0});
}

TEST_CASE("detokenize restores in-vocabulary words up to truncation") {
  const std::vector<std::string> texts{"the boy falls .", "the jar is open ."};
  Vocab v = build_vocab(texts);
  Transcript t;
  t.utterances.push_back({"PAR", "the boy falls ."});
  t.utterances.push_back({"PAR", "the jar is open ."});
  const TokenSequence seq = tokenize(t, v, 16);
  CHECK(detokenize(seq, v) == "the boy falls the jar is open");
}

TEST_CASE("tokens.jsonl and vocab.json round-trip") {
  const auto dir = std::filesystem::temp_directory_path();
  const std::string tokens_path = (dir / "multifuse_tokens.jsonl").string();
  const std::string vocab_path = (dir / "multifuse_vocab.json").string();

  std::vector<TokenRecord> records{{"s1", "the boy", {2, 4, 5, 3}, {1, 1, 1, 1}},
                                   {"s2", "boy", {2, 5, 3, 0}, {1, 1, 1, 0}}};
  write_tokens_jsonl(tokens_path, records);
  const auto back = read_tokens_jsonl(tokens_path);
  REQUIRE(back.size() == 2);
  CHECK(back[0].id == "s1");
  CHECK(back[0].text == "the boy");
  CHECK(back[0].ids == records[0].ids);
  CHECK(back[1].mask == records[1].mask);

  Vocab v = build_vocab({"the boy"});
  save_vocab(vocab_path, v);
  const Vocab lv = load_vocab(vocab_path);
  CHECK(lv.size() == v.size());
  CHECK(lv.id_of("the") == v.id_of("the"));
  CHECK(lv.id_of("boy") == v.id_of("boy"));
  CHECK(lv.id_of("absent") == Vocab::kUnk);

  std::filesystem::remove(tokens_path);
  std::filesystem::remove(vocab_path);
}
