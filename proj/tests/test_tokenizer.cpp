#include <fstream>
#include <random>

#include "doctest.h"
#include "testing.hpp"
#include "titok/tokenizer.hpp"

using namespace titok;

namespace {

const char* kBpe =
    "titok-bpe v1 tiny\n"
    "vocab 7\n"
    "a\nb\n\\s\nab\nabb\nb\\s\nc\n"
    "merges 3\n"
    "a b\n"
    "ab b\n"
    "b \\s\n";

}  // namespace

TEST_SUITE("tokenizer") {

TEST_CASE("char tokenizer uses code points") {
  auto tok = resolve_tokenizer("char");
  CHECK(tok->tag() == "char");
  auto ids = tok->tokenize("a\xC3\xA9z");
  CHECK(ids == std::vector<TokenId>{97, 233, 122});
  CHECK(tok->detokenize(ids) == "a\xC3\xA9z");
  CHECK(tok->piece_text(233) == "\xC3\xA9");
  CHECK_THROWS_AS(tok->tokenize("\xFF"), Error);
  CHECK_THROWS_AS(tok->piece_text(-1), Error);
}

TEST_CASE("merge tokenizer takes the longest piece") {
  auto tok = resolve_tokenizer("merge");
  CHECK(tok->tag() == "merge");
  auto ids = tok->tokenize(" the qzv");
  std::vector<std::string> pieces;
  for (auto id : ids) pieces.push_back(tok->piece_text(id));
  CHECK(pieces == std::vector<std::string>{" the ", "qzv"});
  CHECK(tok->tokenize("abc").size() == 1);
  CHECK(tok->tokenize("q") == std::vector<TokenId>{'q'});
  CHECK(tok.get() == resolve_tokenizer("merge").get());
}

TEST_CASE("round trip on the toy alphabet") {
  std::mt19937_64 rng(5);
  for (const char* tag : {"char", "merge"}) {
    auto tok = resolve_tokenizer(tag);
    for (int i = 0; i < 500; ++i) {
      std::string s;
      for (std::size_t j = 0, n = rng() % 40; j < n; ++j) s += " abcdefghijklmnopqrstuvwxyz"[rng() % 27];
      CHECK(tok->detokenize(tok->tokenize(s)) == s);
    }
  }
}

TEST_CASE("piece table parsing") {
  auto pieces = GreedyMergeTokenizer::parse_table("# comment\n\\sx\nq\nab\\\\\n\n");
  CHECK(pieces == std::vector<std::string>{" x", "ab\\"});
  CHECK_THROWS_AS(GreedyMergeTokenizer("t", {"ab", "ab"}), Error);
  CHECK(unescape_piece(escape_piece("a b\\c\n")) == "a b\\c\n");
}

TEST_CASE("bpe merges by rank") {
  auto tok = BpeTokenizer::parse(kBpe);
  CHECK(tok->tag() == "tiny");
  auto ids = tok->tokenize("abb ab c");
  std::vector<std::string> pieces;
  for (auto id : ids) pieces.push_back(tok->piece_text(id));
  // "a b" (rank 0) then "ab b" (rank 1) beat "b \s" (rank 2).
  CHECK(pieces == std::vector<std::string>{"abb", " ", "ab", " ", "c"});
  CHECK(tok->detokenize(ids) == "abb ab c");
  CHECK_THROWS_AS(tok->tokenize("d"), Error);
}

TEST_CASE("bpe file registry") {
  auto dir = testing::scratch_dir("bpe");
  const std::string path = (dir / "tiny.bpe").string();
  { std::ofstream(path) << kBpe; }
  auto tok = resolve_tokenizer("file:" + path);
  CHECK(tok->tag() == "file:" + path);
  CHECK(tok->detokenize(tok->tokenize("ab c")) == "ab c");
  CHECK_THROWS_AS(BpeTokenizer::parse("titok-bpe v2 x\n"), Error);
  CHECK_THROWS_AS(BpeTokenizer::parse("titok-bpe v1 x\nvocab 1\na\nmerges 1\na a\n"), Error);
  CHECK_THROWS_AS(resolve_tokenizer("sentencepiece"), Error);
  std::filesystem::remove_all(dir);
}

}
