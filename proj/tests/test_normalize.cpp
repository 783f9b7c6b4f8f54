#include <random>

#include "doctest.h"
#include "titok/datamodel.hpp"
#include "titok/normalize.hpp"

using namespace titok;

TEST_SUITE("normalize") {

TEST_CASE("nfc composes") {
  const Normalizer n({NormRule::unicode_nfc});
  CHECK(n("e\xCC\x81") == "\xC3\xA9");
  CHECK(n("plain ascii") == "plain ascii");
}

TEST_CASE("leading space markers become spaces") {
  CHECK(default_normalizer()("\xE2\x96\x81hello\xE2\x96\x81world") == " hello world");
  CHECK(default_normalizer()("\xC4\xA0the") == " the");
}

TEST_CASE("continuation markers are removed") {
  const Normalizer n({NormRule::collapse_internal_marker});
  CHECK(n("play ##ing") == "play ing");
  CHECK(n("un##aff##able") == "unaffable");
  CHECK(n("###") == "#");
  CHECK(n("#a#") == "#a#");
}

TEST_CASE("marker removal next to a combining mark recomposes") {
  const Normalizer n({NormRule::unicode_nfc, NormRule::collapse_internal_marker});
  CHECK(n("e##\xCC\x81") == "\xC3\xA9");
}

TEST_CASE("idempotent for every rule list") {
  const std::vector<std::string> pieces = {"a", "#", "##", " ", "\xE2\x96\x81", "\xC4\xA0", "e", "\xCC\x81",
                                           "\xC3\xA9", "\xEF\xAC\x81", "b"};
  const std::vector<std::vector<NormRule>> lists = {
      {},
      {NormRule::unicode_nfc},
      {NormRule::strip_leading_space_marker},
      {NormRule::collapse_internal_marker},
      {NormRule::unicode_nfc, NormRule::strip_leading_space_marker},
      {NormRule::collapse_internal_marker, NormRule::unicode_nfc},
      {NormRule::unicode_nfc, NormRule::strip_leading_space_marker, NormRule::collapse_internal_marker},
  };
  std::mt19937_64 rng(11);
  for (const auto& rules : lists) {
    const Normalizer n(rules);
    for (int i = 0; i < 300; ++i) {
      std::string s;
      for (std::size_t j = 0, len = rng() % 12; j < len; ++j) s += pieces[rng() % pieces.size()];
      const std::string once = n(s);
      CHECK(n(once) == once);
    }
  }
}

TEST_CASE("rule names") {
  CHECK(Normalizer::parse_rule("unicode_nfc") == NormRule::unicode_nfc);
  CHECK(Normalizer::parse_rule("collapse_internal_marker") == NormRule::collapse_internal_marker);
  CHECK_THROWS_AS(Normalizer::parse_rule("lowercase"), Error);
}

TEST_CASE("first divergence") {
  CHECK(first_divergence("abc", "abc") == std::string_view::npos);
  CHECK(first_divergence("abc", "abd") == 2);
  CHECK(first_divergence("ab", "abc") == 2);
  CHECK(first_divergence("", "x") == 0);
}

}
