#include <cmath>
#include <limits>

#include "doctest.h"
#include "titok/datamodel.hpp"
#include "titok/normalize.hpp"

using namespace titok;

namespace {

ScoredTrace abc_trace() {
  ScoredTrace t;
  t.sample_id = "s1";
  t.query_text = "q";
  t.response_text = "abcde";
  for (char c : std::string("abcde")) t.tokens.push_back({c, std::string(1, c), -1.0, -0.5});
  return t;
}

bool has(const Verdict& v, const std::string& what, std::optional<std::size_t> index = std::nullopt) {
  for (const auto& x : v.violations) {
    if (x.what == what && (!index || x.index == index)) return true;
  }
  return false;
}

}  // namespace

TEST_SUITE("datamodel") {

TEST_CASE("well-formed trace passes") { CHECK(validate_trace(abc_trace()).ok()); }

TEST_CASE("nan expert logp is reported at its index") {
  ScoredTrace t = abc_trace();
  t.tokens[3].logp_expert = std::numeric_limits<double>::quiet_NaN();
  Verdict v = validate_trace(t);
  REQUIRE(v.violations.size() == 1);
  CHECK(v.violations[0] == Violation{"non-finite logp", 3});
}

TEST_CASE("empty token list") {
  ScoredTrace t = abc_trace();
  t.tokens.clear();
  Verdict v = validate_trace(t);
  CHECK(has(v, "empty response"));
}

TEST_CASE("positive logp, negative id and text mismatch") {
  ScoredTrace t = abc_trace();
  t.tokens[0].logp_amateur = 0.25;
  t.tokens[1].token_id = -4;
  t.tokens[4].token_text = "x";
  Verdict v = validate_trace(t);
  CHECK(has(v, "positive logp", 0));
  CHECK(has(v, "negative token_id", 1));
  CHECK(has(v, "token text does not match response", 4));
  CHECK(v.describe().find("positive logp at 0") != std::string::npos);
}

TEST_CASE("zero logp is allowed") {
  ScoredTrace t = abc_trace();
  t.tokens[2].logp_expert = 0.0;
  CHECK(validate_trace(t).ok());
}

TEST_CASE("text comparison uses the normalizer") {
  ScoredTrace t;
  t.sample_id = "n";
  t.response_text = "a b";
  t.tokens = {{1, "a", -1, -1}, {2, "\xE2\x96\x81" "b", -1, -1}};
  CHECK(validate_trace(t).ok());
  const Normalizer raw({NormRule::unicode_nfc});
  CHECK_FALSE(validate_trace(t, &raw).ok());
}

TEST_CASE("report mean is checked to relative tolerance") {
  ExcessReport r{"s", {1.0, 2.0, 3.0}, 2.0};
  CHECK(validate_report(r).ok());
  r.mean_score = 2.0 + 1e-13;
  CHECK(validate_report(r).ok());
  r.mean_score = 2.0 + 1e-9;
  CHECK_FALSE(validate_report(r).ok());
  r = {"big", {1e6, 3e6}, 2e6 * (1 + 5e-13)};
  CHECK(validate_report(r).ok());
  CHECK_FALSE(validate_report({"e", {}, 0.0}).ok());
}

TEST_CASE("mask values") {
  CHECK(validate_mask({"m", {0, 1, 1}, true}).ok());
  CHECK_FALSE(validate_mask({"m", {0, 0.5}, true}).ok());
  CHECK(validate_mask({"m", {0, 0.5}, false}).ok());
  CHECK_FALSE(validate_mask({"m", {1.5}, false}).ok());
  CHECK_FALSE(validate_mask({"m", {std::nan("")}, false}).ok());
  CHECK(TokenMask{"m", {0, 0.25, 1}, false}.kept_count() == 2);
}

TEST_CASE("dataset checks") {
  MaskedDataset ds;
  ds.meta = {70.0, 2, "src", "char"};
  ds.records.push_back({"a", "q", "xy", {120, 121}, {"a", {1, 0}, true}});
  ds.records.push_back({"b", "q", "z", {122}, {"b", {1}, true}});
  CHECK(validate_dataset(ds).ok());

  MaskedDataset bad = ds;
  bad.records[1].sample_id = "a";
  CHECK(has(validate_dataset(bad), "duplicate sample_id", 1));
  bad = ds;
  bad.meta.m_kept = 3;
  CHECK(has(validate_dataset(bad), "m_kept differs from record count"));
  bad = ds;
  bad.records[0].mask.keep = {0, 0};
  CHECK(has(validate_dataset(bad), "record keeps no tokens", 0));
  bad = ds;
  bad.records[0].mask.keep = {1};
  CHECK(has(validate_dataset(bad), "mask length differs from token_ids", 0));
  bad = ds;
  bad.meta.k_percent = 0;
  CHECK_FALSE(validate_dataset(bad).ok());
}

TEST_CASE("partition by index arithmetic") {
  SpanAlignment a{3, 4, {{{0, 1}, {0, 1}, AlignRule::one_to_one}, {{1, 3}, {1, 4}, AlignRule::many_to_many}}};
  CHECK(validate_partition(a).ok());
  SpanAlignment gap = a;
  gap.pairs[1].source.begin = 2;
  CHECK(has(validate_partition(gap), "source span gap or overlap", 1));
  SpanAlignment short_cover = a;
  short_cover.target_len = 5;
  CHECK(has(validate_partition(short_cover), "target spans do not cover the sequence"));
  SpanAlignment wrong_rule = a;
  wrong_rule.pairs[0].rule = AlignRule::one_to_many;
  CHECK(has(validate_partition(wrong_rule), "rule tag disagrees with widths", 0));
}

TEST_CASE("rule tags") {
  CHECK(rule_for_widths(1, 1) == AlignRule::one_to_one);
  CHECK(rule_for_widths(1, 3) == AlignRule::one_to_many);
  CHECK(rule_for_widths(2, 1) == AlignRule::many_to_one);
  CHECK(rule_for_widths(2, 2) == AlignRule::many_to_many);
  for (auto r : {AlignRule::one_to_one, AlignRule::one_to_many, AlignRule::many_to_one, AlignRule::many_to_many}) {
    CHECK(align_rule_from_string(to_string(r)) == r);
  }
  CHECK_THROWS_AS(align_rule_from_string("copy"), ValidationError);
}

TEST_CASE("duplicate ids are a hard error") {
  std::vector<std::string> ids{"a", "b", "a"};
  CHECK_THROWS_WITH_AS(require_unique_ids(ids), "duplicate sample_id: a", ValidationError);
  std::vector<std::string> ok{"a", "b"};
  CHECK_NOTHROW(require_unique_ids(ok));
}

}
