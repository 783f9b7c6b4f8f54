#include <random>
#include <sstream>

#include "doctest.h"
#include "testing.hpp"
#include "titok/jsonl.hpp"
#include "titok/synthgen.hpp"

using namespace titok;

namespace {

template <class T>
T round_trip(const T& x) {
  return Json::parse(Json(x).dump()).get<T>();
}

MaskedDataset sample_dataset() {
  MaskedDataset ds;
  ds.meta = {70.0, 2, "toy-source", "merge"};
  ds.records.push_back({"s000000", "what is qzv", "qzv is \"quoted\"\n", {113, 1114112}, {"s000000", {1, 0}, true}});
  ds.records.push_back({"s000001", "", "\xC3\xA9t\xC3\xA9", {233, 116, 233}, {"s000001", {0, 1, 1}, true}});
  return ds;
}

}  // namespace

TEST_SUITE("jsonl") {

TEST_CASE("every record type round-trips") {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 50; ++i) {
    ScoredTrace t = testing::random_trace(rng, 1 + rng() % 20, "t" + std::to_string(i));
    CHECK(round_trip(t) == t);
    ExcessReport r{t.sample_id, {}, 0.0};
    for (const auto& tok : t.tokens) r.scores.push_back(tok.logp_expert - tok.logp_amateur);
    r.mean_score = r.scores.front() / 3.0;
    CHECK(round_trip(r) == r);
  }
  TokenMask fractional{"m", {0.0, 1.0 / 3.0, 1.0}, false};
  CHECK(round_trip(fractional) == fractional);
  SpanAlignment a{3, 2, {{{0, 2}, {0, 1}, AlignRule::many_to_one}, {{2, 3}, {1, 2}, AlignRule::one_to_one}}};
  CHECK(round_trip(a) == a);
  DatasetMeta meta{30.0, 250, "src", "file:/x/y.bpe"};
  CHECK(round_trip(meta) == meta);
  for (const auto& rec : sample_dataset().records) CHECK(round_trip(rec) == rec);
  PoolSample p{"s1", "q", "r", 4, 1ull << 63, 17};
  CHECK(round_trip(p) == p);
  RejectEntry e{9, "dup", RejectReason::duplicate, 1.0, 5};
  CHECK(round_trip(e) == e);
}

TEST_CASE("keys are alphabetical and versioned") {
  ScoredTrace t{"s", "q", "a", {{97, "a", -1.5, -0.5}}};
  CHECK(canonical(Json(t)) ==
        R"({"format_version":1,"query_text":"q","response_text":"a","sample_id":"s",)"
        R"("tokens":[{"logp_amateur":-1.5,"logp_expert":-0.5,"token_id":97,"token_text":"a"}]})");
}

TEST_CASE("write(read(file)) is byte-identical") {
  std::ostringstream first;
  write_masked_dataset(first, sample_dataset());
  std::istringstream in(first.str());
  MaskedDataset back = read_masked_dataset(in);
  CHECK(back == sample_dataset());
  std::ostringstream second;
  write_masked_dataset(second, back);
  CHECK(second.str() == first.str());
  CHECK(first.str().rfind(R"({"format_version":1,"meta":{)", 0) == 0);
}

TEST_CASE("a truncated line fails after earlier records were yielded") {
  std::istringstream in(R"({"format_version":1,"mean_score":1.0,"sample_id":"a","scores":[1.0]})"
                        "\n\n"
                        R"({"format_version":1,"mean_score":2.0,"sample_id":"b","sco)"
                        "\n");
  JsonlReader reader(in);
  auto first = reader.next_as<ExcessReport>();
  REQUIRE(first);
  CHECK(first->sample_id == "a");
  try {
    reader.next_as<ExcessReport>();
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
    CHECK(e.fragment().find("\"sample_id\":\"b\"") != std::string::npos);
  }
}

TEST_CASE("empty input yields nothing") {
  std::istringstream in("");
  JsonlReader reader(in);
  CHECK_FALSE(reader.next());
  std::istringstream blank("\n  \n");
  CHECK(read_all<ScoredTrace>(blank).empty());
}

TEST_CASE("schema errors become parse errors") {
  std::istringstream no_version(R"({"mean_score":1.0,"sample_id":"a","scores":[1.0]})");
  CHECK_THROWS_AS(read_all<ExcessReport>(no_version), ParseError);
  std::istringstream wrong_version(R"({"format_version":2,"mean_score":1.0,"sample_id":"a","scores":[1.0]})");
  CHECK_THROWS_AS(read_all<ExcessReport>(wrong_version), ParseError);
  std::istringstream missing(R"({"format_version":1,"sample_id":"a"})");
  CHECK_THROWS_AS(read_all<ExcessReport>(missing), ParseError);
  std::istringstream bad_mask(R"({"binary":true,"format_version":1,"keep":[0.5],"sample_id":"m"})");
  CHECK_THROWS_AS(read_all<TokenMask>(bad_mask), ParseError);
  std::istringstream no_header("");
  CHECK_THROWS_AS(read_masked_dataset(no_header), ParseError);
}

TEST_CASE("file helpers") {
  auto dir = testing::scratch_dir("jsonl");
  std::vector<TokenMask> masks{{"a", {1, 0}, true}, {"b", {0.5}, false}};
  write_file((dir / "m.jsonl").string(), masks);
  CHECK(read_file<TokenMask>((dir / "m.jsonl").string()) == masks);
  write_masked_dataset_file((dir / "d.jsonl").string(), sample_dataset());
  CHECK(read_masked_dataset_file((dir / "d.jsonl").string()) == sample_dataset());
  CHECK_THROWS_AS(read_file<TokenMask>((dir / "missing.jsonl").string()), Error);
  std::filesystem::remove_all(dir);
}

}
