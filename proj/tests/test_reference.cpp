#include <random>

#include "doctest.h"
#include "testing.hpp"
#include "titok/alignment.hpp"
#include "titok/excess.hpp"
#include "titok/filtering.hpp"
#include "titok/reference.hpp"
#include "titok/rouge.hpp"
#include "titok/toylab.hpp"
#include "titok/toyworld.hpp"

using namespace titok;

TEST_SUITE("reference") {

TEST_CASE("excess, filter and select agree with the serial versions") {
  std::mt19937_64 rng(11);
  std::vector<ScoredTrace> traces;
  for (std::size_t i = 0; i < 600; ++i) traces.push_back(testing::random_trace(rng, 1 + rng() % 70, "t" + std::to_string(i)));
  // Exact ties in the sample means.
  traces.push_back(traces[3]);
  traces.back().sample_id = "dup3";

  const auto reports = excess_scores_batch(traces);
  CHECK(reports == reference::excess_scores_batch(traces));
  for (std::size_t m : {1, 17, 300, 601}) CHECK(filter_samples(reports, m) == reference::filter_samples(reports, m));
  CHECK_THROWS_WITH(reference::filter_samples(reports, 0), "M must be positive");
  CHECK_THROWS_WITH(reference::filter_samples(reports, 602), "M = 602 exceeds pool of 601");
  for (double k : {1.0, 33.3, 70.0, 100.0}) {
    CHECK(select_tokens_batch(reports, k) == reference::select_tokens_batch(reports, k));
    CHECK(select_tokens_batch(reports, k, RankPolicy{false}) == reference::select_tokens_batch(reports, k, RankPolicy{false}));
  }
}

TEST_CASE("rouge gate agrees with a plain loop") {
  std::mt19937_64 rng(12);
  std::vector<std::string> accepted;
  AdmissionGate gate(AdmissionPolicy{std::nullopt, false, false});
  for (int i = 0; i < 300; ++i) {
    std::string s;
    const std::size_t words = 1 + rng() % 12;
    for (std::size_t w = 0; w < words; ++w) s += std::string(1, static_cast<char>('a' + rng() % 6)) + " ";
    CHECK(gate.max_rouge(s) == reference::max_rouge(s, accepted));
    gate.add(s);
    accepted.push_back(s);
  }
}

TEST_CASE("alignment and toy scoring agree with the serial versions") {
  toy::ToyWorldParams p;
  p.base_sentences = 150;
  const toy::ToyWorld world = toy::make_toy_world(p);
  const toy::ToyLM base = toy::fit_bigram(world.base_corpus, 0.5);
  const toy::ToyAdapter adapter = toy::fit_adapter(base, world.task_corpus);
  std::vector<PoolSample> pool;
  for (const auto& s : world.task_corpus) pool.push_back({"p" + std::to_string(pool.size()), "", s, 0, 0, 0});
  toy::ToyScorer scorer(base, &adapter, resolve_tokenizer("char"));
  const auto traces = toy::toy_score_batch(scorer, pool);
  CHECK(traces == reference::toy_score_batch(scorer, pool));

  MaskedDataset ds;
  for (const auto& mask : select_tokens_batch(excess_scores_batch(traces), 70.0)) {
    const ScoredTrace& t = traces[ds.records.size()];
    MaskedRecord r;
    r.sample_id = t.sample_id;
    r.response_text = t.response_text;
    for (const auto& tok : t.tokens) r.token_ids.push_back(tok.token_id);
    r.mask = mask;
    ds.records.push_back(std::move(r));
  }
  ds.meta.m_kept = ds.records.size();
  ds.meta.target_tokenizer_tag = "char";
  const auto chars = resolve_tokenizer("char");
  const auto merge = resolve_tokenizer("merge");
  AlignDatasetOptions options;
  const AlignDatasetResult parallel = align_dataset(ds, *chars, *merge, options);
  const AlignDatasetResult serial = reference::align_dataset(ds, *chars, *merge, options);
  CHECK(parallel.dataset == serial.dataset);
  CHECK(parallel.failures.size() == serial.failures.size());
  CHECK(parallel.failures.empty());
}

}
