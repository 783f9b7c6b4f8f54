// OpenMP kernels against their serial references on seeded inputs.

#include <benchmark/benchmark.h>

#include <random>

#include "titok/alignment.hpp"
#include "titok/excess.hpp"
#include "titok/filtering.hpp"
#include "titok/reference.hpp"
#include "titok/rouge.hpp"
#include "titok/tokenizer.hpp"
#include "titok/toylab.hpp"
#include "titok/toyworld.hpp"

namespace {

using namespace titok;

std::vector<ScoredTrace> make_traces(std::size_t n, std::size_t len) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> lp(-12.0, 0.0);
  std::vector<ScoredTrace> out;
  for (std::size_t i = 0; i < n; ++i) {
    ScoredTrace t;
    t.sample_id = "b" + std::to_string(i);
    for (std::size_t j = 0; j < len; ++j) {
      const char c = static_cast<char>('a' + rng() % 26);
      t.response_text += c;
      t.tokens.push_back({c, std::string(1, c), lp(rng), lp(rng)});
    }
    out.push_back(std::move(t));
  }
  return out;
}

const std::vector<ExcessReport>& reports() {
  static const std::vector<ExcessReport> r = excess_scores_batch(make_traces(4096, 64));
  return r;
}

void BM_excess_parallel(benchmark::State& state) {
  const auto traces = make_traces(4096, 64);
  for (auto _ : state) benchmark::DoNotOptimize(excess_scores_batch(traces));
}
void BM_excess_serial(benchmark::State& state) {
  const auto traces = make_traces(4096, 64);
  for (auto _ : state) benchmark::DoNotOptimize(reference::excess_scores_batch(traces));
}

void BM_filter_parallel(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(filter_samples(reports(), 256));
}
void BM_filter_serial(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(reference::filter_samples(reports(), 256));
}

void BM_select_parallel(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(select_tokens_batch(reports(), 70.0));
}
void BM_select_serial(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(reference::select_tokens_batch(reports(), 70.0));
}

std::vector<std::string> sentences(std::size_t n) {
  toy::ToyWorldParams p;
  p.base_sentences = n;
  return toy::make_toy_world(p).base_corpus;
}

void BM_rouge_parallel(benchmark::State& state) {
  const auto accepted = sentences(2000);
  AdmissionGate gate(AdmissionPolicy{std::nullopt, false, false});
  for (const auto& s : accepted) gate.add(s);
  for (auto _ : state) benchmark::DoNotOptimize(gate.max_rouge(accepted.front()));
}
void BM_rouge_serial(benchmark::State& state) {
  const auto accepted = sentences(2000);
  for (auto _ : state) benchmark::DoNotOptimize(reference::max_rouge(accepted.front(), accepted));
}

MaskedDataset char_dataset() {
  MaskedDataset ds;
  const auto char_tok = resolve_tokenizer("char");
  for (const auto& s : sentences(1000)) {
    MaskedRecord r;
    r.sample_id = "b" + std::to_string(ds.records.size());
    r.response_text = s;
    r.token_ids = char_tok->tokenize(s);
    std::vector<double> scores(r.token_ids.size());
    for (std::size_t i = 0; i < scores.size(); ++i) scores[i] = static_cast<double>((i * 7919) % 13);
    r.mask = select_top(r.sample_id, scores, 70.0);
    ds.records.push_back(std::move(r));
  }
  ds.meta.m_kept = ds.records.size();
  return ds;
}

void BM_align_parallel(benchmark::State& state) {
  const MaskedDataset ds = char_dataset();
  for (auto _ : state) {
    benchmark::DoNotOptimize(align_dataset(ds, *resolve_tokenizer("char"), *resolve_tokenizer("merge"), {}));
  }
}
void BM_align_serial(benchmark::State& state) {
  const MaskedDataset ds = char_dataset();
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        reference::align_dataset(ds, *resolve_tokenizer("char"), *resolve_tokenizer("merge"), {}));
  }
}

struct ToyFixture {
  toy::ToyLM base;
  toy::ToyAdapter adapter;
  std::vector<PoolSample> pool;
};

const ToyFixture& toy_fixture() {
  static const ToyFixture f = [] {
    const toy::ToyWorld world = toy::make_toy_world({});
    toy::ToyLM base = toy::fit_bigram(world.base_corpus, 0.5);
    toy::ToyAdapter adapter = toy::fit_adapter(base, world.task_corpus);
    std::vector<PoolSample> pool;
    for (const auto& s : world.task_corpus) pool.push_back({"p" + std::to_string(pool.size()), "", s, 0, 0, 0});
    return ToyFixture{std::move(base), std::move(adapter), std::move(pool)};
  }();
  return f;
}

void BM_toy_score_parallel(benchmark::State& state) {
  const ToyFixture& f = toy_fixture();
  toy::ToyScorer scorer(f.base, &f.adapter, resolve_tokenizer("char"));
  for (auto _ : state) benchmark::DoNotOptimize(toy::toy_score_batch(scorer, f.pool));
}
void BM_toy_score_serial(benchmark::State& state) {
  const ToyFixture& f = toy_fixture();
  toy::ToyScorer scorer(f.base, &f.adapter, resolve_tokenizer("char"));
  for (auto _ : state) benchmark::DoNotOptimize(reference::toy_score_batch(scorer, f.pool));
}

}  // namespace

BENCHMARK(BM_excess_parallel);
BENCHMARK(BM_excess_serial);
BENCHMARK(BM_filter_parallel);
BENCHMARK(BM_filter_serial);
BENCHMARK(BM_select_parallel);
BENCHMARK(BM_select_serial);
BENCHMARK(BM_rouge_parallel);
BENCHMARK(BM_rouge_serial);
BENCHMARK(BM_align_parallel);
BENCHMARK(BM_align_serial);
BENCHMARK(BM_toy_score_parallel);
BENCHMARK(BM_toy_score_serial);

BENCHMARK_MAIN();
