#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "doctest.h"
#include "testing.hpp"
#include "titok/toylab.hpp"
#include "titok/toyworld.hpp"

using namespace titok;
using namespace titok::toy;

namespace {

// log softmax of one row, in long double, straight from the definition.
double oracle_logp(const std::vector<double>& row, std::size_t next) {
  long double z = 0.0L;
  for (double x : row) z += std::exp(static_cast<long double>(x));
  return static_cast<double>(static_cast<long double>(row[next]) - std::log(z));
}

std::vector<double> row_of(const ToyLM& m, const ToyAdapter* a, std::size_t context) {
  std::vector<double> row(m.row(context).begin(), m.row(context).end());
  if (a) {
    for (const auto& [key, d] : a->delta()) {
      if (key.first == context) row[key.second] += d;
    }
  }
  return row;
}

MaskedRecord record(const std::string& id, const std::string& text, const Tokenizer& tok, std::vector<double> keep) {
  MaskedRecord r;
  r.sample_id = id;
  r.response_text = text;
  r.token_ids = tok.tokenize(text);
  r.mask = {id, std::move(keep), true};
  return r;
}

struct World {
  ToyWorld world = make_toy_world({});
  ToyLM base = fit_bigram(world.base_corpus, 0.5);
  ToyAdapter adapter = fit_adapter(base, world.task_corpus);
};

const World& world() {
  static const World w;
  return w;
}

}  // namespace

TEST_SUITE("toylab") {

TEST_CASE("bigram fit by hand") {
  const std::vector<std::string> corpus = {"ab"};
  const ToyLM m = fit_bigram(corpus, 1.0, "^ab");
  CHECK(m.size() == 3);
  CHECK(std::exp(m.logit(m.index('a'), m.index('b'))) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(std::exp(m.logit(0, m.index('a'))) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(std::exp(m.logit(0, 0)) == doctest::Approx(0.25).epsilon(1e-15));
  // A row never seen as context is uniform.
  for (std::size_t c = 0; c < 3; ++c) CHECK(std::exp(m.logit(m.index('b'), c)) == doctest::Approx(1.0 / 3));
}

TEST_CASE("smoothing pulls rows toward uniform") {
  const std::vector<std::string> corpus = {"abba", "ab", "b a"};
  double previous = 1.0;
  for (double alpha : {1.0, 10.0, 100.0}) {
    const ToyLM m = fit_bigram(corpus, alpha, "^ ab");
    double worst = 0.0;
    for (std::size_t r = 0; r < m.size(); ++r) {
      double mass = 0.0;
      for (std::size_t c = 0; c < m.size(); ++c) {
        mass += std::exp(m.logit(r, c));
        worst = std::max(worst, std::abs(std::exp(m.logit(r, c)) - 1.0 / m.size()));
      }
      CHECK(mass == doctest::Approx(1.0).epsilon(1e-12));
    }
    CHECK(worst < previous);
    previous = worst;
  }
  CHECK_THROWS_AS(fit_bigram(corpus, 0.0, "^ ab"), Error);
}

TEST_CASE("adapter deltas") {
  const std::vector<std::string> base_corpus = {"ab"};
  const std::vector<std::string> task_corpus = {"ab", "ab", "ac"};
  const ToyLM base = fit_bigram(base_corpus, 1.0, "^abc");
  CHECK(fit_adapter(base, base_corpus).empty());

  const ToyAdapter a = fit_adapter(base, task_corpus);
  CHECK(a.delta().size() == 3);
  CHECK(a.contains('^', 'a'));
  CHECK(a.contains('a', 'b'));
  CHECK(a.contains('a', 'c'));
  CHECK_FALSE(a.contains('a', 'a'));
  const double ac = a.delta().at({1, 3});
  CHECK(ac == doctest::Approx(std::log(10.0 / 7.0)).epsilon(1e-12));
  CHECK(a.delta().at({1, 2}) == doctest::Approx(std::log(15.0 / 14.0)).epsilon(1e-12));
  CHECK(a.delta().at({0, 1}) == doctest::Approx(std::log(10.0 / 7.0)).epsilon(1e-12));
  for (const auto& [key, d] : a.delta()) CHECK(d <= ac);
}

TEST_CASE("the toy world boosts task-word bigrams only") {
  const World& w = world();
  REQUIRE_FALSE(w.adapter.empty());
  std::set<std::pair<char, char>> task_bigrams;
  for (const std::string& word : task_words()) {
    const std::string padded = " " + word + " ";
    for (std::size_t i = 0; i + 1 < padded.size(); ++i) task_bigrams.insert({padded[i], padded[i + 1]});
  }
  std::size_t inside = 0;
  double best = 0.0;
  std::pair<char, char> best_pair;
  for (const auto& [key, d] : w.adapter.delta()) {
    const std::pair<char, char> p{w.base.vocab()[key.first], w.base.vocab()[key.second]};
    if (task_bigrams.count(p)) ++inside;
    if (d > best) best = d, best_pair = p;
  }
  CHECK(task_bigrams.count(best_pair) == 1);
  CHECK(inside * 2 > w.adapter.delta().size());
}

TEST_CASE("apply and remove restore logits bit for bit") {
  ToyLM m = world().base;
  const std::vector<double> before = m.logits();
  m.apply(world().adapter);
  CHECK(m.logits() != before);
  m.apply(world().adapter);
  m.remove();
  m.remove();
  CHECK(m.logits() == before);
  CHECK_THROWS_AS(m.remove(), Error);
  const ToyAdapter foreign("^ab", {});
  CHECK_THROWS_AS(m.apply(foreign), Error);
}

TEST_CASE("log-prob table matches a direct softmax") {
  const World& w = world();
  const LogProbTable expert(w.base, &w.adapter);
  const LogProbTable amateur(w.base, nullptr);
  for (std::size_t r = 0; r < w.base.size(); ++r) {
    const auto er = row_of(w.base, &w.adapter, r);
    const auto ar = row_of(w.base, nullptr, r);
    for (std::size_t c = 0; c < w.base.size(); ++c) {
      CHECK(std::abs(expert.logp(r, c) - oracle_logp(er, c)) < 1e-12);
      CHECK(std::abs(amateur.logp(r, c) - oracle_logp(ar, c)) < 1e-12);
    }
  }
}

TEST_CASE("one boosted bigram gives the analytic excess") {
  const std::vector<std::string> corpus = {"abcab", "cba", "aab"};
  const ToyLM base = fit_bigram(corpus, 0.5, "^abc");
  const double d = 1.25;
  const std::size_t a = base.index('a'), b = base.index('b');
  const ToyAdapter adapter(base.vocab(), {{{a, b}, d}});
  const double p = std::exp(base.logit(a, b));
  const double shift = std::log(1.0 - p + p * std::exp(d));

  auto tok = resolve_tokenizer("char");
  const ScoredTrace t = toy_score(base, &adapter, "x", "", "aabc", *tok);
  REQUIRE(t.tokens.size() == 4);
  CHECK(std::abs(t.tokens[0].logp_expert - t.tokens[0].logp_amateur) < 1e-12);  // ^ -> a
  CHECK(std::abs(t.tokens[1].logp_expert - t.tokens[1].logp_amateur + shift) < 1e-9);  // a -> a
  CHECK(std::abs(t.tokens[2].logp_expert - t.tokens[2].logp_amateur - (d - shift)) < 1e-9);  // a -> b
  CHECK(std::abs(t.tokens[3].logp_expert - t.tokens[3].logp_amateur) < 1e-12);  // b -> c
  CHECK(planted_positions(t, adapter) == std::vector<bool>{false, false, true, false});
}

TEST_CASE("an empty adapter scores zero excess everywhere") {
  const World& w = world();
  const ToyAdapter none(w.base.vocab(), {});
  auto tok = resolve_tokenizer("merge");
  for (std::size_t i = 0; i < 20; ++i) {
    const ScoredTrace t = toy_score(w.base, &none, "x", "", w.world.task_corpus[i], *tok);
    for (const TokenRecord& r : t.tokens) CHECK(r.logp_expert == r.logp_amateur);
  }
}

TEST_CASE("multi-character tokens sum their transitions") {
  const World& w = world();
  auto merge = resolve_tokenizer("merge");
  auto chars = resolve_tokenizer("char");
  const std::string text = w.world.task_corpus.back();
  const ScoredTrace by_token = toy_score(w.base, &w.adapter, "x", "", text, *merge);
  const ScoredTrace by_char = toy_score(w.base, &w.adapter, "x", "", text, *chars);
  double token_sum = 0.0, char_sum = 0.0;
  for (const auto& r : by_token.tokens) token_sum += r.logp_expert;
  for (const auto& r : by_char.tokens) char_sum += r.logp_expert;
  CHECK(token_sum == doctest::Approx(char_sum).epsilon(1e-12));
  CHECK_THROWS_AS(toy_score(w.base, nullptr, "x", "", "Upper", *chars), Error);
}

TEST_CASE("generation is reproducible") {
  const World& w = world();
  SamplingParams greedy{1.0, 0.9, 24, true};
  CHECK(toy_generate(w.base, &w.adapter, "p", greedy, 1).text == toy_generate(w.base, &w.adapter, "p", greedy, 99).text);

  SamplingParams sampled{1.0, 0.9, 24, false};
  std::set<std::string> distinct;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const GenResponse a = toy_generate(w.base, &w.adapter, "p", sampled, seed);
    const GenResponse b = toy_generate(w.base, &w.adapter, "p", sampled, seed);
    CHECK(a.text == b.text);
    CHECK(a.seed == seed);
    CHECK(a.text.size() <= 24);
    CHECK(((a.finish_reason == "stop") || (a.finish_reason == "length" && a.text.size() == 24)));
    distinct.insert(a.text);
  }
  CHECK(distinct.size() > 5);
}

TEST_CASE("sampling stays inside the nucleus") {
  const World& w = world();
  SamplingParams params{0.8, 0.5, 64, false};
  std::size_t steps = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    toy_generate(w.base, &w.adapter, "audit", params, seed, {}, [&](const StepAudit& s) {
      ++steps;
      double total = 0.0, mass = 0.0, smallest = 1.0;
      for (double p : s.probs) total += p;
      for (std::size_t i : s.support) {
        mass += s.probs[i];
        smallest = std::min(smallest, s.probs[i]);
      }
      CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
      CHECK(mass >= 0.5 - 1e-15);
      CHECK(mass - smallest < 0.5);
      for (std::size_t i = 0; i < s.probs.size(); ++i) {
        if (std::find(s.support.begin(), s.support.end(), i) == s.support.end()) CHECK(s.probs[i] <= smallest);
      }
      CHECK(std::find(s.support.begin(), s.support.end(), s.chosen) != s.support.end());
    });
  }
  CHECK(steps > 50);
}

TEST_CASE("top-p support") {
  const std::vector<double> probs = {0.1, 0.4, 0.2, 0.3};
  CHECK(top_p_support(probs, 0.5) == std::vector<std::size_t>{1, 3});
  CHECK(top_p_support(probs, 0.4) == std::vector<std::size_t>{1});
  CHECK(top_p_support(probs, 1.0).size() == 4);
  CHECK(top_p_support(probs, 0.0) == std::vector<std::size_t>{1});
  const std::vector<double> tied = {0.25, 0.25, 0.25, 0.25};
  CHECK(top_p_support(tied, 0.5) == std::vector<std::size_t>{0, 1});
}

TEST_CASE("stop markers end generation and are removed") {
  const World& w = world();
  SamplingParams greedy{1.0, 0.9, 12, true};
  const GenResponse full = toy_generate(w.base, nullptr, "p", greedy, 0);
  REQUIRE(full.text.size() >= 3);
  const std::vector<std::string> markers = {"", full.text.substr(1, 2)};
  const GenResponse cut = toy_generate(w.base, nullptr, "p", greedy, 0, markers);
  CHECK(cut.text == full.text.substr(0, 1));
  CHECK(cut.finish_reason == "stop");
}

TEST_CASE("all-ones masks count every transition") {
  const World& w = world();
  for (const char* tag : {"char", "merge"}) {
    auto tok = resolve_tokenizer(tag);
    MaskedDataset ds;
    BigramCounts expected(default_alphabet());
    for (std::size_t i = 0; i < 50; ++i) {
      const std::string& s = w.world.task_corpus[i * 7];
      MaskedRecord r = record("r" + std::to_string(i), s, *tok, {});
      r.mask.keep.assign(r.token_ids.size(), 1.0);
      ds.records.push_back(std::move(r));
      expected.add_text(s);
    }
    CHECK(masked_counts(ds, *tok, default_alphabet()) == expected);
    const ToyLM direct = expected.to_model(0.5);
    CHECK(train_masked_target(ds, *tok, 0.5).logits() == direct.logits());
  }
}

TEST_CASE("only kept tokens contribute") {
  auto chars = resolve_tokenizer("char");
  MaskedDataset ds;
  ds.records.push_back(record("r", "abc", *chars, {0.0, 0.0, 1.0}));
  const BigramCounts one = masked_counts(ds, *chars, default_alphabet());
  CHECK(one.total() == 1);
  CHECK(one.count(one.index('b'), one.index('c')) == 1);

  auto merge = resolve_tokenizer("merge");
  MaskedDataset words;
  words.records.push_back(record("w", " the qzv", *merge, {0.0, 1.0}));
  REQUIRE(words.records[0].token_ids.size() == 2);
  const BigramCounts three = masked_counts(words, *merge, default_alphabet());
  CHECK(three.total() == 3);
  CHECK(three.count(three.index(' '), three.index('q')) == 1);
  CHECK(three.count(three.index('q'), three.index('z')) == 1);
  CHECK(three.count(three.index('z'), three.index('v')) == 1);

  BigramCounts prior(default_alphabet());
  prior.add_text("abc");
  const BigramCounts seeded = masked_counts(ds, *chars, default_alphabet(), &prior);
  CHECK(seeded.total() == 4);
  CHECK(seeded.count(seeded.index('b'), seeded.index('c')) == 2);

  ds.records[0].mask.keep = {0.0, 0.0, 0.0};
  CHECK_THROWS_WITH_AS(masked_counts(ds, *chars, default_alphabet()), "masked training set keeps no tokens", Error);
  ds.records[0].mask = {"r", {0.5, 0.5, 0.5}, false};
  CHECK_THROWS_AS(masked_counts(ds, *chars, default_alphabet()), Error);
}

TEST_CASE("model and adapter files round-trip exactly") {
  const World& w = world();
  auto dir = testing::scratch_dir("toyfiles");
  w.base.save((dir / "m.txt").string());
  w.adapter.save((dir / "a.txt").string());
  const ToyLM m = ToyLM::load((dir / "m.txt").string());
  const ToyAdapter a = ToyAdapter::load((dir / "a.txt").string());
  CHECK(m.vocab() == w.base.vocab());
  CHECK(m.alpha() == w.base.alpha());
  CHECK(m.logits() == w.base.logits());
  CHECK(a.vocab() == w.adapter.vocab());
  CHECK(a.delta() == w.adapter.delta());
  { std::ofstream((dir / "bad.txt").string()) << "not a model\n"; }
  CHECK_THROWS_AS(ToyLM::load((dir / "bad.txt").string()), Error);
  CHECK_THROWS_AS(ToyLM::load((dir / "missing.txt").string()), Error);
  std::filesystem::remove_all(dir);
}

TEST_CASE("held-out NLL") {
  const World& w = world();
  const std::vector<std::string> texts = {"ab c", "the"};
  long double expected = 0.0L;
  std::size_t symbols = 0;
  for (const std::string& t : texts) {
    std::size_t context = 0;
    for (char c : t) {
      const std::size_t next = w.base.index(c);
      expected -= oracle_logp(row_of(w.base, nullptr, context), next);
      context = next;
      ++symbols;
    }
  }
  const Nll nll = heldout_nll(w.base, texts);
  CHECK(nll.symbols == symbols);
  CHECK(nll.total == doctest::Approx(static_cast<double>(expected)).epsilon(1e-12));
  CHECK(nll.mean() == doctest::Approx(nll.total / 7));
  const std::vector<std::string> bad = {"A"};
  CHECK_THROWS_WITH_AS(heldout_nll(w.base, bad), "symbol outside toy vocabulary: 'A'", Error);
}

TEST_CASE("planted rank") {
  const ToyAdapter adapter("^abc", {{{1, 3}, 1.0}});  // a -> c
  auto trace = [](std::vector<std::pair<std::string, double>> toks) {
    ScoredTrace t;
    for (auto& [text, excess] : toks) {
      t.response_text += text;
      t.tokens.push_back({0, text, -1.0, excess - 1.0});
    }
    return t;
  };
  const std::vector<ScoredTrace> top = {trace({{"a", 0.0}, {"c", 5.0}, {"b", 1.0}})};
  CHECK(planted_mean_rank(top, adapter) == 0.0);
  const std::vector<ScoredTrace> both = {top[0], trace({{"b", 3.0}, {"a", 2.0}, {"c", -1.0}})};
  CHECK(planted_mean_rank(both, adapter) == doctest::Approx(5.0 / 12.0).epsilon(1e-15));
  CHECK(planted_positions(both[1], adapter) == std::vector<bool>{false, false, true});
  // "ac" inside one token is planted; the boundary is the first context.
  CHECK(planted_positions(trace({{"ac", 0.0}, {"b", 0.0}}), adapter) == std::vector<bool>{true, false});
  const std::vector<ScoredTrace> none = {trace({{"b", 1.0}})};
  CHECK_THROWS_AS(planted_mean_rank(none, adapter), Error);
}

TEST_CASE("toy world is seeded") {
  ToyWorldParams p;
  p.seed = 9;
  const ToyWorld a = make_toy_world(p);
  const ToyWorld b = make_toy_world(p);
  CHECK(a.task_corpus == b.task_corpus);
  CHECK(a.heldout_task == b.heldout_task);
  p.seed = 10;
  CHECK(make_toy_world(p).task_corpus != a.task_corpus);
  CHECK(a.task_corpus.size() == p.base_sentences + p.planted_sentences);
  CHECK(a.few_shot.size() == p.few_shot);
}

}
