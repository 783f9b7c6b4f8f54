#pragma once

// Desk-scale stand-ins for every model role: a smoothed character bigram
// model (the amateur), the same model plus a sparse additive logit delta
// (the expert), and a count-based target trained only on kept tokens.
// Every string is read as the boundary symbol followed by its characters.

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "titok/datamodel.hpp"
#include "titok/endpoint.hpp"
#include "titok/synthgen.hpp"
#include "titok/tokenizer.hpp"

namespace titok::toy {

inline constexpr char kBoundary = '^';

/// Boundary, space, then a-z.
const std::string& default_alphabet();

/// Boundary followed by the sorted distinct characters of `corpus`.
std::string vocab_from_corpus(std::span<const std::string> corpus);

class ToyAdapter;

class ToyLM {
 public:
  /// `logits` is row-major V x V, row = context symbol.
  ToyLM(std::string vocab, std::vector<double> logits, double alpha);

  std::size_t size() const { return vocab_.size(); }
  const std::string& vocab() const { return vocab_; }
  double alpha() const { return alpha_; }
  /// Index of `symbol`, or -1.
  int index(char symbol) const { return lookup_[static_cast<unsigned char>(symbol)]; }
  int require_index(char symbol) const;

  double logit(std::size_t context, std::size_t next) const { return logits_[context * size() + next]; }
  std::span<const double> row(std::size_t context) const {
    return {logits_.data() + context * size(), size()};
  }
  const std::vector<double>& logits() const { return logits_; }

  /// Adds the adapter's deltas in place, remembering the overwritten
  /// values; remove() restores them bit-exactly (last applied first).
  void apply(const ToyAdapter& adapter);
  void remove();

  void save(const std::string& path) const;
  static ToyLM load(const std::string& path);

 private:
  std::string vocab_;
  std::vector<double> logits_;
  double alpha_;
  std::array<int, 256> lookup_{};
  std::vector<std::vector<std::pair<std::size_t, double>>> saved_;
};

/// Sparse (context, next) -> logit delta over a model's symbol indices.
class ToyAdapter {
 public:
  using Key = std::pair<std::size_t, std::size_t>;

  ToyAdapter() = default;
  ToyAdapter(std::string vocab, std::map<Key, double> delta) : vocab_(std::move(vocab)), delta_(std::move(delta)) {}

  const std::string& vocab() const { return vocab_; }
  const std::map<Key, double>& delta() const { return delta_; }
  bool empty() const { return delta_.empty(); }
  bool contains(std::size_t context, std::size_t next) const { return delta_.count({context, next}) != 0; }
  bool contains(char context, char next) const;

  void save(const std::string& path) const;
  static ToyAdapter load(const std::string& path);

 private:
  std::string vocab_;
  std::map<Key, double> delta_;
};

/// Integer bigram counts over a fixed vocabulary.
class BigramCounts {
 public:
  explicit BigramCounts(std::string vocab);

  /// Counts boundary->text[0], text[0]->text[1], ...
  void add_text(std::string_view text);
  void add(std::size_t context, std::size_t next, std::uint64_t n = 1);

  std::uint64_t count(std::size_t context, std::size_t next) const { return counts_[context * vocab_.size() + next]; }
  std::uint64_t row_total(std::size_t context) const;
  std::uint64_t total() const;
  const std::string& vocab() const { return vocab_; }
  int index(char symbol) const;

  /// logit = log((count + alpha) / (row_total + alpha * V)).
  ToyLM to_model(double alpha) const;

  friend bool operator==(const BigramCounts&, const BigramCounts&) = default;

 private:
  std::string vocab_;
  std::vector<std::uint64_t> counts_;
};

ToyLM fit_bigram(std::span<const std::string> corpus, double alpha, const std::string& vocab = default_alphabet());

/// Delta = log(P_task / P_base) for every bigram the task corpus makes
/// strictly more likely than the base model does; nothing else.
ToyAdapter fit_adapter(const ToyLM& base, std::span<const std::string> task_corpus);

/// Per-row log-softmax of base (+ delta) logits.
class LogProbTable {
 public:
  LogProbTable(const ToyLM& model, const ToyAdapter* adapter);

  double logp(std::size_t context, std::size_t next) const { return table_[context * v_ + next]; }
  std::span<const double> row(std::size_t context) const { return {table_.data() + context * v_, v_}; }

 private:
  std::size_t v_;
  std::vector<double> table_;
};

/// Scores a response under the amateur (base) and expert (base + adapter).
/// Each token's log-probability sums its characters' bigram log-probs;
/// the first character is conditioned on the boundary symbol.
class ToyScorer final : public Scorer {
 public:
  ToyScorer(const ToyLM& model, const ToyAdapter* adapter, TokenizerHandle tokenizer);

  ScoredTrace score(const std::string& sample_id, const std::string& query_text,
                    const std::string& response_text) override;
  ScoredTrace score_const(const std::string& sample_id, const std::string& query_text,
                          const std::string& response_text) const;

 private:
  const ToyLM& model_;
  TokenizerHandle tokenizer_;
  LogProbTable amateur_;
  LogProbTable expert_;
};

ScoredTrace toy_score(const ToyLM& model, const ToyAdapter* adapter, const std::string& sample_id,
                      const std::string& query_text, const std::string& response_text, const Tokenizer& tokenizer);

/// Scores every pool sample in parallel; output order follows input.
std::vector<ScoredTrace> toy_score_batch(const ToyScorer& scorer, std::span<const PoolSample> pool);

/// One sampling step as seen by the distribution audit hook.
struct StepAudit {
  std::size_t step = 0;
  std::vector<double> probs;          // tempered distribution over the vocabulary
  std::vector<std::size_t> support;   // symbols eligible for sampling
  std::size_t chosen = 0;
};

/// Indices of the smallest probability-sorted prefix (ties by index)
/// whose mass reaches `top_p`.
std::vector<std::size_t> top_p_support(std::span<const double> probs, double top_p);

/// Samples from base (+ adapter) starting at the boundary symbol. Stops at
/// a sampled boundary, a stop marker (removed from the text), or
/// max_tokens characters. The RNG is seeded from `seed` and the prompt.
GenResponse toy_generate(const ToyLM& model, const ToyAdapter* adapter, std::string_view prompt,
                         const SamplingParams& params, std::uint64_t seed,
                         std::span<const std::string> stop_markers = {},
                         const std::function<void(const StepAudit&)>& audit = {});

class ToyGenerator final : public Generator {
 public:
  ToyGenerator(const ToyLM& model, const ToyAdapter* adapter) : model_(model), adapter_(adapter) {}
  GenResponse generate(const GenRequest& request) override;

 private:
  const ToyLM& model_;
  const ToyAdapter* adapter_;
};

/// Bigram fit on kept positions only: a transition is counted iff the token
/// containing its next character has mask value 1. `prior` seeds the
/// counts (the target backbone's own corpus); without it this is a fit
/// from scratch. Throws when no token is kept.
ToyLM train_masked_target(const MaskedDataset& dataset, const Tokenizer& tokenizer, double alpha,
                          const std::string& vocab = default_alphabet(),
                          const BigramCounts* prior = nullptr);

BigramCounts masked_counts(const MaskedDataset& dataset, const Tokenizer& tokenizer, const std::string& vocab,
                           const BigramCounts* prior = nullptr);

/// Per-token flags: does the token contain a character transition that the
/// adapter boosts? The first character's context is the boundary symbol.
std::vector<bool> planted_positions(const ScoredTrace& trace, const ToyAdapter& adapter);

/// Pools every token of `traces`, ranks by excess (descending, ties by
/// position) and returns the mean of rank / count over planted tokens, so
/// 0 is the very top. Throws when no token is planted.
double planted_mean_rank(std::span<const ScoredTrace> traces, const ToyAdapter& adapter);

struct Nll {
  double total = 0.0;
  std::size_t symbols = 0;
  double mean() const { return symbols ? total / static_cast<double>(symbols) : 0.0; }
};

/// Exact negative log-likelihood (nats) of `texts` under `model`.
Nll heldout_nll(const ToyLM& model, std::span<const std::string> texts);

}  // namespace titok::toy
