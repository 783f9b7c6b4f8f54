#pragma once

// Shared value types for every pipeline stage. All of them are plain
// aggregates: immutable once built, safe to share across threads.

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace titok {

using TokenId = std::int64_t;

/// Base of every error the library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

/// One response token with both scorers' log-probabilities (natural log).
struct TokenRecord {
  TokenId token_id = 0;
  std::string token_text;
  double logp_amateur = 0.0;
  double logp_expert = 0.0;

  friend bool operator==(const TokenRecord&, const TokenRecord&) = default;
};

/// A synthetic (query, response) pair scored by the amateur and the expert.
/// `tokens` covers the response only.
struct ScoredTrace {
  std::string sample_id;
  std::string query_text;
  std::string response_text;
  std::vector<TokenRecord> tokens;

  friend bool operator==(const ScoredTrace&, const ScoredTrace&) = default;
};

struct ExcessReport {
  std::string sample_id;
  std::vector<double> scores;
  double mean_score = 0.0;

  friend bool operator==(const ExcessReport&, const ExcessReport&) = default;
};

/// Per-token keep decisions. Binary masks hold only 0 and 1; fractional
/// masks (produced by cross-tokenizer propagation) hold values in [0, 1].
struct TokenMask {
  std::string sample_id;
  std::vector<double> keep;
  bool binary = true;

  std::size_t kept_count() const;

  friend bool operator==(const TokenMask&, const TokenMask&) = default;
};

struct Span {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const { return end - begin; }
  friend bool operator==(const Span&, const Span&) = default;
};

enum class AlignRule { one_to_one, one_to_many, many_to_one, many_to_many };

std::string_view to_string(AlignRule rule);
AlignRule align_rule_from_string(std::string_view name);
/// Rule implied by the widths of an aligned span pair.
AlignRule rule_for_widths(std::size_t source_width, std::size_t target_width);

struct AlignedPair {
  Span source;
  Span target;
  AlignRule rule = AlignRule::one_to_one;

  friend bool operator==(const AlignedPair&, const AlignedPair&) = default;
};

struct SpanAlignment {
  std::size_t source_len = 0;
  std::size_t target_len = 0;
  std::vector<AlignedPair> pairs;

  friend bool operator==(const SpanAlignment&, const SpanAlignment&) = default;
};

struct MaskedRecord {
  std::string sample_id;
  std::string query_text;
  std::string response_text;
  std::vector<TokenId> token_ids;
  TokenMask mask;

  friend bool operator==(const MaskedRecord&, const MaskedRecord&) = default;
};

struct DatasetMeta {
  double k_percent = 70.0;
  std::size_t m_kept = 0;
  std::string source_model_tag;
  std::string target_tokenizer_tag;

  friend bool operator==(const DatasetMeta&, const DatasetMeta&) = default;
};

struct MaskedDataset {
  std::vector<MaskedRecord> records;
  DatasetMeta meta;

  friend bool operator==(const MaskedDataset&, const MaskedDataset&) = default;
};

struct Violation {
  std::string what;
  std::optional<std::size_t> index;

  friend bool operator==(const Violation&, const Violation&) = default;
};

struct Verdict {
  std::vector<Violation> violations;

  bool ok() const { return violations.empty(); }
  std::string describe() const;
};

class Normalizer;

/// Checks every ScoredTrace invariant. Text equality is checked after
/// applying `norm` (the default normalizer when null) to both sides.
Verdict validate_trace(const ScoredTrace& trace, const Normalizer* norm = nullptr);

Verdict validate_report(const ExcessReport& report);
Verdict validate_mask(const TokenMask& mask);
Verdict validate_dataset(const MaskedDataset& dataset);

/// Partition check by index arithmetic; text equality is the aligner's job.
Verdict validate_partition(const SpanAlignment& alignment);

/// Throws ValidationError naming the first repeated id.
void require_unique_ids(std::span<const std::string> ids);

}  // namespace titok
