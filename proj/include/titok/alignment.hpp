#pragma once

// Moves binary token masks from one tokenization of a response to another.
// Spans are matched with two pointers over decoded text, source values are
// averaged within each span and spread over its target tokens, and the
// resulting fractional scores are re-selected to a top-k% binary mask.

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "titok/datamodel.hpp"
#include "titok/filtering.hpp"
#include "titok/normalize.hpp"
#include "titok/tokenizer.hpp"

namespace titok {

class AlignmentError : public Error {
 public:
  AlignmentError(const std::string& what, std::optional<std::size_t> offset = std::nullopt)
      : Error(what), offset_(offset) {}

  /// First divergent byte of the normalized texts, when that was the cause.
  std::optional<std::size_t> offset() const { return offset_; }

 private:
  std::optional<std::size_t> offset_;
};

struct AlignOptions {
  /// Error instead of folding an unmatched tail into one final pair.
  bool strict = false;
};

/// Greedy earliest-match alignment. Each step extends whichever side has
/// the shorter normalized text (the source on ties) until both decode to
/// the same text. Throws AlignmentError when the full texts differ.
SpanAlignment align_spans(std::span<const TokenId> source_tokens, std::span<const TokenId> target_tokens,
                          const Tokenizer& source, const Tokenizer& target,
                          const Normalizer& norm = default_normalizer(), AlignOptions options = {});

/// Fractional target mask: each target token receives the mean of its
/// span's source values.
TokenMask propagate_mask(const SpanAlignment& alignment, const TokenMask& source_mask);

/// Binary top-k% over fractional scores, same ranking as select_tokens.
TokenMask reselect_topk(const TokenMask& fractional, double k_percent, RankPolicy policy = {});

enum class OnError { skip, abort };

struct AlignDatasetOptions {
  double k_percent = 70.0;
  OnError on_error = OnError::skip;
  AlignOptions align;
  RankPolicy policy;
  const Normalizer* norm = nullptr;
};

struct RecordFailure {
  std::string sample_id;
  std::string message;

  friend bool operator==(const RecordFailure&, const RecordFailure&) = default;
};

struct AlignDatasetResult {
  MaskedDataset dataset;
  std::vector<RecordFailure> failures;
};

/// One record: tokenize with the target, align, propagate, re-select.
MaskedRecord align_record(const MaskedRecord& record, const Tokenizer& source, const Tokenizer& target,
                          const AlignDatasetOptions& options);

/// Records are processed in parallel; output keeps input order. With
/// OnError::abort the first failing record (by position) is rethrown.
AlignDatasetResult align_dataset(const MaskedDataset& source_dataset, const Tokenizer& source,
                                 const Tokenizer& target, const AlignDatasetOptions& options);

}  // namespace titok
