#pragma once

// Sample filtering (keep the M samples with the largest mean excess) and
// per-response token selection (keep the top k% of tokens by score).
// Ranking is always descending by score with ties going to the earlier
// position, so every selection is deterministic and nested in k.

#include <span>
#include <string>
#include <vector>

#include "titok/datamodel.hpp"

namespace titok {

struct RankPolicy {
  /// Keep at least one token even when floor(k% * L) is zero.
  bool floor_min_one = true;
};

/// floor(k/100 * L), raised to 1 when `floor_min_one` is set and L > 0.
std::size_t kept_token_count(std::size_t length, double k_percent, bool floor_min_one = true);

/// Throws Error unless 0 < k <= 100.
void check_k_percent(double k_percent);

struct KeptSample {
  std::string sample_id;
  double mean_score = 0.0;
  std::size_t input_index = 0;

  friend bool operator==(const KeptSample&, const KeptSample&) = default;
};

/// The M reports with the largest mean_score, ordered by descending mean
/// then input order. Thread-local partial top-M lists are merged, so the
/// result equals a full stable sort truncated to M.
std::vector<KeptSample> filter_samples(std::span<const ExcessReport> reports, std::size_t m);

/// Binary mask over `scores` keeping the kept_token_count() highest.
TokenMask select_top(std::string sample_id, std::span<const double> scores, double k_percent,
                     RankPolicy policy = {});

TokenMask select_tokens(const ExcessReport& report, double k_percent, RankPolicy policy = {});

std::vector<TokenMask> select_tokens_batch(std::span<const ExcessReport> reports, double k_percent,
                                           RankPolicy policy = {});

struct MaskStats {
  std::size_t records = 0;
  std::size_t tokens_kept = 0;
  std::size_t tokens_total = 0;
  /// Records per keep-fraction decile: [0,.1), [.1,.2), ..., [.9,1].
  /// Empty when there are no records.
  std::vector<std::size_t> histogram;
};

MaskStats apply_mask_stats(const MaskedDataset& dataset);

}  // namespace titok
