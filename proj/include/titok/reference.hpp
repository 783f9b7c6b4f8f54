#pragma once

// Serial reference versions of the parallel kernels. They share no code
// path with the OpenMP versions beyond the per-item primitives and exist
// for equivalence tests and the benchmark.

#include <span>
#include <string>
#include <vector>

#include "titok/alignment.hpp"
#include "titok/filtering.hpp"
#include "titok/synthgen.hpp"
#include "titok/toylab.hpp"

namespace titok::reference {

std::vector<ExcessReport> excess_scores_batch(std::span<const ScoredTrace> traces);

/// Full stable sort by descending mean, truncated to M.
std::vector<KeptSample> filter_samples(std::span<const ExcessReport> reports, std::size_t m);

std::vector<TokenMask> select_tokens_batch(std::span<const ExcessReport> reports, double k_percent,
                                           RankPolicy policy = {});

/// Plain loop over rouge_l().
double max_rouge(std::string_view candidate, std::span<const std::string> accepted);

AlignDatasetResult align_dataset(const MaskedDataset& source_dataset, const Tokenizer& source,
                                 const Tokenizer& target, const AlignDatasetOptions& options);

std::vector<ScoredTrace> toy_score_batch(const toy::ToyScorer& scorer, std::span<const PoolSample> pool);

}  // namespace titok::reference
