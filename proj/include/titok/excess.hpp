#pragma once

#include <span>
#include <vector>

#include "titok/datamodel.hpp"

namespace titok {

/// Per-token contrastive excess: expert log-prob minus amateur log-prob.
/// Larger means the adapter contributed more at that position. Throws
/// ValidationError carrying the verdict for a malformed trace.
ExcessReport excess_scores(const ScoredTrace& trace);

/// Arithmetic mean, summed left to right.
double mean_excess(std::span<const double> scores);
double mean_excess(const ExcessReport& report);

/// Scores a batch in parallel; output order follows input order. Sample
/// ids must be unique across the batch.
std::vector<ExcessReport> excess_scores_batch(std::span<const ScoredTrace> traces);

}  // namespace titok
