#include "titok/reference.hpp"

#include <algorithm>

#include "titok/excess.hpp"
#include "titok/rouge.hpp"

namespace titok::reference {

std::vector<ExcessReport> excess_scores_batch(std::span<const ScoredTrace> traces) {
  std::vector<std::string> ids;
  for (const auto& t : traces) ids.push_back(t.sample_id);
  require_unique_ids(ids);
  std::vector<ExcessReport> out;
  out.reserve(traces.size());
  for (const auto& t : traces) out.push_back(excess_scores(t));
  return out;
}

std::vector<KeptSample> filter_samples(std::span<const ExcessReport> reports, std::size_t m) {
  if (m == 0) throw Error("M must be positive");
  if (m > reports.size()) {
    throw Error("M = " + std::to_string(m) + " exceeds pool of " + std::to_string(reports.size()));
  }
  std::vector<std::string> ids;
  for (const auto& r : reports) ids.push_back(r.sample_id);
  require_unique_ids(ids);
  std::vector<KeptSample> all;
  for (std::size_t i = 0; i < reports.size(); ++i) all.push_back({reports[i].sample_id, reports[i].mean_score, i});
  std::stable_sort(all.begin(), all.end(),
                   [](const KeptSample& a, const KeptSample& b) { return a.mean_score > b.mean_score; });
  all.resize(m);
  return all;
}

std::vector<TokenMask> select_tokens_batch(std::span<const ExcessReport> reports, double k_percent,
                                           RankPolicy policy) {
  check_k_percent(k_percent);
  std::vector<TokenMask> out;
  for (const auto& r : reports) out.push_back(select_tokens(r, k_percent, policy));
  return out;
}

double max_rouge(std::string_view candidate, std::span<const std::string> accepted) {
  double best = 0.0;
  for (const auto& a : accepted) best = std::max(best, rouge_l(candidate, a));
  return best;
}

AlignDatasetResult align_dataset(const MaskedDataset& source_dataset, const Tokenizer& source,
                                 const Tokenizer& target, const AlignDatasetOptions& options) {
  AlignDatasetResult result;
  result.dataset.meta = source_dataset.meta;
  result.dataset.meta.target_tokenizer_tag = target.tag();
  result.dataset.meta.k_percent = options.k_percent;
  for (const MaskedRecord& r : source_dataset.records) {
    try {
      result.dataset.records.push_back(align_record(r, source, target, options));
    } catch (const Error& e) {
      if (options.on_error == OnError::abort) throw AlignmentError("record " + r.sample_id + ": " + e.what());
      result.failures.push_back({r.sample_id, e.what()});
    }
  }
  result.dataset.meta.m_kept = result.dataset.records.size();
  return result;
}

std::vector<ScoredTrace> toy_score_batch(const toy::ToyScorer& scorer, std::span<const PoolSample> pool) {
  std::vector<ScoredTrace> out;
  for (const auto& s : pool) out.push_back(scorer.score_const(s.sample_id, s.query_text, s.response_text));
  return out;
}

}  // namespace titok::reference
