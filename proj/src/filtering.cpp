#include "titok/filtering.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace titok {
namespace {

// Strict weak order: higher score first, then lower index.
struct Better {
  std::span<const double> score;
  bool operator()(std::size_t a, std::size_t b) const {
    if (score[a] != score[b]) return score[a] > score[b];
    return a < b;
  }
};

void keep_best(std::vector<std::size_t>& idx, std::size_t count, const Better& better) {
  count = std::min(count, idx.size());
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(count), idx.end(), better);
  idx.resize(count);
}

}  // namespace

void check_k_percent(double k_percent) {
  if (!(k_percent > 0.0 && k_percent <= 100.0)) {
    throw Error("k_percent must be in (0, 100], got " + std::to_string(k_percent));
  }
}

std::size_t kept_token_count(std::size_t length, double k_percent, bool floor_min_one) {
  check_k_percent(k_percent);
  // k*L is exact for integral k, so the division rounds once.
  auto n = static_cast<std::size_t>(std::floor(k_percent * static_cast<double>(length) / 100.0));
  n = std::min(n, length);
  if (floor_min_one && length > 0) n = std::max<std::size_t>(n, 1);
  return n;
}

std::vector<KeptSample> filter_samples(std::span<const ExcessReport> reports, std::size_t m) {
  if (m == 0) throw Error("M must be positive");
  if (m > reports.size()) {
    throw Error("M = " + std::to_string(m) + " exceeds pool of " + std::to_string(reports.size()));
  }
  std::vector<std::string> ids;
  ids.reserve(reports.size());
  for (const auto& r : reports) ids.push_back(r.sample_id);
  require_unique_ids(ids);

  std::vector<double> means(reports.size());
  for (std::size_t i = 0; i < reports.size(); ++i) means[i] = reports[i].mean_score;
  const Better better{means};

  std::vector<std::size_t> merged;
#pragma omp parallel
  {
    const auto threads = static_cast<std::size_t>(omp_get_num_threads());
    const auto tid = static_cast<std::size_t>(omp_get_thread_num());
    const std::size_t chunk = (reports.size() + threads - 1) / threads;
    const std::size_t lo = std::min(reports.size(), tid * chunk);
    const std::size_t hi = std::min(reports.size(), lo + chunk);
    std::vector<std::size_t> local(hi - lo);
    std::iota(local.begin(), local.end(), lo);
    keep_best(local, m, better);
#pragma omp critical
    merged.insert(merged.end(), local.begin(), local.end());
  }
  keep_best(merged, m, better);

  std::vector<KeptSample> kept;
  kept.reserve(m);
  for (std::size_t i : merged) kept.push_back({reports[i].sample_id, reports[i].mean_score, i});
  return kept;
}

TokenMask select_top(std::string sample_id, std::span<const double> scores, double k_percent,
                     RankPolicy policy) {
  if (scores.empty()) throw Error("cannot select tokens of an empty response");
  const std::size_t n = kept_token_count(scores.size(), k_percent, policy.floor_min_one);
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  keep_best(idx, n, Better{scores});

  TokenMask mask;
  mask.sample_id = std::move(sample_id);
  mask.binary = true;
  mask.keep.assign(scores.size(), 0.0);
  for (std::size_t i : idx) mask.keep[i] = 1.0;
  return mask;
}

TokenMask select_tokens(const ExcessReport& report, double k_percent, RankPolicy policy) {
  return select_top(report.sample_id, report.scores, k_percent, policy);
}

std::vector<TokenMask> select_tokens_batch(std::span<const ExcessReport> reports, double k_percent,
                                           RankPolicy policy) {
  check_k_percent(k_percent);
  for (const auto& r : reports) {
    if (r.scores.empty()) throw Error("cannot select tokens of an empty response: " + r.sample_id);
  }
  std::vector<TokenMask> out(reports.size());
  const auto n = static_cast<std::ptrdiff_t>(reports.size());
#pragma omp parallel for schedule(dynamic, 64)
  for (std::ptrdiff_t i = 0; i < n; ++i) out[i] = select_tokens(reports[i], k_percent, policy);
  return out;
}

MaskStats apply_mask_stats(const MaskedDataset& dataset) {
  MaskStats stats;
  stats.records = dataset.records.size();
  if (dataset.records.empty()) return stats;
  stats.histogram.assign(10, 0);
  for (const MaskedRecord& rec : dataset.records) {
    const std::size_t total = rec.mask.keep.size();
    const std::size_t kept = rec.mask.kept_count();
    stats.tokens_total += total;
    stats.tokens_kept += kept;
    const std::size_t bucket = total == 0 ? 0 : std::min<std::size_t>(9, kept * 10 / total);
    ++stats.histogram[bucket];
  }
  return stats;
}

}  // namespace titok
