#include "titok/excess.hpp"

#include <exception>
#include <optional>

namespace titok {

ExcessReport excess_scores(const ScoredTrace& trace) {
  Verdict verdict = validate_trace(trace);
  if (!verdict.ok()) throw ValidationError("trace " + trace.sample_id + ": " + verdict.describe());

  ExcessReport report;
  report.sample_id = trace.sample_id;
  report.scores.reserve(trace.tokens.size());
  for (const TokenRecord& tok : trace.tokens) report.scores.push_back(tok.logp_expert - tok.logp_amateur);
  report.mean_score = mean_excess(report.scores);
  return report;
}

double mean_excess(std::span<const double> scores) {
  if (scores.empty()) throw Error("empty response has no mean");
  double sum = 0.0;
  for (double s : scores) sum += s;
  return sum / static_cast<double>(scores.size());
}

double mean_excess(const ExcessReport& report) { return mean_excess(report.scores); }

std::vector<ExcessReport> excess_scores_batch(std::span<const ScoredTrace> traces) {
  std::vector<std::string> ids;
  ids.reserve(traces.size());
  for (const auto& t : traces) ids.push_back(t.sample_id);
  require_unique_ids(ids);

  std::vector<ExcessReport> out(traces.size());
  std::vector<std::optional<std::string>> errors(traces.size());
  const auto n = static_cast<std::ptrdiff_t>(traces.size());
#pragma omp parallel for schedule(dynamic, 64)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      out[i] = excess_scores(traces[i]);
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  }
  for (const auto& e : errors) {
    if (e) throw ValidationError(*e);
  }
  return out;
}

}  // namespace titok
