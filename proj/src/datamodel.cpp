#include "titok/datamodel.hpp"

#include <cmath>
#include <sstream>
#include <unordered_set>

#include "titok/normalize.hpp"

namespace titok {

std::size_t TokenMask::kept_count() const {
  std::size_t n = 0;
  for (double v : keep) n += v > 0.0 ? 1 : 0;
  return n;
}

std::string_view to_string(AlignRule rule) {
  switch (rule) {
    case AlignRule::one_to_one: return "one_to_one";
    case AlignRule::one_to_many: return "one_to_many";
    case AlignRule::many_to_one: return "many_to_one";
    case AlignRule::many_to_many: return "many_to_many";
  }
  return "?";
}

AlignRule align_rule_from_string(std::string_view name) {
  if (name == "one_to_one") return AlignRule::one_to_one;
  if (name == "one_to_many") return AlignRule::one_to_many;
  if (name == "many_to_one") return AlignRule::many_to_one;
  if (name == "many_to_many") return AlignRule::many_to_many;
  throw ValidationError("unknown alignment rule: " + std::string(name));
}

AlignRule rule_for_widths(std::size_t source_width, std::size_t target_width) {
  if (source_width == 1) return target_width == 1 ? AlignRule::one_to_one : AlignRule::one_to_many;
  return target_width == 1 ? AlignRule::many_to_one : AlignRule::many_to_many;
}

std::string Verdict::describe() const {
  std::ostringstream out;
  for (std::size_t i = 0; i < violations.size(); ++i) {
    if (i) out << "; ";
    out << violations[i].what;
    if (violations[i].index) out << " at " << *violations[i].index;
  }
  return out.str();
}

Verdict validate_trace(const ScoredTrace& trace, const Normalizer* norm) {
  Verdict verdict;
  auto& v = verdict.violations;
  if (trace.tokens.empty()) {
    v.push_back({"empty response", std::nullopt});
    return verdict;
  }
  std::string joined;
  for (std::size_t i = 0; i < trace.tokens.size(); ++i) {
    const TokenRecord& tok = trace.tokens[i];
    if (tok.token_id < 0) v.push_back({"negative token_id", i});
    if (!std::isfinite(tok.logp_amateur) || !std::isfinite(tok.logp_expert)) {
      v.push_back({"non-finite logp", i});
    } else if (tok.logp_amateur > 0.0 || tok.logp_expert > 0.0) {
      v.push_back({"positive logp", i});
    }
    joined += tok.token_text;
  }
  const Normalizer& n = norm ? *norm : default_normalizer();
  std::string lhs = n(joined);
  std::string rhs = n(trace.response_text);
  if (lhs != rhs) v.push_back({"token text does not match response", first_divergence(lhs, rhs)});
  return verdict;
}

Verdict validate_report(const ExcessReport& report) {
  Verdict verdict;
  if (report.scores.empty()) {
    verdict.violations.push_back({"empty scores", std::nullopt});
    return verdict;
  }
  double sum = 0.0;
  for (double s : report.scores) sum += s;
  double mean = sum / static_cast<double>(report.scores.size());
  double tol = 1e-12 * std::max(1.0, std::fabs(mean));
  if (!(std::fabs(mean - report.mean_score) <= tol)) {
    verdict.violations.push_back({"mean_score disagrees with scores", std::nullopt});
  }
  return verdict;
}

Verdict validate_mask(const TokenMask& mask) {
  Verdict verdict;
  for (std::size_t i = 0; i < mask.keep.size(); ++i) {
    double k = mask.keep[i];
    if (!(k >= 0.0 && k <= 1.0)) {
      verdict.violations.push_back({"keep value outside [0,1]", i});
    } else if (mask.binary && k != 0.0 && k != 1.0) {
      verdict.violations.push_back({"fractional value in binary mask", i});
    }
  }
  return verdict;
}

Verdict validate_dataset(const MaskedDataset& dataset) {
  Verdict verdict;
  auto& v = verdict.violations;
  if (dataset.meta.m_kept != dataset.records.size()) {
    v.push_back({"m_kept differs from record count", std::nullopt});
  }
  if (!(dataset.meta.k_percent > 0.0 && dataset.meta.k_percent <= 100.0)) {
    v.push_back({"k_percent outside (0,100]", std::nullopt});
  }
  std::unordered_set<std::string> seen;
  for (std::size_t r = 0; r < dataset.records.size(); ++r) {
    const MaskedRecord& rec = dataset.records[r];
    if (!seen.insert(rec.sample_id).second) v.push_back({"duplicate sample_id", r});
    if (rec.mask.keep.size() != rec.token_ids.size()) v.push_back({"mask length differs from token_ids", r});
    if (!rec.mask.binary) v.push_back({"dataset mask is not binary", r});
    if (!validate_mask(rec.mask).ok()) v.push_back({"invalid mask values", r});
    if (rec.mask.kept_count() == 0) v.push_back({"record keeps no tokens", r});
  }
  return verdict;
}

Verdict validate_partition(const SpanAlignment& alignment) {
  Verdict verdict;
  auto& v = verdict.violations;
  std::size_t src = 0;
  std::size_t tgt = 0;
  for (std::size_t i = 0; i < alignment.pairs.size(); ++i) {
    const AlignedPair& p = alignment.pairs[i];
    if (p.source.begin != src || p.source.end <= p.source.begin) v.push_back({"source span gap or overlap", i});
    if (p.target.begin != tgt || p.target.end <= p.target.begin) v.push_back({"target span gap or overlap", i});
    if (p.rule != rule_for_widths(p.source.size(), p.target.size())) v.push_back({"rule tag disagrees with widths", i});
    src = p.source.end;
    tgt = p.target.end;
  }
  if (src != alignment.source_len) v.push_back({"source spans do not cover the sequence", std::nullopt});
  if (tgt != alignment.target_len) v.push_back({"target spans do not cover the sequence", std::nullopt});
  return verdict;
}

void require_unique_ids(std::span<const std::string> ids) {
  std::unordered_set<std::string> seen;
  seen.reserve(ids.size());
  for (const auto& id : ids) {
    if (!seen.insert(id).second) throw ValidationError("duplicate sample_id: " + id);
  }
}

}  // namespace titok
