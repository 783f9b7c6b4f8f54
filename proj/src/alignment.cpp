#include "titok/alignment.hpp"

#include <exception>

namespace titok {
namespace {

std::string decode(const Tokenizer& tok, std::span<const TokenId> ids, std::size_t begin, std::size_t end,
                   const Normalizer& norm) {
  return norm(tok.detokenize(ids.subspan(begin, end - begin)));
}

}  // namespace

SpanAlignment align_spans(std::span<const TokenId> source_tokens, std::span<const TokenId> target_tokens,
                          const Tokenizer& source, const Tokenizer& target, const Normalizer& norm,
                          AlignOptions options) {
  if (source_tokens.empty() || target_tokens.empty()) throw AlignmentError("cannot align an empty sequence");
  const std::size_t S = source_tokens.size();
  const std::size_t T = target_tokens.size();
  {
    std::string a = decode(source, source_tokens, 0, S, norm);
    std::string b = decode(target, target_tokens, 0, T, norm);
    if (a != b) {
      std::size_t at = first_divergence(a, b);
      throw AlignmentError("texts differ, cannot align (first divergent byte " + std::to_string(at) + ")", at);
    }
  }

  SpanAlignment out;
  out.source_len = S;
  out.target_len = T;
  std::size_t i = 0;
  std::size_t j = 0;
  while (i < S && j < T) {
    std::size_t se = i + 1;
    std::size_t te = j + 1;
    bool matched = false;
    for (;;) {
      std::string a = decode(source, source_tokens, i, se, norm);
      std::string b = decode(target, target_tokens, j, te, norm);
      if (a == b) {
        matched = true;
        break;
      }
      if (a.size() <= b.size()) {
        if (se == S) break;
        ++se;
      } else {
        if (te == T) break;
        ++te;
      }
    }
    if (!matched) {
      if (options.strict) {
        throw AlignmentError("no span match from source token " + std::to_string(i) + " / target token " +
                             std::to_string(j));
      }
      se = S;
      te = T;
    }
    out.pairs.push_back({{i, se}, {j, te}, rule_for_widths(se - i, te - j)});
    i = se;
    j = te;
  }

  // One side ran out first: the leftover tokens decode to nothing after
  // normalization (the full texts agree), so they join the last pair.
  if (i < S || j < T) {
    if (options.strict) {
      const bool empty_tail = i < S ? decode(source, source_tokens, i, S, norm).empty()
                                    : decode(target, target_tokens, j, T, norm).empty();
      if (!empty_tail) throw AlignmentError("unmatched non-empty tail");
    }
    AlignedPair& last = out.pairs.back();
    last.source.end = S;
    last.target.end = T;
    last.rule = rule_for_widths(last.source.size(), last.target.size());
  }
  return out;
}

TokenMask propagate_mask(const SpanAlignment& alignment, const TokenMask& source_mask) {
  if (source_mask.keep.size() != alignment.source_len) {
    throw Error("mask length " + std::to_string(source_mask.keep.size()) + " differs from alignment source length " +
                std::to_string(alignment.source_len));
  }
  if (!source_mask.binary) throw Error("propagate_mask expects a binary source mask");

  TokenMask out;
  out.sample_id = source_mask.sample_id;
  out.keep.assign(alignment.target_len, 0.0);
  for (const AlignedPair& p : alignment.pairs) {
    double sum = 0.0;
    for (std::size_t s = p.source.begin; s < p.source.end; ++s) sum += source_mask.keep[s];
    const double value = sum / static_cast<double>(p.source.size());
    for (std::size_t t = p.target.begin; t < p.target.end; ++t) out.keep[t] = value;
  }
  out.binary = true;
  for (double v : out.keep) {
    if (v != 0.0 && v != 1.0) {
      out.binary = false;
      break;
    }
  }
  return out;
}

TokenMask reselect_topk(const TokenMask& fractional, double k_percent, RankPolicy policy) {
  Verdict verdict = validate_mask(fractional);
  if (!verdict.ok()) throw Error("reselect_topk: " + verdict.describe());
  return select_top(fractional.sample_id, fractional.keep, k_percent, policy);
}

MaskedRecord align_record(const MaskedRecord& record, const Tokenizer& source, const Tokenizer& target,
                          const AlignDatasetOptions& options) {
  const Normalizer& norm = options.norm ? *options.norm : default_normalizer();
  std::vector<TokenId> target_ids = target.tokenize(record.response_text);
  std::string expected = norm(record.response_text);
  std::string decoded = norm(target.detokenize(target_ids));
  if (decoded != expected) {
    const std::size_t at = first_divergence(decoded, expected);
    throw AlignmentError("target detokenization disagrees with response at byte " + std::to_string(at), at);
  }
  SpanAlignment alignment = align_spans(record.token_ids, target_ids, source, target, norm, options.align);
  TokenMask fractional = propagate_mask(alignment, record.mask);

  MaskedRecord out;
  out.sample_id = record.sample_id;
  out.query_text = record.query_text;
  out.response_text = record.response_text;
  out.token_ids = std::move(target_ids);
  out.mask = reselect_topk(fractional, options.k_percent, options.policy);
  if (out.mask.kept_count() == 0) throw AlignmentError("no target tokens kept");
  return out;
}

AlignDatasetResult align_dataset(const MaskedDataset& source_dataset, const Tokenizer& source,
                                 const Tokenizer& target, const AlignDatasetOptions& options) {
  check_k_percent(options.k_percent);
  const auto& records = source_dataset.records;
  std::vector<std::optional<MaskedRecord>> aligned(records.size());
  std::vector<std::string> errors(records.size());
  const auto n = static_cast<std::ptrdiff_t>(records.size());
#pragma omp parallel for schedule(dynamic, 8)
  for (std::ptrdiff_t r = 0; r < n; ++r) {
    try {
      aligned[r] = align_record(records[r], source, target, options);
    } catch (const std::exception& e) {
      errors[r] = e.what();
    }
  }

  AlignDatasetResult result;
  result.dataset.meta = source_dataset.meta;
  result.dataset.meta.target_tokenizer_tag = target.tag();
  result.dataset.meta.k_percent = options.k_percent;
  for (std::size_t r = 0; r < records.size(); ++r) {
    if (aligned[r]) {
      result.dataset.records.push_back(std::move(*aligned[r]));
      continue;
    }
    if (options.on_error == OnError::abort) {
      throw AlignmentError("record " + records[r].sample_id + ": " + errors[r]);
    }
    result.failures.push_back({records[r].sample_id, errors[r]});
  }
  result.dataset.meta.m_kept = result.dataset.records.size();
  return result;
}

}  // namespace titok
