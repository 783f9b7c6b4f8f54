#include "titok/rouge.hpp"

#include <algorithm>
#include <bit>
#include <cctype>

namespace titok {
namespace {

constexpr std::uint32_t kUnknownWord = 0xFFFFFFFFu;

}  // namespace

std::vector<std::string> rouge_words(std::string_view text) {
  std::vector<std::string> words;
  std::string current;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      if (!current.empty()) words.push_back(std::move(current));
      current.clear();
    } else if (c < 0x80 && std::ispunct(c)) {
      continue;
    } else {
      current += static_cast<char>(c < 0x80 ? std::tolower(c) : c);
    }
  }
  if (!current.empty()) words.push_back(std::move(current));
  return words;
}

std::string dedup_key(std::string_view text) {
  std::string key;
  for (const std::string& w : rouge_words(text)) {
    if (!key.empty()) key += ' ';
    key += w;
  }
  return key;
}

std::size_t lcs_length(std::span<const std::uint32_t> a, std::span<const std::uint32_t> b) {
  if (a.empty() || b.empty()) return 0;
  const std::size_t m = a.size();
  const std::size_t blocks = (m + 63) / 64;

  // Position masks of every symbol of `a`.
  std::unordered_map<std::uint32_t, std::vector<std::uint64_t>> match;
  for (std::size_t i = 0; i < m; ++i) {
    auto& bits = match[a[i]];
    if (bits.empty()) bits.assign(blocks, 0);
    bits[i / 64] |= std::uint64_t{1} << (i % 64);
  }

  std::vector<std::uint64_t> v(blocks, ~std::uint64_t{0});
  for (std::uint32_t symbol : b) {
    auto it = match.find(symbol);
    if (it == match.end()) continue;
    const auto& pm = it->second;
    std::uint64_t carry = 0;
    for (std::size_t w = 0; w < blocks; ++w) {
      const std::uint64_t u = v[w] & pm[w];
      const std::uint64_t s1 = v[w] + u;
      const std::uint64_t s2 = s1 + carry;
      carry = (s1 < v[w] || s2 < s1) ? 1 : 0;
      v[w] = s2 | (v[w] - u);
    }
  }

  std::size_t zeros = 0;
  for (std::size_t w = 0; w < blocks; ++w) {
    std::uint64_t word = ~v[w];
    if (w + 1 == blocks && m % 64 != 0) word &= (std::uint64_t{1} << (m % 64)) - 1;
    zeros += static_cast<std::size_t>(std::popcount(word));
  }
  return zeros;
}

double rouge_l_from_lcs(std::size_t lcs, std::size_t candidate_len, std::size_t reference_len) {
  if (candidate_len == 0 || reference_len == 0) return 0.0;
  // 2PR / (P + R) reduces to 2 * lcs / (|c| + |r|). One rounding instead
  // of five keeps exact ratios such as 0.7 on the right side of the gate.
  return 2.0 * static_cast<double>(lcs) / static_cast<double>(candidate_len + reference_len);
}

double rouge_l(std::string_view candidate, std::string_view reference) {
  std::vector<std::string> cw = rouge_words(candidate);
  std::vector<std::string> rw = rouge_words(reference);
  std::unordered_map<std::string, std::uint32_t> ids;
  auto encode = [&](const std::vector<std::string>& words) {
    std::vector<std::uint32_t> out;
    out.reserve(words.size());
    for (const auto& w : words) out.push_back(ids.emplace(w, static_cast<std::uint32_t>(ids.size())).first->second);
    return out;
  };
  std::vector<std::uint32_t> c = encode(cw);
  std::vector<std::uint32_t> r = encode(rw);
  return rouge_l_from_lcs(lcs_length(c, r), c.size(), r.size());
}

std::string_view to_string(RejectReason reason) {
  switch (reason) {
    case RejectReason::none: return "none";
    case RejectReason::empty: return "empty";
    case RejectReason::duplicate: return "duplicate";
    case RejectReason::rouge: return "rouge";
    case RejectReason::empty_label: return "empty_label";
  }
  return "?";
}

std::vector<std::uint32_t> AdmissionGate::encode(std::span<const std::string> words) const {
  std::vector<std::uint32_t> out;
  out.reserve(words.size());
  for (const auto& w : words) {
    auto it = vocab_.find(w);
    out.push_back(it == vocab_.end() ? kUnknownWord : it->second);
  }
  return out;
}

double AdmissionGate::max_rouge(std::string_view candidate) const {
  std::vector<std::string> words = rouge_words(candidate);
  std::vector<std::uint32_t> ids = encode(words);
  double best = 0.0;
  const auto n = static_cast<std::ptrdiff_t>(accepted_.size());
#pragma omp parallel for reduction(max : best) schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto& ref = accepted_[static_cast<std::size_t>(i)];
    best = std::max(best, rouge_l_from_lcs(lcs_length(ids, ref), ids.size(), ref.size()));
  }
  return best;
}

Admission AdmissionGate::check(std::string_view candidate) const {
  Admission verdict;
  std::string key = dedup_key(candidate);
  if (key.empty()) {
    verdict.reason = RejectReason::empty;
    return verdict;
  }
  if (policy_.dedup && keys_.count(key)) {
    verdict.reason = RejectReason::duplicate;
    verdict.max_rouge = 1.0;
    return verdict;
  }
  if (policy_.rouge_threshold) {
    verdict.max_rouge = max_rouge(candidate);
    const double t = *policy_.rouge_threshold;
    const bool too_close = policy_.reject_at_threshold ? verdict.max_rouge >= t : verdict.max_rouge > t;
    if (too_close) {
      verdict.reason = RejectReason::rouge;
      return verdict;
    }
  }
  verdict.accepted = true;
  return verdict;
}

void AdmissionGate::add(std::string_view query) {
  std::vector<std::string> words = rouge_words(query);
  std::vector<std::uint32_t> ids;
  ids.reserve(words.size());
  for (const auto& w : words) ids.push_back(vocab_.emplace(w, static_cast<std::uint32_t>(vocab_.size())).first->second);
  accepted_.push_back(std::move(ids));
  keys_.insert(dedup_key(query));
}

Admission AdmissionGate::offer(std::string_view candidate) {
  Admission verdict = check(candidate);
  if (verdict.accepted) add(candidate);
  return verdict;
}

Admission admit_query(std::string_view candidate, std::span<const std::string> accepted_so_far,
                      const AdmissionPolicy& policy) {
  AdmissionGate gate(policy);
  for (const auto& q : accepted_so_far) gate.add(q);
  return gate.check(candidate);
}

}  // namespace titok
