#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace titok {

/// Lowercased, punctuation-stripped, whitespace-split words.
std::vector<std::string> rouge_words(std::string_view text);

/// Words joined by single spaces; the key used for exact-duplicate checks.
std::string dedup_key(std::string_view text);

/// Longest common subsequence length (bit-parallel, 64 positions per word).
std::size_t lcs_length(std::span<const std::uint32_t> a, std::span<const std::uint32_t> b);

/// F-measure from an LCS length; 0 when either side is empty.
double rouge_l_from_lcs(std::size_t lcs, std::size_t candidate_len, std::size_t reference_len);

double rouge_l(std::string_view candidate, std::string_view reference);

enum class RejectReason { none, empty, duplicate, rouge, empty_label };

std::string_view to_string(RejectReason reason);

struct AdmissionPolicy {
  std::optional<double> rouge_threshold = 0.7;  // nullopt disables the ROUGE gate
  bool dedup = true;
  /// Reject at max ROUGE-L >= threshold instead of > threshold.
  bool reject_at_threshold = false;
};

struct Admission {
  bool accepted = false;
  RejectReason reason = RejectReason::none;
  double max_rouge = 0.0;
};

/// Ordered admission over an append-only accepted set. A verdict depends
/// only on the queries accepted before it.
class AdmissionGate {
 public:
  explicit AdmissionGate(AdmissionPolicy policy = {}) : policy_(policy) {}

  Admission check(std::string_view candidate) const;
  void add(std::string_view query);
  /// check(), then add() when accepted.
  Admission offer(std::string_view candidate);

  std::size_t size() const { return accepted_.size(); }
  const AdmissionPolicy& policy() const { return policy_; }

  /// Highest ROUGE-L of `candidate` against the accepted set (parallel).
  double max_rouge(std::string_view candidate) const;

 private:
  std::vector<std::uint32_t> encode(std::span<const std::string> words) const;

  AdmissionPolicy policy_;
  std::unordered_map<std::string, std::uint32_t> vocab_;
  std::vector<std::vector<std::uint32_t>> accepted_;
  std::unordered_set<std::string> keys_;
};

/// Stateless form: verdict for `candidate` against `accepted_so_far`.
Admission admit_query(std::string_view candidate, std::span<const std::string> accepted_so_far,
                      const AdmissionPolicy& policy);

}  // namespace titok
