#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace titok {

enum class NormRule {
  unicode_nfc,                 // canonical composition (ICU)
  strip_leading_space_marker,  // U+2581 and U+0120 become a plain space
  collapse_internal_marker,    // WordPiece "##" continuation markers removed
};

/// Text normalization applied before comparing decoded token spans.
/// Idempotent for every rule list.
class Normalizer {
 public:
  /// NFC followed by word-boundary marker mapping.
  Normalizer();
  explicit Normalizer(std::vector<NormRule> rules);

  std::string operator()(std::string_view text) const;
  const std::vector<NormRule>& rules() const { return rules_; }

  static NormRule parse_rule(std::string_view name);

 private:
  std::vector<NormRule> rules_;
};

const Normalizer& default_normalizer();

/// Offset of the first differing byte, or npos when equal.
std::size_t first_divergence(std::string_view a, std::string_view b);

}  // namespace titok
