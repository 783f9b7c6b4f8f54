#include "titok/normalize.hpp"

#include <unicode/normalizer2.h>
#include <unicode/unistr.h>

#include <algorithm>

#include "titok/datamodel.hpp"

namespace titok {
namespace {

std::string nfc(std::string_view text) {
  // ASCII is already in NFC; skip the ICU round trip.
  if (std::all_of(text.begin(), text.end(),
                  [](char c) { return static_cast<unsigned char>(c) < 0x80; })) {
    return std::string(text);
  }
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* normalizer = icu::Normalizer2::getNFCInstance(status);
  if (U_FAILURE(status)) throw Error("ICU NFC normalizer unavailable");
  icu::UnicodeString source = icu::UnicodeString::fromUTF8(
      icu::StringPiece(text.data(), static_cast<int32_t>(text.size())));
  icu::UnicodeString composed = normalizer->normalize(source, status);
  if (U_FAILURE(status)) throw Error("NFC normalization failed");
  std::string out;
  composed.toUTF8String(out);
  return out;
}

void replace_all(std::string& s, std::string_view from, std::string_view to) {
  std::size_t pos = 0;
  while ((pos = s.find(from, pos)) != std::string::npos) {
    s.replace(pos, from.size(), to);
    pos += to.size();
  }
}

}  // namespace

Normalizer::Normalizer()
    : rules_{NormRule::unicode_nfc, NormRule::strip_leading_space_marker} {}

Normalizer::Normalizer(std::vector<NormRule> rules) : rules_(std::move(rules)) {}

std::string Normalizer::operator()(std::string_view text) const {
  std::string out(text);
  bool wants_nfc = false;
  bool touched_after_nfc = false;
  for (NormRule rule : rules_) {
    switch (rule) {
      case NormRule::unicode_nfc:
        out = nfc(out);
        wants_nfc = true;
        touched_after_nfc = false;
        break;
      case NormRule::strip_leading_space_marker:
        replace_all(out, "▁", " ");
        replace_all(out, "Ġ", " ");
        touched_after_nfc = true;
        break;
      case NormRule::collapse_internal_marker:
        // Removing one marker can join two '#' into a new one; run to a
        // fixpoint so the rule stays idempotent.
        while (out.find("##") != std::string::npos) replace_all(out, "##", "");
        touched_after_nfc = true;
        break;
    }
  }
  // Marker removal can bring a base letter next to a combining mark.
  if (wants_nfc && touched_after_nfc) out = nfc(out);
  return out;
}

NormRule Normalizer::parse_rule(std::string_view name) {
  if (name == "unicode_nfc") return NormRule::unicode_nfc;
  if (name == "strip_leading_space_marker") return NormRule::strip_leading_space_marker;
  if (name == "collapse_internal_marker") return NormRule::collapse_internal_marker;
  throw Error("unknown normalization rule: " + std::string(name));
}

const Normalizer& default_normalizer() {
  static const Normalizer instance;
  return instance;
}

std::size_t first_divergence(std::string_view a, std::string_view b) {
  auto [ia, ib] = std::mismatch(a.begin(), a.end(), b.begin(), b.end());
  if (ia == a.end() && ib == b.end()) return std::string_view::npos;
  return static_cast<std::size_t>(ia - a.begin());
}

}  // namespace titok
