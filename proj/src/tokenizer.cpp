#include "titok/tokenizer.hpp"

#include <unicode/utf8.h>

#include <algorithm>
#include <fstream>
#include <limits>
#include <mutex>
#include <sstream>

namespace titok {
namespace {

std::string encode_code_point(TokenId cp) {
  if (cp < 0 || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) {
    throw Error("token id is not a code point: " + std::to_string(cp));
  }
  char buf[4];
  int32_t len = 0;
  UBool error = false;
  U8_APPEND(reinterpret_cast<uint8_t*>(buf), len, 4, static_cast<UChar32>(cp), error);
  if (error) throw Error("cannot encode code point " + std::to_string(cp));
  return std::string(buf, static_cast<std::size_t>(len));
}

std::vector<UChar32> decode_code_points(std::string_view text) {
  std::vector<UChar32> out;
  out.reserve(text.size());
  const auto* s = reinterpret_cast<const uint8_t*>(text.data());
  int32_t i = 0;
  const auto length = static_cast<int32_t>(text.size());
  while (i < length) {
    int32_t at = i;
    UChar32 c;
    U8_NEXT(s, i, length, c);
    if (c < 0) throw Error("malformed UTF-8 at byte " + std::to_string(at));
    out.push_back(c);
  }
  return out;
}

}  // namespace

std::vector<std::string> split_code_points(std::string_view text) {
  std::vector<std::string> out;
  const auto* s = reinterpret_cast<const uint8_t*>(text.data());
  int32_t i = 0;
  const auto length = static_cast<int32_t>(text.size());
  while (i < length) {
    int32_t at = i;
    UChar32 c;
    U8_NEXT(s, i, length, c);
    if (c < 0) throw Error("malformed UTF-8 at byte " + std::to_string(at));
    out.emplace_back(text.substr(static_cast<std::size_t>(at), static_cast<std::size_t>(i - at)));
  }
  return out;
}

std::string unescape_piece(std::string_view piece) {
  std::string out;
  for (std::size_t i = 0; i < piece.size(); ++i) {
    if (piece[i] != '\\' || i + 1 == piece.size()) {
      out += piece[i];
      continue;
    }
    switch (piece[++i]) {
      case 's': out += ' '; break;
      case 'n': out += '\n'; break;
      case 't': out += '\t'; break;
      case '\\': out += '\\'; break;
      default: throw Error("bad escape in piece: " + std::string(piece));
    }
  }
  return out;
}

std::string escape_piece(std::string_view piece) {
  std::string out;
  for (char c : piece) {
    switch (c) {
      case ' ': out += "\\s"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      case '\\': out += "\\\\"; break;
      default: out += c;
    }
  }
  return out;
}

// ---------------------------------------------------------------- char

std::vector<TokenId> CharTokenizer::tokenize(std::string_view text) const {
  std::vector<TokenId> ids;
  for (UChar32 c : decode_code_points(text)) ids.push_back(c);
  return ids;
}

std::string CharTokenizer::detokenize(std::span<const TokenId> ids) const {
  std::string out;
  for (TokenId id : ids) out += encode_code_point(id);
  return out;
}

std::string CharTokenizer::piece_text(TokenId id) const { return encode_code_point(id); }

// ---------------------------------------------------------------- merge

GreedyMergeTokenizer::GreedyMergeTokenizer(std::string tag, std::vector<std::string> pieces)
    : tag_(std::move(tag)), pieces_(std::move(pieces)) {
  for (std::size_t i = 0; i < pieces_.size(); ++i) {
    if (pieces_[i].empty()) throw Error("empty piece in merge table");
    if (!ids_.emplace(pieces_[i], kPieceBase + static_cast<TokenId>(i)).second) {
      throw Error("duplicate piece in merge table: '" + pieces_[i] + "'");
    }
    longest_ = std::max(longest_, pieces_[i].size());
  }
}

std::vector<std::string> GreedyMergeTokenizer::parse_table(std::string_view text) {
  std::vector<std::string> pieces;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::string piece = unescape_piece(line);
    // Single code points are implicit.
    if (split_code_points(piece).size() > 1) pieces.push_back(std::move(piece));
  }
  return pieces;
}

std::vector<TokenId> GreedyMergeTokenizer::tokenize(std::string_view text) const {
  std::vector<TokenId> ids;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t max_len = std::min(longest_, text.size() - pos);
    bool matched = false;
    for (std::size_t len = max_len; len >= 2; --len) {
      auto it = ids_.find(std::string(text.substr(pos, len)));
      if (it != ids_.end()) {
        ids.push_back(it->second);
        pos += len;
        matched = true;
        break;
      }
    }
    if (matched) continue;
    const auto* s = reinterpret_cast<const uint8_t*>(text.data());
    auto i = static_cast<int32_t>(pos);
    UChar32 c;
    U8_NEXT(s, i, static_cast<int32_t>(text.size()), c);
    if (c < 0) throw Error("malformed UTF-8 at byte " + std::to_string(pos));
    ids.push_back(c);
    pos = static_cast<std::size_t>(i);
  }
  return ids;
}

std::string GreedyMergeTokenizer::piece_text(TokenId id) const {
  if (id >= kPieceBase) {
    auto index = static_cast<std::size_t>(id - kPieceBase);
    if (index >= pieces_.size()) throw Error("unknown merge token id " + std::to_string(id));
    return pieces_[index];
  }
  return encode_code_point(id);
}

std::string GreedyMergeTokenizer::detokenize(std::span<const TokenId> ids) const {
  std::string out;
  for (TokenId id : ids) out += piece_text(id);
  return out;
}

// ---------------------------------------------------------------- bpe

BpeTokenizer::BpeTokenizer(std::string tag, std::vector<std::string> vocab,
                           std::vector<std::pair<std::string, std::string>> merges)
    : tag_(std::move(tag)), vocab_(std::move(vocab)) {
  for (std::size_t i = 0; i < vocab_.size(); ++i) {
    if (!ids_.emplace(vocab_[i], static_cast<TokenId>(i)).second) {
      throw Error("duplicate vocabulary piece: '" + vocab_[i] + "'");
    }
  }
  for (std::size_t r = 0; r < merges.size(); ++r) {
    if (!ids_.count(merges[r].first + merges[r].second)) {
      throw Error("merge result not in vocabulary: '" + merges[r].first + merges[r].second + "'");
    }
    ranks_.emplace(std::move(merges[r]), r);
  }
}

std::shared_ptr<const BpeTokenizer> BpeTokenizer::parse(std::string_view text, std::string tag) {
  std::istringstream in{std::string(text)};
  std::string line;
  auto expect = [&](const char* what) {
    if (!std::getline(in, line)) throw Error(std::string("bpe file truncated: expected ") + what);
  };
  expect("header");
  std::istringstream header(line);
  std::string magic, version, header_tag;
  header >> magic >> version >> header_tag;
  if (magic != "titok-bpe" || version != "v1" || header_tag.empty()) throw Error("bad bpe header: " + line);
  if (tag.empty()) tag = header_tag;

  auto read_count = [&](const std::string& keyword) {
    expect(keyword.c_str());
    std::istringstream ls(line);
    std::string word;
    std::size_t n = 0;
    if (!(ls >> word >> n) || word != keyword) throw Error("expected '" + keyword + " <n>', got: " + line);
    return n;
  };

  std::vector<std::string> vocab;
  for (std::size_t n = read_count("vocab"), i = 0; i < n; ++i) {
    expect("vocabulary piece");
    vocab.push_back(unescape_piece(line));
  }
  std::vector<std::pair<std::string, std::string>> merges;
  for (std::size_t n = read_count("merges"), i = 0; i < n; ++i) {
    expect("merge rule");
    std::istringstream ls(line);
    std::string left, right;
    if (!(ls >> left >> right)) throw Error("bad merge rule: " + line);
    merges.emplace_back(unescape_piece(left), unescape_piece(right));
  }
  return std::make_shared<const BpeTokenizer>(tag, std::move(vocab), std::move(merges));
}

std::shared_ptr<const BpeTokenizer> BpeTokenizer::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open tokenizer file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str(), "file:" + path);
}

std::vector<TokenId> BpeTokenizer::tokenize(std::string_view text) const {
  std::vector<std::string> parts = split_code_points(text);
  // Repeatedly apply the lowest-rank merge present; the leftmost occurrence
  // wins within a rank.
  for (;;) {
    std::size_t best_rank = std::numeric_limits<std::size_t>::max();
    std::size_t best_at = 0;
    for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
      auto it = ranks_.find({parts[i], parts[i + 1]});
      if (it != ranks_.end() && it->second < best_rank) {
        best_rank = it->second;
        best_at = i;
      }
    }
    if (best_rank == std::numeric_limits<std::size_t>::max()) break;
    parts[best_at] += parts[best_at + 1];
    parts.erase(parts.begin() + static_cast<std::ptrdiff_t>(best_at) + 1);
  }
  std::vector<TokenId> ids;
  ids.reserve(parts.size());
  for (const std::string& p : parts) {
    auto it = ids_.find(p);
    if (it == ids_.end()) throw Error(tag_ + ": piece not in vocabulary: '" + p + "'");
    ids.push_back(it->second);
  }
  return ids;
}

std::string BpeTokenizer::piece_text(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= vocab_.size()) {
    throw Error(tag_ + ": unknown token id " + std::to_string(id));
  }
  return vocab_[static_cast<std::size_t>(id)];
}

std::string BpeTokenizer::detokenize(std::span<const TokenId> ids) const {
  std::string out;
  for (TokenId id : ids) out += piece_text(id);
  return out;
}

// ---------------------------------------------------------------- registry

TokenizerHandle resolve_tokenizer(const std::string& tag) {
  static std::mutex mu;
  static std::map<std::string, TokenizerHandle> cache;
  std::lock_guard lock(mu);
  if (auto it = cache.find(tag); it != cache.end()) return it->second;

  TokenizerHandle handle;
  if (tag == "char") {
    handle = std::make_shared<const CharTokenizer>();
  } else if (tag == "merge") {
    handle = std::make_shared<const GreedyMergeTokenizer>(
        "merge", GreedyMergeTokenizer::parse_table(toy_merge_table_text()));
  } else if (tag.rfind("file:", 0) == 0) {
    handle = BpeTokenizer::load(tag.substr(5));
  } else {
    throw Error("unknown tokenizer tag: " + tag);
  }
  cache.emplace(tag, handle);
  return handle;
}

}  // namespace titok
