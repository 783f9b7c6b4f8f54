#pragma once

#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "titok/datamodel.hpp"

namespace titok {

/// A registered tokenizer. Implementations must round-trip every string
/// of their supported alphabet and be safe for concurrent const use.
class Tokenizer {
 public:
  virtual ~Tokenizer() = default;

  virtual const std::string& tag() const = 0;
  virtual std::vector<TokenId> tokenize(std::string_view text) const = 0;
  virtual std::string detokenize(std::span<const TokenId> ids) const = 0;
  virtual std::string piece_text(TokenId id) const = 0;
};

using TokenizerHandle = std::shared_ptr<const Tokenizer>;

/// One token per Unicode code point; the token id is the code point.
class CharTokenizer final : public Tokenizer {
 public:
  explicit CharTokenizer(std::string tag = "char") : tag_(std::move(tag)) {}

  const std::string& tag() const override { return tag_; }
  std::vector<TokenId> tokenize(std::string_view text) const override;
  std::string detokenize(std::span<const TokenId> ids) const override;
  std::string piece_text(TokenId id) const override;

 private:
  std::string tag_;
};

/// Greedy longest-match over a fixed piece table, falling back to single
/// code points. Pieces get ids starting at kPieceBase; single code points
/// keep their code point as id.
class GreedyMergeTokenizer final : public Tokenizer {
 public:
  static constexpr TokenId kPieceBase = 0x110000;

  GreedyMergeTokenizer(std::string tag, std::vector<std::string> pieces);

  /// Parses the piece-table text format (see data/toy_merge_table.txt).
  static std::vector<std::string> parse_table(std::string_view text);

  const std::string& tag() const override { return tag_; }
  std::vector<TokenId> tokenize(std::string_view text) const override;
  std::string detokenize(std::span<const TokenId> ids) const override;
  std::string piece_text(TokenId id) const override;

 private:
  std::string tag_;
  std::vector<std::string> pieces_;
  std::unordered_map<std::string, TokenId> ids_;
  std::size_t longest_ = 0;
};

/// Byte-pair merges over code points, loaded from a vocabulary+merges file:
///
///     titok-bpe v1 <tag>
///     vocab <n>
///     <piece>            (n lines, id = line order)
///     merges <m>
///     <left> <right>     (m lines, rank = line order)
///
/// Pieces use the escapes \s (space), \n, \t and \\.
class BpeTokenizer final : public Tokenizer {
 public:
  BpeTokenizer(std::string tag, std::vector<std::string> vocab,
               std::vector<std::pair<std::string, std::string>> merges);

  /// The loaded tokenizer's tag is "file:<path>" so it resolves again.
  static std::shared_ptr<const BpeTokenizer> load(const std::string& path);
  /// An empty `tag` keeps the tag named in the header line.
  static std::shared_ptr<const BpeTokenizer> parse(std::string_view text, std::string tag = "");

  const std::string& tag() const override { return tag_; }
  std::vector<TokenId> tokenize(std::string_view text) const override;
  std::string detokenize(std::span<const TokenId> ids) const override;
  std::string piece_text(TokenId id) const override;

 private:
  std::string tag_;
  std::vector<std::string> vocab_;
  std::unordered_map<std::string, TokenId> ids_;
  std::map<std::pair<std::string, std::string>, std::size_t> ranks_;
};

/// Splits UTF-8 into code points; throws Error on malformed input.
std::vector<std::string> split_code_points(std::string_view text);

std::string unescape_piece(std::string_view piece);
std::string escape_piece(std::string_view piece);

/// Contents of the checked-in toy merge table.
std::string_view toy_merge_table_text();

/// Built-in tags: "char" and "merge". A tag of the form "file:<path>"
/// loads a BpeTokenizer from disk.
TokenizerHandle resolve_tokenizer(const std::string& tag);

}  // namespace titok
