#pragma once

// Newline-delimited JSON wire formats. One object per line, UTF-8, LF.
// Object keys are emitted in alphabetical order so output bytes are
// deterministic; every record carries "format_version": 1.

#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "titok/datamodel.hpp"

namespace titok {

using Json = nlohmann::json;

inline constexpr int kFormatVersion = 1;

class ParseError : public Error {
 public:
  ParseError(std::size_t line, std::string fragment, const std::string& what);

  std::size_t line() const { return line_; }
  const std::string& fragment() const { return fragment_; }

 private:
  std::size_t line_;
  std::string fragment_;
};

void to_json(Json& j, const TokenRecord& r);
void from_json(const Json& j, TokenRecord& r);
void to_json(Json& j, const ScoredTrace& t);
void from_json(const Json& j, ScoredTrace& t);
void to_json(Json& j, const ExcessReport& r);
void from_json(const Json& j, ExcessReport& r);
void to_json(Json& j, const TokenMask& m);
void from_json(const Json& j, TokenMask& m);
void to_json(Json& j, const MaskedRecord& r);
void from_json(const Json& j, MaskedRecord& r);
void to_json(Json& j, const DatasetMeta& m);
void from_json(const Json& j, DatasetMeta& m);
void to_json(Json& j, const SpanAlignment& a);
void from_json(const Json& j, SpanAlignment& a);

/// Streams JSON objects from a line-delimited source. Blank lines are
/// skipped; a malformed line throws ParseError after every earlier record
/// has already been returned.
class JsonlReader {
 public:
  explicit JsonlReader(std::istream& in) : in_(in) {}

  std::optional<Json> next();

  template <class T>
  std::optional<T> next_as() {
    std::optional<Json> j = next();
    if (!j) return std::nullopt;
    try {
      return j->get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(line_, fragment_, e.what());
    } catch (const ValidationError& e) {
      throw ParseError(line_, fragment_, e.what());
    }
  }

  /// 1-based number of the last line read.
  std::size_t line() const { return line_; }

 private:
  std::istream& in_;
  std::size_t line_ = 0;
  std::string fragment_;
};

/// Canonical single-line encoding followed by LF.
void write_line(std::ostream& out, const Json& j);
std::string canonical(const Json& j);

template <class T>
std::vector<T> read_all(std::istream& in) {
  JsonlReader reader(in);
  std::vector<T> out;
  while (auto rec = reader.next_as<T>()) out.push_back(std::move(*rec));
  return out;
}

template <class T>
void write_all(std::ostream& out, const std::vector<T>& records) {
  for (const T& r : records) write_line(out, Json(r));
}

/// Masked-dataset files start with a {"meta": ...} header line.
MaskedDataset read_masked_dataset(std::istream& in);
void write_masked_dataset(std::ostream& out, const MaskedDataset& dataset);

// File-path conveniences; I/O failures throw Error.
std::ifstream open_read(const std::string& path);
std::ofstream open_write(const std::string& path);

template <class T>
std::vector<T> read_file(const std::string& path) {
  std::ifstream in = open_read(path);
  return read_all<T>(in);
}

template <class T>
void write_file(const std::string& path, const std::vector<T>& records) {
  std::ofstream out = open_write(path);
  write_all(out, records);
  if (!out.flush()) throw Error("write failed: " + path);
}

MaskedDataset read_masked_dataset_file(const std::string& path);
void write_masked_dataset_file(const std::string& path, const MaskedDataset& dataset);

}  // namespace titok
