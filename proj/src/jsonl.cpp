#include "titok/jsonl.hpp"

#include <istream>
#include <ostream>

namespace titok {
namespace {

constexpr std::size_t kFragmentBytes = 80;

void check_version(const Json& j) {
  if (!j.is_object()) throw ValidationError("record is not a JSON object");
  auto it = j.find("format_version");
  if (it == j.end() || !it->is_number_integer() || it->get<int>() != kFormatVersion) {
    throw ValidationError("missing or unsupported format_version");
  }
}

}  // namespace

ParseError::ParseError(std::size_t line, std::string fragment, const std::string& what)
    : Error("line " + std::to_string(line) + ": " + what + " near '" + fragment + "'"),
      line_(line),
      fragment_(std::move(fragment)) {}

void to_json(Json& j, const TokenRecord& r) {
  j = Json{{"logp_amateur", r.logp_amateur},
           {"logp_expert", r.logp_expert},
           {"token_id", r.token_id},
           {"token_text", r.token_text}};
}

void from_json(const Json& j, TokenRecord& r) {
  j.at("token_id").get_to(r.token_id);
  j.at("token_text").get_to(r.token_text);
  j.at("logp_amateur").get_to(r.logp_amateur);
  j.at("logp_expert").get_to(r.logp_expert);
}

void to_json(Json& j, const ScoredTrace& t) {
  j = Json{{"format_version", kFormatVersion},
           {"query_text", t.query_text},
           {"response_text", t.response_text},
           {"sample_id", t.sample_id},
           {"tokens", t.tokens}};
}

void from_json(const Json& j, ScoredTrace& t) {
  check_version(j);
  j.at("sample_id").get_to(t.sample_id);
  j.at("query_text").get_to(t.query_text);
  j.at("response_text").get_to(t.response_text);
  j.at("tokens").get_to(t.tokens);
}

void to_json(Json& j, const ExcessReport& r) {
  j = Json{{"format_version", kFormatVersion},
           {"mean_score", r.mean_score},
           {"sample_id", r.sample_id},
           {"scores", r.scores}};
}

void from_json(const Json& j, ExcessReport& r) {
  check_version(j);
  j.at("sample_id").get_to(r.sample_id);
  j.at("scores").get_to(r.scores);
  j.at("mean_score").get_to(r.mean_score);
}

void to_json(Json& j, const TokenMask& m) {
  j = Json{{"binary", m.binary},
           {"format_version", kFormatVersion},
           {"keep", m.keep},
           {"sample_id", m.sample_id}};
}

void from_json(const Json& j, TokenMask& m) {
  check_version(j);
  j.at("sample_id").get_to(m.sample_id);
  j.at("keep").get_to(m.keep);
  j.at("binary").get_to(m.binary);
  if (!validate_mask(m).ok()) throw ValidationError("mask " + m.sample_id + ": " + validate_mask(m).describe());
}

void to_json(Json& j, const MaskedRecord& r) {
  j = Json{{"format_version", kFormatVersion},
           {"keep", r.mask.keep},
           {"query_text", r.query_text},
           {"response_text", r.response_text},
           {"sample_id", r.sample_id},
           {"token_ids", r.token_ids}};
}

void from_json(const Json& j, MaskedRecord& r) {
  check_version(j);
  j.at("sample_id").get_to(r.sample_id);
  j.at("query_text").get_to(r.query_text);
  j.at("response_text").get_to(r.response_text);
  j.at("token_ids").get_to(r.token_ids);
  r.mask.sample_id = r.sample_id;
  j.at("keep").get_to(r.mask.keep);
  r.mask.binary = true;
}

void to_json(Json& j, const DatasetMeta& m) {
  j = Json{{"k_percent", m.k_percent},
           {"m_kept", m.m_kept},
           {"source_model_tag", m.source_model_tag},
           {"target_tokenizer_tag", m.target_tokenizer_tag}};
}

void from_json(const Json& j, DatasetMeta& m) {
  j.at("k_percent").get_to(m.k_percent);
  j.at("m_kept").get_to(m.m_kept);
  j.at("source_model_tag").get_to(m.source_model_tag);
  j.at("target_tokenizer_tag").get_to(m.target_tokenizer_tag);
}

void to_json(Json& j, const SpanAlignment& a) {
  Json pairs = Json::array();
  for (const AlignedPair& p : a.pairs) {
    pairs.push_back(Json{{"rule", to_string(p.rule)},
                         {"source", {p.source.begin, p.source.end}},
                         {"target", {p.target.begin, p.target.end}}});
  }
  j = Json{{"format_version", kFormatVersion},
           {"pairs", std::move(pairs)},
           {"source_len", a.source_len},
           {"target_len", a.target_len}};
}

void from_json(const Json& j, SpanAlignment& a) {
  check_version(j);
  j.at("source_len").get_to(a.source_len);
  j.at("target_len").get_to(a.target_len);
  a.pairs.clear();
  for (const Json& p : j.at("pairs")) {
    AlignedPair pair;
    pair.rule = align_rule_from_string(p.at("rule").get<std::string>());
    pair.source = {p.at("source").at(0).get<std::size_t>(), p.at("source").at(1).get<std::size_t>()};
    pair.target = {p.at("target").at(0).get<std::size_t>(), p.at("target").at(1).get<std::size_t>()};
    a.pairs.push_back(pair);
  }
}

std::optional<Json> JsonlReader::next() {
  std::string line;
  while (std::getline(in_, line)) {
    ++line_;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    fragment_ = line.substr(0, kFragmentBytes);
    try {
      return Json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(line_, fragment_, e.what());
    }
  }
  if (in_.bad()) throw Error("read failed after line " + std::to_string(line_));
  return std::nullopt;
}

std::string canonical(const Json& j) { return j.dump(); }

void write_line(std::ostream& out, const Json& j) {
  out << j.dump() << '\n';
  if (!out) throw Error("write failed");
}

MaskedDataset read_masked_dataset(std::istream& in) {
  JsonlReader reader(in);
  std::optional<Json> header = reader.next();
  if (!header) throw ParseError(0, "", "masked dataset is empty (missing meta header)");
  MaskedDataset dataset;
  try {
    check_version(*header);
    header->at("meta").get_to(dataset.meta);
  } catch (const std::exception& e) {
    throw ParseError(reader.line(), header->dump().substr(0, kFragmentBytes), e.what());
  }
  while (auto rec = reader.next_as<MaskedRecord>()) dataset.records.push_back(std::move(*rec));
  return dataset;
}

void write_masked_dataset(std::ostream& out, const MaskedDataset& dataset) {
  write_line(out, Json{{"format_version", kFormatVersion}, {"meta", dataset.meta}});
  for (const MaskedRecord& r : dataset.records) write_line(out, Json(r));
}

std::ifstream open_read(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open for reading: " + path);
  return in;
}

std::ofstream open_write(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open for writing: " + path);
  return out;
}

MaskedDataset read_masked_dataset_file(const std::string& path) {
  std::ifstream in = open_read(path);
  return read_masked_dataset(in);
}

void write_masked_dataset_file(const std::string& path, const MaskedDataset& dataset) {
  std::ofstream out = open_write(path);
  write_masked_dataset(out, dataset);
  if (!out.flush()) throw Error("write failed: " + path);
}

}  // namespace titok
