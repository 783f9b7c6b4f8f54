#include "titok/config.hpp"

#include <cstdlib>
#include <fstream>
#include <istream>

namespace titok {
namespace {

std::string strip(const std::string& s) { return trim(s); }

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    double x = std::stod(v, &used);
    if (used == v.size()) return x;
  } catch (const std::exception&) {
  }
  throw ConfigError(key + ": expected a number, got '" + v + "'");
}

std::uint64_t to_uint(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    if (!v.empty() && v[0] != '-') {
      unsigned long long x = std::stoull(v, &used);
      if (used == v.size()) return x;
    }
  } catch (const std::exception&) {
  }
  throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(key + ": expected true/false, got '" + v + "'");
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : v) {
    if (c == ',') {
      out.push_back(strip(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!strip(cur).empty()) out.push_back(strip(cur));
  return out;
}

std::string rule_name(NormRule r) {
  switch (r) {
    case NormRule::unicode_nfc: return "unicode_nfc";
    case NormRule::strip_leading_space_marker: return "strip_leading_space_marker";
    case NormRule::collapse_internal_marker: return "collapse_internal_marker";
  }
  return "?";
}

}  // namespace

void set_config_value(PipelineConfig& c, const std::string& key, const std::string& v) {
  if (key == "pool_size") c.pool_size = to_uint(key, v);
  else if (key == "keep_m") c.keep_m = to_uint(key, v);
  else if (key == "k_percent") c.k_percent = to_double(key, v);
  else if (key == "rouge_threshold") c.rouge_threshold = v == "disabled" ? std::nullopt : std::optional(to_double(key, v));
  else if (key == "rouge_reject_at_threshold") c.rouge_reject_at_threshold = to_bool(key, v);
  else if (key == "dedup") c.dedup = to_bool(key, v);
  else if (key == "seed") c.seed = to_uint(key, v);
  else if (key == "tokenizer_source") c.tokenizer_source = v;
  else if (key == "tokenizer_target") c.tokenizer_target = v;
  else if (key == "normalizer") {
    c.normalizer.clear();
    try {
      for (const auto& name : split_list(v)) c.normalizer.push_back(Normalizer::parse_rule(name));
    } catch (const Error& e) {
      throw ConfigError(key + ": " + e.what());
    }
  }
  else if (key == "generator") c.generator = v;
  else if (key == "scorer") c.scorer = v;
  else if (key == "target_generator") c.target_generator = v;
  else if (key == "query_source") c.query_source = v;
  else if (key == "out_dir") c.out_dir = v;
  else if (key == "task") c.task = v;
  else if (key == "seeds_file") c.seeds_file = v;
  else if (key == "query_template") c.query_template = v;
  else if (key == "label_template") c.label_template = v;
  else if (key == "few_shot_count") c.few_shot_count = to_uint(key, v);
  else if (key == "query_temperature") c.query_params.temperature = to_double(key, v);
  else if (key == "query_top_p") c.query_params.top_p = to_double(key, v);
  else if (key == "query_max_tokens") c.query_params.max_tokens = to_uint(key, v);
  else if (key == "label_temperature") c.label_params.temperature = to_double(key, v);
  else if (key == "label_top_p") c.label_params.top_p = to_double(key, v);
  else if (key == "label_max_tokens") c.label_params.max_tokens = to_uint(key, v);
  else if (key == "greedy") c.query_params.greedy = c.label_params.greedy = to_bool(key, v);
  else if (key == "source_model_tag") c.source_model_tag = v;
  else if (key == "strict_floor") c.strict_floor = to_bool(key, v);
  else if (key == "align_on_error") {
    if (v == "skip") c.align_on_error = OnError::skip;
    else if (v == "abort") c.align_on_error = OnError::abort;
    else throw ConfigError(key + ": expected skip or abort, got '" + v + "'");
  }
  else if (key == "align_strict") c.align_strict = to_bool(key, v);
  else if (key == "toy") c.toy = to_bool(key, v);
  else if (key == "toy.alpha") c.toy_alpha = to_double(key, v);
  else if (key == "toy.world_seed") c.toy_world.seed = to_uint(key, v);
  else if (key == "toy.base_sentences") c.toy_world.base_sentences = to_uint(key, v);
  else if (key == "toy.planted_sentences") c.toy_world.planted_sentences = to_uint(key, v);
  else if (key == "toy.target_sentences") c.toy_world.target_sentences = to_uint(key, v);
  else if (key == "toy.heldout_sentences") c.toy_world.heldout_sentences = to_uint(key, v);
  else if (key == "toy.task_word_rate") c.toy_world.task_word_rate = to_double(key, v);
  else throw ConfigError("unknown config key: " + key);
}

PipelineConfig parse_config(std::istream& in, const std::string& origin) {
  PipelineConfig config;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (strip(line).empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key = value");
    try {
      set_config_value(config, strip(line.substr(0, eq)), strip(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return config;
}

PipelineConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  return parse_config(in, path);
}

void apply_env_overrides(PipelineConfig& config, const std::function<const char*(const char*)>& getenv_fn) {
  auto get = [&](const char* name) -> const char* { return getenv_fn ? getenv_fn(name) : std::getenv(name); };
  if (const char* v = get("TITOK_GENERATOR"); v && *v) config.generator = v;
  if (const char* v = get("TITOK_SCORER"); v && *v) config.scorer = v;
  if (const char* v = get("TITOK_TARGET_GENERATOR"); v && *v) config.target_generator = v;
}

void validate_config(const PipelineConfig& c) {
  if (c.keep_m == 0) throw ConfigError("keep_m must be positive");
  if (c.keep_m > c.effective_pool_size()) {
    throw ConfigError("keep_m (" + std::to_string(c.keep_m) + ") exceeds pool_size (" +
                      std::to_string(c.effective_pool_size()) + ")");
  }
  if (!(c.k_percent > 0.0 && c.k_percent <= 100.0)) throw ConfigError("k_percent must be in (0, 100]");
  if (c.rouge_threshold && !(*c.rouge_threshold > 0.0 && *c.rouge_threshold <= 1.0)) {
    throw ConfigError("rouge_threshold must be in (0, 1] or 'disabled'");
  }
  if (c.query_source != "source" && c.query_source != "target") {
    throw ConfigError("query_source must be 'source' or 'target'");
  }
  if (c.few_shot_count == 0) throw ConfigError("few_shot_count must be positive");
  for (const auto* p : {&c.query_params, &c.label_params}) {
    if (!(p->top_p > 0.0 && p->top_p <= 1.0)) throw ConfigError("top_p must be in (0, 1]");
    if (p->max_tokens == 0) throw ConfigError("max_tokens must be positive");
  }
  if (!(c.toy_alpha > 0.0)) throw ConfigError("toy.alpha must be positive");
  for (const std::string* loc : {&c.generator, &c.target_generator}) {
    const bool ok = *loc == "toy" || loc->rfind("exec:", 0) == 0;
    if (!ok) throw ConfigError("bad generator locator: " + *loc);
  }
  const bool scorer_ok = c.scorer == "toy" || c.scorer.rfind("exec:", 0) == 0 || c.scorer.rfind("traces:", 0) == 0;
  if (!scorer_ok) throw ConfigError("bad scorer locator: " + c.scorer);
  const bool uses_toy = c.generator == "toy" || c.scorer == "toy" ||
                        (c.query_source == "target" && c.target_generator == "toy");
  if (uses_toy && !c.toy) throw ConfigError("'toy' endpoints need toy mode (toy = true or --toy)");
  if (!c.toy && c.seeds_file.empty()) throw ConfigError("seeds_file is required outside toy mode");
  if (c.out_dir.empty()) throw ConfigError("out_dir must not be empty");
}

Json config_snapshot(const PipelineConfig& c) {
  Json norm = Json::array();
  for (NormRule r : c.normalizer) norm.push_back(rule_name(r));
  Json j{{"pool_size", c.effective_pool_size()},
         {"keep_m", c.keep_m},
         {"k_percent", c.k_percent},
         {"rouge_threshold", c.rouge_threshold ? Json(*c.rouge_threshold) : Json("disabled")},
         {"rouge_reject_at_threshold", c.rouge_reject_at_threshold},
         {"dedup", c.dedup},
         {"seed", c.seed},
         {"tokenizer_source", c.tokenizer_source},
         {"tokenizer_target", c.tokenizer_target},
         {"normalizer", norm},
         {"generator", c.generator},
         {"scorer", c.scorer},
         {"target_generator", c.target_generator},
         {"query_source", c.query_source},
         {"task", c.task},
         {"seeds_file", c.seeds_file},
         {"query_template", c.query_template},
         {"label_template", c.label_template},
         {"few_shot_count", c.few_shot_count},
         {"query_params", {{"temperature", c.query_params.temperature}, {"top_p", c.query_params.top_p},
                           {"max_tokens", c.query_params.max_tokens}, {"greedy", c.query_params.greedy}}},
         {"label_params", {{"temperature", c.label_params.temperature}, {"top_p", c.label_params.top_p},
                           {"max_tokens", c.label_params.max_tokens}, {"greedy", c.label_params.greedy}}},
         {"source_model_tag", c.source_model_tag},
         {"strict_floor", c.strict_floor},
         {"align_on_error", c.align_on_error == OnError::skip ? "skip" : "abort"},
         {"align_strict", c.align_strict},
         {"toy", c.toy}};
  if (c.toy) {
    j["toy"] = Json{{"alpha", c.toy_alpha},
                    {"world_seed", c.toy_world.seed},
                    {"base_sentences", c.toy_world.base_sentences},
                    {"planted_sentences", c.toy_world.planted_sentences},
                    {"target_sentences", c.toy_world.target_sentences},
                    {"heldout_sentences", c.toy_world.heldout_sentences},
                    {"task_word_rate", c.toy_world.task_word_rate}};
  }
  return j;
}

}  // namespace titok
