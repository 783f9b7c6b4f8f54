#pragma once

// Flat "key = value" run configuration. '#' starts a comment; unknown keys
// are errors. See docs/config.md for the key list.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "titok/alignment.hpp"
#include "titok/jsonl.hpp"
#include "titok/normalize.hpp"
#include "titok/synthgen.hpp"
#include "titok/toyworld.hpp"

namespace titok {

class ConfigError : public Error {
 public:
  using Error::Error;
};

struct PipelineConfig {
  std::size_t pool_size = 0;  // 0 means 2 * keep_m
  std::size_t keep_m = 40;
  double k_percent = 70.0;
  std::optional<double> rouge_threshold = 0.7;
  bool rouge_reject_at_threshold = false;
  bool dedup = true;
  std::uint64_t seed = 0;

  std::string tokenizer_source = "char";
  std::string tokenizer_target = "char";
  std::vector<NormRule> normalizer = {NormRule::unicode_nfc, NormRule::strip_leading_space_marker};

  // Endpoint locators: "toy", "exec:<shell command>", or for the scorer
  // also "traces:<file>" (cached traces looked up by sample_id).
  std::string generator = "toy";
  std::string scorer = "toy";
  std::string target_generator = "toy";
  std::string query_source = "source";  // "source" or "target"

  std::string out_dir = "titok-run";
  std::string task;
  std::string seeds_file;
  std::string query_template;
  std::string label_template;
  std::size_t few_shot_count = 5;
  SamplingParams query_params{1.0, 0.9, 32, false};
  SamplingParams label_params{1.0, 0.9, 48, false};
  std::string source_model_tag = "source";

  bool strict_floor = false;
  OnError align_on_error = OnError::skip;
  bool align_strict = false;

  bool toy = false;
  double toy_alpha = 0.5;
  toy::ToyWorldParams toy_world;

  std::size_t effective_pool_size() const { return pool_size ? pool_size : 2 * keep_m; }
};

PipelineConfig parse_config(std::istream& in, const std::string& origin = "<config>");
PipelineConfig load_config(const std::string& path);

/// Applies one key; throws ConfigError for unknown keys or bad values.
void set_config_value(PipelineConfig& config, const std::string& key, const std::string& value);

/// TITOK_GENERATOR, TITOK_SCORER, TITOK_TARGET_GENERATOR override the
/// endpoint locators. `getenv` is injectable for tests.
void apply_env_overrides(PipelineConfig& config,
                         const std::function<const char*(const char*)>& getenv_fn = nullptr);

/// Throws ConfigError on any inconsistency (e.g. M > N).
void validate_config(const PipelineConfig& config);

/// Every effective setting, for the run manifest.
Json config_snapshot(const PipelineConfig& config);

}  // namespace titok
