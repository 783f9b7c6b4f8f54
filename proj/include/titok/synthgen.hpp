#pragma once

// Synthetic pool construction: few-shot prompts go to a pluggable
// generator, each candidate query passes an ordered admission gate
// (dedup + ROUGE-L), and the label is generated for admitted queries only.

#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "titok/datamodel.hpp"
#include "titok/jsonl.hpp"
#include "titok/rouge.hpp"

namespace titok {

struct PromptTemplate {
  std::string system_text;
  std::string user_text;
  std::vector<std::string> stop_markers;

  /// Names appearing as {name} in user_text, in first-use order.
  std::vector<std::string> placeholders() const;
  /// Throws Error naming the first placeholder without a binding.
  std::string render(const std::map<std::string, std::string>& bindings) const;

  /// JSON object with system_text, user_text and stop_markers.
  static PromptTemplate load(const std::string& path);
};

struct SamplingParams {
  double temperature = 1.0;
  double top_p = 0.9;
  std::size_t max_tokens = 64;
  bool greedy = false;
};

struct GenRequest {
  std::size_t request_index = 0;
  std::string role;  // "query" or "label"
  std::string system_text;
  std::string prompt;
  SamplingParams params;
  std::uint64_t seed = 0;
  std::vector<std::string> stop_markers;
};

struct GenResponse {
  std::string text;
  std::string finish_reason;  // "stop" or "length"
  std::uint64_t seed = 0;
};

/// Generator endpoint. Implementations may throw GeneratorFailure for a
/// retryable error.
class Generator {
 public:
  virtual ~Generator() = default;
  virtual GenResponse generate(const GenRequest& request) = 0;
};

class GeneratorFailure : public Error {
 public:
  using Error::Error;
};

struct SeedExample {
  std::string query;
  std::string response;
};

struct PoolSample {
  std::string sample_id;
  std::string query_text;
  std::string response_text;
  std::size_t request_index = 0;
  std::uint64_t query_seed = 0;
  std::uint64_t label_seed = 0;

  friend bool operator==(const PoolSample&, const PoolSample&) = default;
};

struct RejectEntry {
  std::size_t request_index = 0;
  std::string query_text;
  RejectReason reason = RejectReason::none;
  double max_rouge = 0.0;
  std::uint64_t query_seed = 0;

  friend bool operator==(const RejectEntry&, const RejectEntry&) = default;
};

struct PoolConfig {
  std::size_t pool_size = 0;
  AdmissionPolicy admission;
  std::uint64_t seed = 0;
  std::size_t few_shot_count = 5;
  SamplingParams query_params;
  SamplingParams label_params{1.0, 0.9, 128, false};
  std::size_t attempt_factor = 20;
  std::size_t max_retries = 3;
  std::string id_prefix = "s";
  std::string task;
  std::set<std::string> no_rouge_tasks;
};

struct PoolResult {
  std::vector<PoolSample> samples;
  std::vector<RejectEntry> rejects;
  std::size_t attempts = 0;
};

/// Thrown when the pool cannot be completed; carries what was built.
class PoolError : public Error {
 public:
  PoolError(const std::string& what, PoolResult partial) : Error(what), partial_(std::move(partial)) {}
  const PoolResult& partial() const { return partial_; }

 private:
  PoolResult partial_;
};

class StarvationError : public PoolError {
 public:
  using PoolError::PoolError;
};

/// Tasks whose queries are too repetitive for the ROUGE-L gate; only
/// deduplication applies to them.
const std::set<std::string>& default_no_rouge_tasks();

/// Deterministic per-request seed.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index, std::uint64_t stream);

/// Builds exactly `config.pool_size` admitted (query, label) pairs. Queries
/// come from `query_generator`; labels from `label_generator`, prompted
/// with the admitted query. Throws StarvationError once attempts exceed
/// attempt_factor * pool_size, PoolError when a generator call keeps
/// failing after max_retries.
PoolResult build_pool(const PoolConfig& config, std::span<const SeedExample> few_shot, Generator& query_generator,
                      Generator& label_generator, const PromptTemplate& query_template,
                      const PromptTemplate& label_template);

std::string trim(std::string_view text);

void to_json(Json& j, const PoolSample& s);
void from_json(const Json& j, PoolSample& s);
void to_json(Json& j, const RejectEntry& r);
void from_json(const Json& j, RejectEntry& r);
/// Few-shot seed files use {"query": ..., "response": ...} lines.
void to_json(Json& j, const SeedExample& s);
void from_json(const Json& j, SeedExample& s);

}  // namespace titok
