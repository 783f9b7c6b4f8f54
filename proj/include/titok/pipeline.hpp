#pragma once

// One run of the transplant pipeline: pool generation, scoring, excess,
// sample filtering, token selection, optional alignment, export and (toy
// mode) target training. Every stage reads its inputs from files written
// by earlier stages and persists its outputs; manifest.json is rewritten
// after every stage and marked complete last.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "titok/config.hpp"
#include "titok/filtering.hpp"
#include "titok/jsonl.hpp"
#include "titok/synthgen.hpp"

namespace titok {

/// A stage failed; the manifest on disk lists the stages that completed.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& what)
      : Error("stage " + stage + ": " + what), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

struct StageRecord {
  std::string name;
  std::string status;  // "done" or "skipped"
  std::string note;
  std::map<std::string, std::string> inputs;   // file name -> sha256
  std::map<std::string, std::string> outputs;  // file name -> sha256
  double wall_seconds = 0.0;
};

struct RunManifest {
  Json config;
  std::uint64_t seed = 0;
  std::vector<StageRecord> stages;
  std::map<std::string, std::size_t> counts;
  bool complete = false;
  std::string failed_stage;
  std::string error;

  const StageRecord* stage(const std::string& name) const;
};

void to_json(Json& j, const StageRecord& s);
void from_json(const Json& j, StageRecord& s);
void to_json(Json& j, const RunManifest& m);
void from_json(const Json& j, RunManifest& m);

void to_json(Json& j, const KeptSample& k);
void from_json(const Json& j, KeptSample& k);

struct RunOptions {
  /// Reuse every leading stage whose recorded inputs and outputs still
  /// match the files on disk; run the rest.
  bool resume = false;
};

/// Stage names in execution order.
const std::vector<std::string>& pipeline_stages();

/// Throws ConfigError for an invalid config, StageError for a failed stage
/// and Error when the output directory is locked by another run.
RunManifest run_pipeline(const PipelineConfig& config, const RunOptions& options = {});

/// Pool generation exactly as the pipeline's generate stage runs it. Toy
/// endpoints use models fitted in memory from the configured toy world.
PoolResult generate_pool(const PipelineConfig& config, std::span<const SeedExample> few_shot);

RunManifest read_manifest(const std::string& run_dir);

/// The final dataset of a completed run, schema-validated. Consumers must
/// drop the loss at every mask-0 position.
MaskedDataset export_masked_dataset(const std::string& run_dir);

/// Lowercase hex SHA-256 of a file's bytes.
std::string sha256_file(const std::string& path);

}  // namespace titok
