// titok: command-line front end for the transplant toolkit.
//
// Exit codes: 0 ok, 2 usage or config error, 3 stage or data failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <unordered_map>

#include "CLI11.hpp"
#include "titok/alignment.hpp"
#include "titok/config.hpp"
#include "titok/endpoint.hpp"
#include "titok/excess.hpp"
#include "titok/filtering.hpp"
#include "titok/pipeline.hpp"
#include "titok/tokenizer.hpp"
#include "titok/toylab.hpp"
#include "titok/toyworld.hpp"

namespace {

using namespace titok;

constexpr int kConfigError = 2;
constexpr int kFailure = 3;

int cmd_score(const std::string& traces_path, const std::string& out) {
  write_file(out, excess_scores_batch(read_file<ScoredTrace>(traces_path)));
  return 0;
}

int cmd_filter(const std::string& excess_path, std::size_t m, const std::string& out) {
  write_file(out, filter_samples(read_file<ExcessReport>(excess_path), m));
  return 0;
}

int cmd_select(const std::string& excess_path, double k, bool strict_floor, const std::string& kept_path,
               const std::string& out) {
  std::vector<ExcessReport> reports = read_file<ExcessReport>(excess_path);
  if (!kept_path.empty()) {
    std::unordered_map<std::string, std::size_t> at;
    for (std::size_t i = 0; i < reports.size(); ++i) at[reports[i].sample_id] = i;
    std::vector<ExcessReport> chosen;
    for (const KeptSample& k_s : read_file<KeptSample>(kept_path)) {
      auto it = at.find(k_s.sample_id);
      if (it == at.end()) throw Error("kept sample " + k_s.sample_id + " not in " + excess_path);
      chosen.push_back(reports[it->second]);
    }
    reports = std::move(chosen);
  }
  write_file(out, select_tokens_batch(reports, k, RankPolicy{!strict_floor}));
  return 0;
}

int cmd_align(const std::string& in, const std::string& source_tag, const std::string& target_tag, double k,
              const std::string& on_error, bool strict, bool strict_floor, const std::string& out,
              const std::string& failures_path) {
  AlignDatasetOptions options;
  options.k_percent = k;
  options.on_error = on_error == "abort" ? OnError::abort : OnError::skip;
  options.align.strict = strict;
  options.policy.floor_min_one = !strict_floor;
  const MaskedDataset source = read_masked_dataset_file(in);
  const AlignDatasetResult result =
      align_dataset(source, *resolve_tokenizer(source_tag), *resolve_tokenizer(target_tag), options);
  write_masked_dataset_file(out, result.dataset);
  for (const RecordFailure& f : result.failures) {
    std::fprintf(stderr, "titok align: skipped %s: %s\n", f.sample_id.c_str(), f.message.c_str());
  }
  if (!failures_path.empty()) {
    std::ofstream fout = open_write(failures_path);
    for (const RecordFailure& f : result.failures) {
      write_line(fout, Json{{"format_version", kFormatVersion}, {"message", f.message}, {"sample_id", f.sample_id}});
    }
  }
  return 0;
}

PipelineConfig load_effective_config(const std::string& path, bool toy) {
  PipelineConfig config = load_config(path);
  if (toy) {
    config.toy = true;
    config.generator = config.scorer = config.target_generator = "toy";
  }
  apply_env_overrides(config);
  return config;
}

int cmd_gen(const std::string& config_path, const std::string& seeds, const std::string& out,
            const std::string& log, bool toy) {
  PipelineConfig config = load_effective_config(config_path, toy);
  config.seeds_file = seeds;
  validate_config(config);
  const std::vector<SeedExample> few_shot = read_file<SeedExample>(seeds);
  try {
    PoolResult pool = generate_pool(config, few_shot);
    write_file(out, pool.samples);
    if (!log.empty()) write_file(log, pool.rejects);
  } catch (const PoolError& e) {
    write_file(out + ".partial", e.partial().samples);
    if (!log.empty()) write_file(log, e.partial().rejects);
    throw;
  }
  return 0;
}

int cmd_run(const std::string& config_path, bool resume, bool toy) {
  const PipelineConfig config = load_effective_config(config_path, toy);
  const RunManifest manifest = run_pipeline(config, RunOptions{resume});
  for (const StageRecord& s : manifest.stages) {
    std::printf("%-10s %-8s %8.3fs %s\n", s.name.c_str(), s.status.c_str(), s.wall_seconds, s.note.c_str());
  }
  for (const auto& [name, n] : manifest.counts) std::printf("%s=%zu\n", name.c_str(), n);
  return 0;
}

int cmd_export(const std::string& run_dir, const std::string& out) {
  write_masked_dataset_file(out, export_masked_dataset(run_dir));
  return 0;
}

int cmd_stats(const std::string& in) {
  const MaskedDataset ds = read_masked_dataset_file(in);
  const Verdict verdict = validate_dataset(ds);
  const MaskStats stats = apply_mask_stats(ds);
  std::printf("records=%zu tokens_kept=%zu tokens_total=%zu valid=%s\n", stats.records, stats.tokens_kept,
              stats.tokens_total, verdict.ok() ? "yes" : "no");
  for (std::size_t b = 0; b < stats.histogram.size(); ++b) {
    std::printf("keep %.1f-%.1f: %zu\n", b / 10.0, (b + 1) / 10.0, stats.histogram[b]);
  }
  if (!verdict.ok()) std::fprintf(stderr, "%s\n", verdict.describe().c_str());
  return verdict.ok() ? 0 : kFailure;
}

int cmd_toy_world(const std::string& config_path, const std::string& out_dir) {
  PipelineConfig config = config_path.empty() ? PipelineConfig{} : load_config(config_path);
  toy::ToyWorldParams params = config.toy_world;
  params.few_shot = std::max(params.few_shot, config.few_shot_count);
  const toy::ToyWorld world = toy::make_toy_world(params);
  std::filesystem::create_directories(out_dir);
  const toy::ToyLM base = toy::fit_bigram(world.base_corpus, config.toy_alpha);
  base.save(out_dir + "/base_model.txt");
  toy::fit_adapter(base, world.task_corpus).save(out_dir + "/adapter.txt");
  write_file(out_dir + "/few_shot.jsonl", world.few_shot);
  return 0;
}

int cmd_toy_serve(const std::string& model_path, const std::string& adapter_path, const std::string& tokenizer) {
  const toy::ToyLM model = toy::ToyLM::load(model_path);
  std::optional<toy::ToyAdapter> adapter;
  if (!adapter_path.empty()) adapter = toy::ToyAdapter::load(adapter_path);
  const toy::ToyAdapter* a = adapter ? &*adapter : nullptr;
  toy::ToyGenerator generator(model, a);
  toy::ToyScorer scorer(model, a, resolve_tokenizer(tokenizer));
  std::ios::sync_with_stdio(false);
  serve_endpoint(std::cin, std::cout, &generator, &scorer);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"titok: token-level knowledge transplant toolkit"};
  app.require_subcommand(1);

  std::string traces, excess, out, kept, in, source_tok, target_tok, on_error = "skip", config, seeds, log;
  std::string model, adapter, tokenizer = "char", run_dir, failures;
  std::size_t m = 0;
  double k = 70.0;
  bool strict_floor = false, strict = false, resume = false, toy = false;

  auto* score = app.add_subcommand("score", "Excess scores for scored traces");
  score->add_option("--traces", traces, "Scored trace JSONL")->required();
  score->add_option("--out", out, "Excess report JSONL")->required();

  auto* filter = app.add_subcommand("filter", "Keep the M samples with the largest mean excess");
  filter->add_option("--excess", excess, "Excess report JSONL")->required();
  filter->add_option("--m", m, "Samples to keep")->required();
  filter->add_option("--out", out, "Kept sample JSONL")->required();

  auto* select = app.add_subcommand("select", "Keep the top k% of tokens per response");
  select->add_option("--excess", excess, "Excess report JSONL")->required();
  select->add_option("--k", k, "Percent of tokens to keep")->required();
  select->add_flag("--strict-floor", strict_floor, "Allow zero kept tokens for short responses");
  select->add_option("--kept", kept, "Restrict to the samples in this kept file, in its order");
  select->add_option("--out", out, "Token mask JSONL")->required();

  auto* align = app.add_subcommand("align", "Move masks to another tokenizer");
  align->add_option("--in", in, "Masked dataset JSONL")->required();
  align->add_option("--source-tok", source_tok, "Source tokenizer tag")->required();
  align->add_option("--target-tok", target_tok, "Target tokenizer tag")->required();
  align->add_option("--k", k, "Percent of target tokens to keep")->required();
  align->add_option("--on-error", on_error, "skip or abort")->check(CLI::IsMember({"skip", "abort"}));
  align->add_flag("--strict", strict, "Fail instead of folding an unmatched tail");
  align->add_flag("--strict-floor", strict_floor, "Allow zero kept tokens for short responses");
  align->add_option("--failures", failures, "Write skipped records here");
  align->add_option("--out", out, "Aligned dataset JSONL")->required();

  auto* gen = app.add_subcommand("gen", "Build a synthetic pool");
  gen->add_option("--config", config, "Run config")->required();
  gen->add_option("--seeds", seeds, "Few-shot seed JSONL")->required();
  gen->add_option("--out", out, "Pool JSONL")->required();
  gen->add_option("--log", log, "Rejected query JSONL");
  gen->add_flag("--toy", toy, "Use the toy models for every endpoint");

  auto* run = app.add_subcommand("run", "Run the whole pipeline");
  run->add_option("--config", config, "Run config")->required();
  run->add_flag("--resume", resume, "Reuse stages whose files are unchanged");
  run->add_flag("--toy", toy, "Use the toy models for every endpoint");

  auto* exp = app.add_subcommand("export", "Copy a completed run's validated dataset");
  exp->add_option("--run", run_dir, "Run directory")->required();
  exp->add_option("--out", out, "Masked dataset JSONL")->required();

  auto* stats = app.add_subcommand("stats", "Summarize and validate a masked dataset");
  stats->add_option("--in", in, "Masked dataset JSONL")->required();

  auto* world = app.add_subcommand("toy-world", "Write toy base model, adapter and few-shot seeds");
  world->add_option("--config", config, "Run config for toy.* settings");
  world->add_option("--out-dir", run_dir, "Directory")->required();

  auto* serve = app.add_subcommand("toy-serve", "Serve a toy model over stdin/stdout");
  serve->add_option("--model", model, "Toy model file")->required();
  serve->add_option("--adapter", adapter, "Toy adapter file (expert role)");
  serve->add_option("--tokenizer", tokenizer, "Tokenizer tag for scoring");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kConfigError;
  }

  try {
    if (*score) return cmd_score(traces, out);
    if (*filter) return cmd_filter(excess, m, out);
    if (*select) return cmd_select(excess, k, strict_floor, kept, out);
    if (*align) return cmd_align(in, source_tok, target_tok, k, on_error, strict, strict_floor, out, failures);
    if (*gen) return cmd_gen(config, seeds, out, log, toy);
    if (*run) return cmd_run(config, resume, toy);
    if (*exp) return cmd_export(run_dir, out);
    if (*stats) return cmd_stats(in);
    if (*world) return cmd_toy_world(config, run_dir);
    if (*serve) return cmd_toy_serve(model, adapter, tokenizer);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "titok: config error: %s\n", e.what());
    return kConfigError;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "titok: %s\n", e.what());
    return kFailure;
  }
  return 0;
}
