#include "titok/pipeline.hpp"

#include <fcntl.h>
#include <openssl/evp.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <random>
#include <unordered_map>

#include "titok/alignment.hpp"
#include "titok/endpoint.hpp"
#include "titok/excess.hpp"
#include "titok/synthgen.hpp"
#include "titok/tokenizer.hpp"
#include "titok/toylab.hpp"
#include "titok/toyworld.hpp"

namespace titok {
namespace fs = std::filesystem;

namespace {

constexpr const char* kManifest = "manifest.json";
constexpr const char* kLock = ".lock";

// Derived-seed streams beyond the ones synthgen uses.
constexpr std::uint64_t kControlStream = 4;

void write_text_lines(const fs::path& path, const std::vector<std::string>& lines) {
  std::ofstream out = open_write(path.string());
  for (const auto& l : lines) out << l << '\n';
  if (!out.flush()) throw Error("write failed: " + path.string());
}

std::vector<std::string> read_text_lines(const fs::path& path) {
  std::ifstream in = open_read(path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

void write_json_file(const fs::path& path, const Json& j) {
  std::ofstream out = open_write(path.string());
  out << j.dump(2) << '\n';
  if (!out.flush()) throw Error("write failed: " + path.string());
}

class DirLock {
 public:
  explicit DirLock(const fs::path& dir) : path_(dir / kLock) {
    fd_ = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd_ < 0) throw Error("output directory is locked by another run: " + path_.string());
    const std::string pid = std::to_string(::getpid()) + "\n";
    [[maybe_unused]] auto n = ::write(fd_, pid.data(), pid.size());
  }
  ~DirLock() {
    ::close(fd_);
    std::error_code ec;
    fs::remove(path_, ec);
  }
  DirLock(const DirLock&) = delete;
  DirLock& operator=(const DirLock&) = delete;

 private:
  fs::path path_;
  int fd_ = -1;
};

/// Looks traces up by sample_id in a previously scored file.
class CachedTraceScorer final : public Scorer {
 public:
  explicit CachedTraceScorer(const std::string& path) {
    for (auto& t : read_file<ScoredTrace>(path)) traces_.emplace(t.sample_id, std::move(t));
  }

  ScoredTrace score(const std::string& sample_id, const std::string& query_text,
                    const std::string& response_text) override {
    auto it = traces_.find(sample_id);
    if (it == traces_.end()) throw ScorerFailure("no cached trace for " + sample_id);
    if (it->second.query_text != query_text || it->second.response_text != response_text) {
      throw ScorerFailure("cached trace for " + sample_id + " has different text");
    }
    return it->second;
  }

 private:
  std::unordered_map<std::string, ScoredTrace> traces_;
};

struct StageResult {
  std::string status = "done";
  std::string note;
  std::vector<std::string> inputs;   // paths as opened
  std::vector<std::string> outputs;  // names inside the run directory
};

struct Run {
  const PipelineConfig& config;
  fs::path dir;
  RunManifest manifest;
  std::map<std::string, std::unique_ptr<SubprocessEndpoint>> processes;

  std::string file(const std::string& name) const { return (dir / name).string(); }

  SubprocessEndpoint& process(const std::string& locator) {
    auto& slot = processes[locator];
    if (!slot) slot = std::make_unique<SubprocessEndpoint>(locator.substr(5));
    return *slot;
  }

  void save_manifest() const { write_json_file(dir / kManifest, Json(manifest)); }
};

// Built-in prompt templates, used when the config names none.
PromptTemplate default_query_template(std::size_t shots) {
  PromptTemplate t;
  t.system_text = "You write new task queries in the style of the examples.";
  t.user_text = "Here are " + std::string("{seed_count}") + " example queries for the task.\n";
  for (std::size_t i = 1; i <= shots; ++i) t.user_text += "Example " + std::to_string(i) + ": {example_" +
                                                          std::to_string(i) + "}\n";
  t.user_text += "Write one new query.";
  return t;
}

PromptTemplate default_label_template() {
  PromptTemplate t;
  t.system_text = "You answer task queries.";
  t.user_text = "Query: {query}\nAnswer:";
  return t;
}

PromptTemplate query_template_for(const PipelineConfig& c, std::size_t seed_count) {
  if (!c.query_template.empty()) return PromptTemplate::load(c.query_template);
  return default_query_template(std::min(c.few_shot_count, seed_count));
}

PromptTemplate label_template_for(const PipelineConfig& c) {
  if (!c.label_template.empty()) return PromptTemplate::load(c.label_template);
  return default_label_template();
}

PoolConfig pool_config(const PipelineConfig& c) {
  PoolConfig pc;
  pc.pool_size = c.effective_pool_size();
  pc.admission.rouge_threshold = c.rouge_threshold;
  pc.admission.dedup = c.dedup;
  pc.admission.reject_at_threshold = c.rouge_reject_at_threshold;
  pc.seed = c.seed;
  pc.few_shot_count = c.few_shot_count;
  pc.query_params = c.query_params;
  pc.label_params = c.label_params;
  pc.task = c.task;
  pc.no_rouge_tasks = default_no_rouge_tasks();
  return pc;
}

toy::ToyWorldParams toy_world_params(const PipelineConfig& c) {
  toy::ToyWorldParams params = c.toy_world;
  params.few_shot = std::max(params.few_shot, c.few_shot_count);
  return params;
}

struct ToyModels {
  toy::ToyLM base;
  toy::ToyAdapter adapter;
};

ToyModels load_toy_models(Run& run, StageResult& r) {
  r.inputs.push_back(run.file("base_model.txt"));
  r.inputs.push_back(run.file("adapter.txt"));
  return {toy::ToyLM::load(run.file("base_model.txt")), toy::ToyAdapter::load(run.file("adapter.txt"))};
}

// ---------------------------------------------------------------- stages

StageResult stage_toy_world(Run& run) {
  StageResult r;
  if (!run.config.toy) {
    r.status = "skipped";
    r.note = "skipped: external endpoints";
    return r;
  }
  const toy::ToyWorld world = toy::make_toy_world(toy_world_params(run.config));
  const double alpha = run.config.toy_alpha;
  const toy::ToyLM base = toy::fit_bigram(world.base_corpus, alpha);
  const toy::ToyAdapter adapter = toy::fit_adapter(base, world.task_corpus);

  base.save(run.file("base_model.txt"));
  adapter.save(run.file("adapter.txt"));
  write_text_lines(run.file("target_corpus.txt"), world.target_corpus);
  write_text_lines(run.file("heldout.txt"), world.heldout_task);
  write_file(run.file("few_shot.jsonl"), world.few_shot);
  r.outputs = {"base_model.txt", "adapter.txt", "target_corpus.txt", "heldout.txt", "few_shot.jsonl"};
  run.manifest.counts["adapter_entries"] = adapter.delta().size();
  return r;
}

StageResult stage_generate(Run& run) {
  const PipelineConfig& c = run.config;
  StageResult r;

  const std::string seeds = c.seeds_file.empty() ? run.file("few_shot.jsonl") : c.seeds_file;
  r.inputs.push_back(seeds);
  const std::vector<SeedExample> few_shot = read_file<SeedExample>(seeds);
  if (few_shot.empty()) throw Error("no few-shot seeds in " + seeds);

  const PromptTemplate query_template = query_template_for(c, few_shot.size());
  const PromptTemplate label_template = label_template_for(c);
  if (!c.query_template.empty()) r.inputs.push_back(c.query_template);
  if (!c.label_template.empty()) r.inputs.push_back(c.label_template);

  std::optional<ToyModels> models;
  std::optional<toy::ToyLM> target_model;
  std::vector<std::unique_ptr<Generator>> owned;
  auto make = [&](const std::string& locator, bool target_role) -> Generator& {
    if (locator != "toy") return run.process(locator);
    if (target_role) {
      if (!target_model) {
        r.inputs.push_back(run.file("target_corpus.txt"));
        target_model = toy::fit_bigram(read_text_lines(run.file("target_corpus.txt")), c.toy_alpha);
      }
      owned.push_back(std::make_unique<toy::ToyGenerator>(*target_model, nullptr));
    } else {
      if (!models) models = load_toy_models(run, r);
      owned.push_back(std::make_unique<toy::ToyGenerator>(models->base, &models->adapter));
    }
    return *owned.back();
  };
  Generator& label_gen = make(c.generator, false);
  Generator& query_gen = c.query_source == "target" ? make(c.target_generator, true) : make(c.generator, false);

  const PoolConfig pc = pool_config(c);
  PoolResult pool;
  try {
    pool = build_pool(pc, few_shot, query_gen, label_gen, query_template, label_template);
  } catch (const PoolError& e) {
    write_file(run.file("pool.partial.jsonl"), e.partial().samples);
    write_file(run.file("rejects.jsonl"), e.partial().rejects);
    throw;
  }
  write_file(run.file("pool.jsonl"), pool.samples);
  write_file(run.file("rejects.jsonl"), pool.rejects);
  r.outputs = {"pool.jsonl", "rejects.jsonl"};
  run.manifest.counts["N"] = pool.samples.size();
  run.manifest.counts["rejects"] = pool.rejects.size();
  run.manifest.counts["attempts"] = pool.attempts;
  return r;
}

StageResult stage_score(Run& run) {
  const PipelineConfig& c = run.config;
  StageResult r;
  r.inputs.push_back(run.file("pool.jsonl"));
  const std::vector<PoolSample> pool = read_file<PoolSample>(run.file("pool.jsonl"));

  std::vector<ScoredTrace> traces;
  if (c.scorer == "toy") {
    ToyModels models = load_toy_models(run, r);
    toy::ToyScorer scorer(models.base, &models.adapter, resolve_tokenizer(c.tokenizer_source));
    traces = toy::toy_score_batch(scorer, pool);
  } else {
    std::unique_ptr<CachedTraceScorer> cached;
    Scorer* scorer = nullptr;
    if (c.scorer.rfind("traces:", 0) == 0) {
      r.inputs.push_back(c.scorer.substr(7));
      cached = std::make_unique<CachedTraceScorer>(c.scorer.substr(7));
      scorer = cached.get();
    } else {
      scorer = &run.process(c.scorer);
    }
    for (const PoolSample& s : pool) {
      ScoredTrace t = scorer->score(s.sample_id, s.query_text, s.response_text);
      if (t.sample_id != s.sample_id) throw ScorerFailure("scorer answered " + t.sample_id + " for " + s.sample_id);
      traces.push_back(std::move(t));
    }
  }
  write_file(run.file("traces.jsonl"), traces);
  r.outputs = {"traces.jsonl"};
  return r;
}

StageResult stage_excess(Run& run) {
  StageResult r;
  r.inputs.push_back(run.file("traces.jsonl"));
  const std::vector<ScoredTrace> traces = read_file<ScoredTrace>(run.file("traces.jsonl"));
  write_file(run.file("excess.jsonl"), excess_scores_batch(traces));
  r.outputs = {"excess.jsonl"};
  return r;
}

StageResult stage_filter(Run& run) {
  StageResult r;
  r.inputs.push_back(run.file("excess.jsonl"));
  const std::vector<ExcessReport> reports = read_file<ExcessReport>(run.file("excess.jsonl"));
  const std::vector<KeptSample> kept = filter_samples(reports, run.config.keep_m);
  write_file(run.file("kept.jsonl"), kept);
  r.outputs = {"kept.jsonl"};
  run.manifest.counts["M"] = kept.size();
  return r;
}

StageResult stage_select(Run& run) {
  const PipelineConfig& c = run.config;
  StageResult r;
  r.inputs = {run.file("traces.jsonl"), run.file("excess.jsonl"), run.file("kept.jsonl")};
  const auto traces = read_file<ScoredTrace>(run.file("traces.jsonl"));
  const auto reports = read_file<ExcessReport>(run.file("excess.jsonl"));
  const auto kept = read_file<KeptSample>(run.file("kept.jsonl"));

  std::unordered_map<std::string, std::size_t> trace_at;
  for (std::size_t i = 0; i < traces.size(); ++i) trace_at[traces[i].sample_id] = i;
  std::unordered_map<std::string, std::size_t> report_at;
  for (std::size_t i = 0; i < reports.size(); ++i) report_at[reports[i].sample_id] = i;

  std::vector<ExcessReport> chosen;
  for (const KeptSample& k : kept) {
    auto it = report_at.find(k.sample_id);
    if (it == report_at.end()) throw Error("kept sample " + k.sample_id + " has no excess report");
    chosen.push_back(reports[it->second]);
  }
  const RankPolicy policy{!c.strict_floor};
  const std::vector<TokenMask> masks = select_tokens_batch(chosen, c.k_percent, policy);

  MaskedDataset ds;
  ds.meta.k_percent = c.k_percent;
  ds.meta.source_model_tag = c.source_model_tag;
  ds.meta.target_tokenizer_tag = c.tokenizer_source;
  std::size_t dropped = 0;
  for (const TokenMask& m : masks) {
    if (m.kept_count() == 0) {
      ++dropped;
      continue;
    }
    auto it = trace_at.find(m.sample_id);
    if (it == trace_at.end()) throw Error("kept sample " + m.sample_id + " has no trace");
    const ScoredTrace& t = traces[it->second];
    MaskedRecord rec{t.sample_id, t.query_text, t.response_text, {}, m};
    for (const TokenRecord& tok : t.tokens) rec.token_ids.push_back(tok.token_id);
    ds.records.push_back(std::move(rec));
  }
  ds.meta.m_kept = ds.records.size();

  write_file(run.file("masks.jsonl"), masks);
  write_masked_dataset_file(run.file("masked_source.jsonl"), ds);
  r.outputs = {"masks.jsonl", "masked_source.jsonl"};
  run.manifest.counts["dropped_zero_kept"] = dropped;
  return r;
}

StageResult stage_align(Run& run) {
  const PipelineConfig& c = run.config;
  StageResult r;
  if (c.tokenizer_source == c.tokenizer_target) {
    r.status = "skipped";
    r.note = "skipped: same tokenizer";
    return r;
  }
  r.inputs.push_back(run.file("masked_source.jsonl"));
  const MaskedDataset source = read_masked_dataset_file(run.file("masked_source.jsonl"));
  const Normalizer norm(c.normalizer);
  AlignDatasetOptions options;
  options.k_percent = c.k_percent;
  options.on_error = c.align_on_error;
  options.align.strict = c.align_strict;
  options.policy.floor_min_one = !c.strict_floor;
  options.norm = &norm;
  const AlignDatasetResult result =
      align_dataset(source, *resolve_tokenizer(c.tokenizer_source), *resolve_tokenizer(c.tokenizer_target), options);

  write_masked_dataset_file(run.file("aligned.jsonl"), result.dataset);
  {
    std::ofstream out = open_write(run.file("align_failures.jsonl"));
    for (const RecordFailure& f : result.failures) {
      write_line(out, Json{{"format_version", kFormatVersion}, {"message", f.message}, {"sample_id", f.sample_id}});
    }
  }
  r.outputs = {"aligned.jsonl", "align_failures.jsonl"};
  run.manifest.counts["align_failures"] = result.failures.size();
  return r;
}

StageResult stage_export(Run& run) {
  const PipelineConfig& c = run.config;
  StageResult r;
  const bool aligned = c.tokenizer_source != c.tokenizer_target;
  const std::string in = run.file(aligned ? "aligned.jsonl" : "masked_source.jsonl");
  r.inputs.push_back(in);
  MaskedDataset ds = read_masked_dataset_file(in);
  ds.meta.m_kept = ds.records.size();
  if (ds.records.empty()) throw Error("no records left to export");
  const Verdict verdict = validate_dataset(ds);
  if (!verdict.ok()) throw ValidationError("exported dataset: " + verdict.describe());

  write_masked_dataset_file(run.file("dataset.jsonl"), ds);
  r.outputs = {"dataset.jsonl"};
  const MaskStats stats = apply_mask_stats(ds);
  run.manifest.counts["records"] = stats.records;
  run.manifest.counts["tokens_kept"] = stats.tokens_kept;
  run.manifest.counts["tokens_total"] = stats.tokens_total;
  return r;
}

// Target trained on the exported dataset against an equal-size control of
// random pool samples with full masks; both start from the target
// backbone's own corpus counts.
StageResult stage_train(Run& run) {
  const PipelineConfig& c = run.config;
  StageResult r;
  if (!c.toy) {
    r.status = "skipped";
    r.note = "skipped: external trainer";
    return r;
  }
  r.inputs = {run.file("dataset.jsonl"), run.file("pool.jsonl"), run.file("traces.jsonl"),
              run.file("target_corpus.txt"), run.file("heldout.txt"), run.file("adapter.txt")};
  const MaskedDataset ds = read_masked_dataset_file(run.file("dataset.jsonl"));
  const std::vector<PoolSample> pool = read_file<PoolSample>(run.file("pool.jsonl"));
  const std::vector<ScoredTrace> traces = read_file<ScoredTrace>(run.file("traces.jsonl"));
  const std::vector<std::string> heldout = read_text_lines(run.file("heldout.txt"));
  const toy::ToyAdapter adapter = toy::ToyAdapter::load(run.file("adapter.txt"));
  const TokenizerHandle target_tok = resolve_tokenizer(c.tokenizer_target);
  const std::string& vocab = toy::default_alphabet();

  toy::BigramCounts prior(vocab);
  for (const auto& line : read_text_lines(run.file("target_corpus.txt"))) prior.add_text(line);

  const toy::ToyLM titok_model = toy::train_masked_target(ds, *target_tok, c.toy_alpha, vocab, &prior);
  titok_model.save(run.file("target_model.txt"));

  std::vector<std::size_t> order(pool.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::mt19937_64 rng(derive_seed(c.seed, 0, kControlStream));
  const std::size_t n = std::min(ds.records.size(), pool.size());
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t j = i + static_cast<std::size_t>(rng() % (order.size() - i));
    std::swap(order[i], order[j]);
  }
  MaskedDataset control;
  control.meta = ds.meta;
  for (std::size_t i = 0; i < n; ++i) {
    const PoolSample& s = pool[order[i]];
    MaskedRecord rec{s.sample_id, s.query_text, s.response_text, target_tok->tokenize(s.response_text), {}};
    rec.mask = {s.sample_id, std::vector<double>(rec.token_ids.size(), 1.0), true};
    control.records.push_back(std::move(rec));
  }
  control.meta.m_kept = control.records.size();
  const toy::ToyLM control_model = toy::train_masked_target(control, *target_tok, c.toy_alpha, vocab, &prior);
  control_model.save(run.file("control_model.txt"));

  const toy::Nll titok_nll = toy::heldout_nll(titok_model, heldout);
  const toy::Nll control_nll = toy::heldout_nll(control_model, heldout);
  Json eval{{"format_version", kFormatVersion},
            {"heldout_symbols", titok_nll.symbols},
            {"titok_nll", titok_nll.mean()},
            {"control_nll", control_nll.mean()},
            {"margin", control_nll.mean() - titok_nll.mean()},
            {"control_records", control.records.size()},
            {"planted_mean_rank", toy::planted_mean_rank(traces, adapter)}};
  write_json_file(run.file("eval.json"), eval);
  r.outputs = {"target_model.txt", "control_model.txt", "eval.json"};
  return r;
}

using StageFn = StageResult (*)(Run&);

const std::vector<std::pair<std::string, StageFn>>& stage_table() {
  static const std::vector<std::pair<std::string, StageFn>> table = {
      {"toy_world", stage_toy_world}, {"generate", stage_generate}, {"score", stage_score},
      {"excess", stage_excess},       {"filter", stage_filter},     {"select", stage_select},
      {"align", stage_align},         {"export", stage_export},     {"train", stage_train},
  };
  return table;
}

std::map<std::string, std::string> digests(const std::vector<std::string>& paths) {
  std::map<std::string, std::string> out;
  for (const auto& p : paths) out[p] = sha256_file(p);
  return out;
}

// A recorded stage is reusable when every file it read or wrote still has
// the recorded digest.
bool still_valid(const StageRecord& rec, const fs::path& dir) {
  auto matches = [](const std::string& path, const std::string& digest) {
    std::error_code ec;
    return fs::is_regular_file(path, ec) && sha256_file(path) == digest;
  };
  for (const auto& [path, digest] : rec.inputs) {
    if (!matches(path, digest)) return false;
  }
  for (const auto& [name, digest] : rec.outputs) {
    if (!matches((dir / name).string(), digest)) return false;
  }
  return true;
}

}  // namespace

const StageRecord* RunManifest::stage(const std::string& name) const {
  for (const auto& s : stages) {
    if (s.name == name) return &s;
  }
  return nullptr;
}

void to_json(Json& j, const StageRecord& s) {
  j = Json{{"inputs", s.inputs},   {"name", s.name},     {"note", s.note},
           {"outputs", s.outputs}, {"status", s.status}, {"wall_seconds", s.wall_seconds}};
}

void from_json(const Json& j, StageRecord& s) {
  j.at("name").get_to(s.name);
  j.at("status").get_to(s.status);
  s.note = j.value("note", "");
  j.at("inputs").get_to(s.inputs);
  j.at("outputs").get_to(s.outputs);
  s.wall_seconds = j.value("wall_seconds", 0.0);
}

void to_json(Json& j, const RunManifest& m) {
  j = Json{{"complete", m.complete}, {"config", m.config}, {"counts", m.counts},
           {"format_version", kFormatVersion}, {"seed", m.seed}, {"stages", m.stages}};
  if (!m.failed_stage.empty()) {
    j["failed_stage"] = m.failed_stage;
    j["error"] = m.error;
  }
}

void from_json(const Json& j, RunManifest& m) {
  j.at("config").get_to(m.config);
  j.at("seed").get_to(m.seed);
  j.at("stages").get_to(m.stages);
  j.at("counts").get_to(m.counts);
  j.at("complete").get_to(m.complete);
  m.failed_stage = j.value("failed_stage", "");
  m.error = j.value("error", "");
}

void to_json(Json& j, const KeptSample& k) {
  j = Json{{"format_version", kFormatVersion},
           {"input_index", k.input_index},
           {"mean_score", k.mean_score},
           {"sample_id", k.sample_id}};
}

void from_json(const Json& j, KeptSample& k) {
  j.at("sample_id").get_to(k.sample_id);
  j.at("mean_score").get_to(k.mean_score);
  j.at("input_index").get_to(k.input_index);
}

const std::vector<std::string>& pipeline_stages() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& [name, fn] : stage_table()) out.push_back(name);
    return out;
  }();
  return names;
}

std::string sha256_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open for hashing: " + path);
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) throw Error("sha256 init failed");
  char buf[1 << 16];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) {
    EVP_DigestUpdate(ctx.get(), buf, static_cast<std::size_t>(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), md, &len);
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

RunManifest read_manifest(const std::string& run_dir) {
  const fs::path path = fs::path(run_dir) / kManifest;
  std::ifstream in = open_read(path.string());
  try {
    return Json::parse(in).get<RunManifest>();
  } catch (const nlohmann::json::exception& e) {
    throw Error("bad manifest " + path.string() + ": " + e.what());
  }
}

RunManifest run_pipeline(const PipelineConfig& config, const RunOptions& options) {
  validate_config(config);
  const fs::path dir(config.out_dir);
  fs::create_directories(dir);
  DirLock lock(dir);

  Run run{config, dir, {}, {}};
  run.manifest.config = config_snapshot(config);
  run.manifest.seed = config.seed;

  std::optional<RunManifest> previous;
  if (options.resume && fs::exists(dir / kManifest)) {
    previous = read_manifest(dir.string());
    if (previous->config != run.manifest.config) {
      throw ConfigError("cannot resume: config differs from the recorded run in " + dir.string());
    }
    run.manifest.counts = previous->counts;
  }

  bool reusing = previous.has_value();
  for (const auto& [name, fn] : stage_table()) {
    if (reusing) {
      const StageRecord* old = previous->stage(name);
      if (old && still_valid(*old, dir)) {
        run.manifest.stages.push_back(*old);
        continue;
      }
      reusing = false;
    }
    const auto start = std::chrono::steady_clock::now();
    StageResult result;
    try {
      result = fn(run);
    } catch (const std::exception& e) {
      run.manifest.failed_stage = name;
      run.manifest.error = e.what();
      run.save_manifest();
      throw StageError(name, e.what());
    }
    StageRecord rec;
    rec.name = name;
    rec.status = result.status;
    rec.note = result.note;
    rec.inputs = digests(result.inputs);
    std::vector<std::string> outputs;
    for (const auto& o : result.outputs) outputs.push_back(run.file(o));
    for (const auto& [path, digest] : digests(outputs)) rec.outputs[fs::path(path).filename().string()] = digest;
    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    run.manifest.stages.push_back(std::move(rec));
    run.save_manifest();
  }
  run.manifest.complete = true;
  run.save_manifest();
  return run.manifest;
}

PoolResult generate_pool(const PipelineConfig& c, std::span<const SeedExample> few_shot) {
  validate_config(c);
  if (few_shot.empty()) throw Error("no few-shot seeds");
  std::optional<toy::ToyWorld> world;
  std::optional<ToyModels> models;
  std::optional<toy::ToyLM> target_model;
  std::map<std::string, std::unique_ptr<SubprocessEndpoint>> processes;
  std::vector<std::unique_ptr<Generator>> owned;
  auto make = [&](const std::string& locator, bool target_role) -> Generator& {
    if (locator != "toy") {
      auto& slot = processes[locator];
      if (!slot) slot = std::make_unique<SubprocessEndpoint>(locator.substr(5));
      return *slot;
    }
    if (!world) world = toy::make_toy_world(toy_world_params(c));
    if (target_role) {
      if (!target_model) target_model = toy::fit_bigram(world->target_corpus, c.toy_alpha);
      owned.push_back(std::make_unique<toy::ToyGenerator>(*target_model, nullptr));
    } else {
      if (!models) {
        toy::ToyLM base = toy::fit_bigram(world->base_corpus, c.toy_alpha);
        toy::ToyAdapter adapter = toy::fit_adapter(base, world->task_corpus);
        models.emplace(ToyModels{std::move(base), std::move(adapter)});
      }
      owned.push_back(std::make_unique<toy::ToyGenerator>(models->base, &models->adapter));
    }
    return *owned.back();
  };
  Generator& label_gen = make(c.generator, false);
  Generator& query_gen = c.query_source == "target" ? make(c.target_generator, true) : make(c.generator, false);
  return build_pool(pool_config(c), few_shot, query_gen, label_gen, query_template_for(c, few_shot.size()),
                    label_template_for(c));
}

MaskedDataset export_masked_dataset(const std::string& run_dir) {
  const RunManifest manifest = read_manifest(run_dir);
  if (!manifest.complete) throw Error("run in " + run_dir + " is incomplete");
  MaskedDataset ds = read_masked_dataset_file((fs::path(run_dir) / "dataset.jsonl").string());
  const Verdict verdict = validate_dataset(ds);
  if (!verdict.ok()) throw ValidationError("dataset in " + run_dir + ": " + verdict.describe());
  return ds;
}

}  // namespace titok
