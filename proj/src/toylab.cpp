#include "titok/toylab.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

namespace titok::toy {
namespace {

double log_sum_exp(std::span<const double> xs) {
  const double hi = *std::max_element(xs.begin(), xs.end());
  double sum = 0.0;
  for (double x : xs) sum += std::exp(x - hi);
  return hi + std::log(sum);
}

std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

double parse_double(const std::string& s) {
  std::size_t used = 0;
  double x = std::stod(s, &used);
  if (used != s.size()) throw Error("bad number: " + s);
  return x;
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ull;
  }
  return h;
}

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

void check_vocab(const std::string& vocab) {
  if (vocab.empty() || vocab[0] != kBoundary) throw Error("toy vocabulary must start with the boundary symbol");
  std::set<char> seen(vocab.begin(), vocab.end());
  if (seen.size() != vocab.size()) throw Error("toy vocabulary has repeated symbols");
}

}  // namespace

const std::string& default_alphabet() {
  static const std::string alphabet = std::string(1, kBoundary) + " abcdefghijklmnopqrstuvwxyz";
  return alphabet;
}

std::string vocab_from_corpus(std::span<const std::string> corpus) {
  std::set<char> symbols;
  for (const auto& s : corpus) symbols.insert(s.begin(), s.end());
  symbols.erase(kBoundary);
  std::string vocab(1, kBoundary);
  vocab.append(symbols.begin(), symbols.end());
  return vocab;
}

// ---------------------------------------------------------------- ToyLM

ToyLM::ToyLM(std::string vocab, std::vector<double> logits, double alpha)
    : vocab_(std::move(vocab)), logits_(std::move(logits)), alpha_(alpha) {
  check_vocab(vocab_);
  if (logits_.size() != vocab_.size() * vocab_.size()) throw Error("logit matrix is not V x V");
  lookup_.fill(-1);
  for (std::size_t i = 0; i < vocab_.size(); ++i) lookup_[static_cast<unsigned char>(vocab_[i])] = static_cast<int>(i);
}

int ToyLM::require_index(char symbol) const {
  int i = index(symbol);
  if (i < 0) throw Error(std::string("symbol outside toy vocabulary: '") + symbol + "'");
  return i;
}

void ToyLM::apply(const ToyAdapter& adapter) {
  if (adapter.vocab() != vocab_) throw Error("adapter vocabulary differs from model");
  std::vector<std::pair<std::size_t, double>> originals;
  originals.reserve(adapter.delta().size());
  for (const auto& [key, d] : adapter.delta()) {
    const std::size_t at = key.first * size() + key.second;
    originals.emplace_back(at, logits_[at]);
    logits_[at] += d;
  }
  saved_.push_back(std::move(originals));
}

void ToyLM::remove() {
  if (saved_.empty()) throw Error("no adapter applied");
  for (const auto& [at, value] : saved_.back()) logits_[at] = value;
  saved_.pop_back();
}

void ToyLM::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path);
  out << "titok-toylm v1 " << size() << ' ' << format_double(alpha_) << '\n' << escape_piece(vocab_) << '\n';
  for (std::size_t r = 0; r < size(); ++r) {
    for (std::size_t c = 0; c < size(); ++c) out << (c ? " " : "") << format_double(logit(r, c));
    out << '\n';
  }
  if (!out.flush()) throw Error("write failed: " + path);
}

ToyLM ToyLM::load(const std::string& path) {
  std::vector<std::string> lines = read_lines(path);
  if (lines.size() < 2) throw Error(path + ": truncated toy model");
  std::istringstream header(lines[0]);
  std::string magic, version, alpha;
  std::size_t v = 0;
  header >> magic >> version >> v >> alpha;
  if (magic != "titok-toylm" || version != "v1") throw Error(path + ": not a toy model file");
  std::string vocab = unescape_piece(lines[1]);
  if (vocab.size() != v || lines.size() < 2 + v) throw Error(path + ": vocabulary/row count mismatch");
  std::vector<double> logits;
  logits.reserve(v * v);
  for (std::size_t r = 0; r < v; ++r) {
    std::istringstream row(lines[2 + r]);
    std::string tok;
    std::size_t n = 0;
    while (row >> tok) {
      logits.push_back(parse_double(tok));
      ++n;
    }
    if (n != v) throw Error(path + ": row " + std::to_string(r) + " has " + std::to_string(n) + " values");
  }
  return ToyLM(vocab, std::move(logits), parse_double(alpha));
}

// ---------------------------------------------------------------- ToyAdapter

bool ToyAdapter::contains(char context, char next) const {
  auto c = vocab_.find(context);
  auto n = vocab_.find(next);
  if (c == std::string::npos || n == std::string::npos) return false;
  return contains(c, n);
}

void ToyAdapter::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path);
  out << "titok-toyadapter v1 " << delta_.size() << '\n' << escape_piece(vocab_) << '\n';
  for (const auto& [key, d] : delta_) out << key.first << ' ' << key.second << ' ' << format_double(d) << '\n';
  if (!out.flush()) throw Error("write failed: " + path);
}

ToyAdapter ToyAdapter::load(const std::string& path) {
  std::vector<std::string> lines = read_lines(path);
  if (lines.size() < 2) throw Error(path + ": truncated adapter");
  std::istringstream header(lines[0]);
  std::string magic, version;
  std::size_t n = 0;
  header >> magic >> version >> n;
  if (magic != "titok-toyadapter" || version != "v1") throw Error(path + ": not an adapter file");
  std::string vocab = unescape_piece(lines[1]);
  if (lines.size() < 2 + n) throw Error(path + ": truncated adapter");
  std::map<Key, double> delta;
  for (std::size_t i = 0; i < n; ++i) {
    std::istringstream row(lines[2 + i]);
    std::size_t c = 0, x = 0;
    std::string d;
    if (!(row >> c >> x >> d) || c >= vocab.size() || x >= vocab.size()) throw Error(path + ": bad adapter entry");
    delta[{c, x}] = parse_double(d);
  }
  return ToyAdapter(std::move(vocab), std::move(delta));
}

// ---------------------------------------------------------------- counts

BigramCounts::BigramCounts(std::string vocab) : vocab_(std::move(vocab)), counts_(vocab_.size() * vocab_.size(), 0) {
  check_vocab(vocab_);
}

int BigramCounts::index(char symbol) const {
  auto at = vocab_.find(symbol);
  if (at == std::string::npos) throw Error(std::string("symbol outside toy vocabulary: '") + symbol + "'");
  return static_cast<int>(at);
}

void BigramCounts::add_text(std::string_view text) {
  std::size_t context = 0;
  for (char c : text) {
    const auto next = static_cast<std::size_t>(index(c));
    add(context, next);
    context = next;
  }
}

void BigramCounts::add(std::size_t context, std::size_t next, std::uint64_t n) {
  counts_[context * vocab_.size() + next] += n;
}

std::uint64_t BigramCounts::row_total(std::size_t context) const {
  const std::size_t v = vocab_.size();
  return std::accumulate(counts_.begin() + static_cast<std::ptrdiff_t>(context * v),
                         counts_.begin() + static_cast<std::ptrdiff_t>((context + 1) * v), std::uint64_t{0});
}

std::uint64_t BigramCounts::total() const { return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0}); }

ToyLM BigramCounts::to_model(double alpha) const {
  if (!(alpha > 0.0)) throw Error("smoothing alpha must be positive");
  const std::size_t v = vocab_.size();
  std::vector<double> logits(v * v);
  for (std::size_t r = 0; r < v; ++r) {
    const double denom = static_cast<double>(row_total(r)) + alpha * static_cast<double>(v);
    for (std::size_t c = 0; c < v; ++c) {
      logits[r * v + c] = std::log((static_cast<double>(count(r, c)) + alpha) / denom);
    }
  }
  return ToyLM(vocab_, std::move(logits), alpha);
}

ToyLM fit_bigram(std::span<const std::string> corpus, double alpha, const std::string& vocab) {
  if (corpus.empty()) throw Error("cannot fit a bigram model to an empty corpus");
  BigramCounts counts(vocab);
  for (const auto& s : corpus) counts.add_text(s);
  return counts.to_model(alpha);
}

ToyAdapter fit_adapter(const ToyLM& base, std::span<const std::string> task_corpus) {
  if (task_corpus.empty()) throw Error("cannot fit an adapter to an empty task corpus");
  ToyLM task = fit_bigram(task_corpus, base.alpha(), base.vocab());
  std::map<ToyAdapter::Key, double> delta;
  for (std::size_t r = 0; r < base.size(); ++r) {
    for (std::size_t c = 0; c < base.size(); ++c) {
      if (task.logit(r, c) > base.logit(r, c)) delta[{r, c}] = task.logit(r, c) - base.logit(r, c);
    }
  }
  return ToyAdapter(base.vocab(), std::move(delta));
}

// ---------------------------------------------------------------- scoring

LogProbTable::LogProbTable(const ToyLM& model, const ToyAdapter* adapter) : v_(model.size()), table_(model.logits()) {
  if (adapter) {
    if (adapter->vocab() != model.vocab()) throw Error("adapter vocabulary differs from model");
    for (const auto& [key, d] : adapter->delta()) table_[key.first * v_ + key.second] += d;
  }
  for (std::size_t r = 0; r < v_; ++r) {
    std::span<double> row(table_.data() + r * v_, v_);
    const double z = log_sum_exp(row);
    for (double& x : row) x -= z;
  }
}

ToyScorer::ToyScorer(const ToyLM& model, const ToyAdapter* adapter, TokenizerHandle tokenizer)
    : model_(model), tokenizer_(std::move(tokenizer)), amateur_(model, nullptr), expert_(model, adapter) {}

ScoredTrace ToyScorer::score_const(const std::string& sample_id, const std::string& query_text,
                                   const std::string& response_text) const {
  ScoredTrace trace;
  trace.sample_id = sample_id;
  trace.query_text = query_text;
  trace.response_text = response_text;
  std::vector<TokenId> ids = tokenizer_->tokenize(response_text);
  std::size_t context = 0;
  std::string rebuilt;
  for (TokenId id : ids) {
    TokenRecord rec;
    rec.token_id = id;
    rec.token_text = tokenizer_->piece_text(id);
    for (char c : rec.token_text) {
      const auto next = static_cast<std::size_t>(model_.require_index(c));
      rec.logp_amateur += amateur_.logp(context, next);
      rec.logp_expert += expert_.logp(context, next);
      context = next;
    }
    rebuilt += rec.token_text;
    trace.tokens.push_back(std::move(rec));
  }
  if (rebuilt != response_text) throw Error("tokenizer pieces do not rebuild the response of " + sample_id);
  return trace;
}

ScoredTrace ToyScorer::score(const std::string& sample_id, const std::string& query_text,
                             const std::string& response_text) {
  return score_const(sample_id, query_text, response_text);
}

ScoredTrace toy_score(const ToyLM& model, const ToyAdapter* adapter, const std::string& sample_id,
                      const std::string& query_text, const std::string& response_text, const Tokenizer& tokenizer) {
  // Non-owning handle; the scorer does not outlive this call.
  TokenizerHandle handle(&tokenizer, [](const Tokenizer*) {});
  return ToyScorer(model, adapter, handle).score_const(sample_id, query_text, response_text);
}

std::vector<ScoredTrace> toy_score_batch(const ToyScorer& scorer, std::span<const PoolSample> pool) {
  std::vector<ScoredTrace> out(pool.size());
  std::vector<std::string> errors(pool.size());
  const auto n = static_cast<std::ptrdiff_t>(pool.size());
#pragma omp parallel for schedule(dynamic, 16)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      out[i] = scorer.score_const(pool[i].sample_id, pool[i].query_text, pool[i].response_text);
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  }
  for (std::size_t i = 0; i < errors.size(); ++i) {
    if (!errors[i].empty()) throw Error(errors[i]);
  }
  return out;
}

// ---------------------------------------------------------------- generation

std::vector<std::size_t> top_p_support(std::span<const double> probs, double top_p) {
  std::vector<std::size_t> order(probs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return probs[a] > probs[b]; });
  double mass = 0.0;
  std::size_t keep = 0;
  while (keep < order.size()) {
    mass += probs[order[keep++]];
    if (mass >= top_p) break;
  }
  order.resize(std::max<std::size_t>(keep, 1));
  return order;
}

GenResponse toy_generate(const ToyLM& model, const ToyAdapter* adapter, std::string_view prompt,
                         const SamplingParams& params, std::uint64_t seed, std::span<const std::string> stop_markers,
                         const std::function<void(const StepAudit&)>& audit) {
  LogProbTable table(model, adapter);
  std::mt19937_64 rng(derive_seed(seed, fnv1a(prompt), 3));
  const bool greedy = params.greedy || params.temperature <= 0.0;

  GenResponse out;
  out.seed = seed;
  out.finish_reason = "length";
  std::size_t context = 0;
  const std::size_t v = model.size();
  std::vector<double> probs(v);
  for (std::size_t step = 0; step < params.max_tokens; ++step) {
    std::span<const double> row = table.row(context);
    std::size_t chosen = 0;
    StepAudit record;
    if (greedy) {
      chosen = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
      if (audit) {
        for (std::size_t i = 0; i < v; ++i) probs[i] = std::exp(row[i]);
        record.support = {chosen};
      }
    } else {
      std::vector<double> scaled(row.begin(), row.end());
      for (double& x : scaled) x /= params.temperature;
      const double z = log_sum_exp(scaled);
      for (std::size_t i = 0; i < v; ++i) probs[i] = std::exp(scaled[i] - z);
      std::vector<std::size_t> support = top_p_support(probs, params.top_p);
      double mass = 0.0;
      for (std::size_t i : support) mass += probs[i];
      double u = uniform01(rng) * mass;
      chosen = support.back();
      for (std::size_t i : support) {
        if (u < probs[i]) {
          chosen = i;
          break;
        }
        u -= probs[i];
      }
      if (audit) record.support = std::move(support);
    }
    if (audit) {
      record.step = step;
      record.probs = probs;
      record.chosen = chosen;
      audit(record);
    }
    if (chosen == 0) {
      out.finish_reason = "stop";
      break;
    }
    out.text += model.vocab()[chosen];
    context = chosen;
    bool stopped = false;
    for (const std::string& marker : stop_markers) {
      if (!marker.empty() && out.text.size() >= marker.size() &&
          out.text.compare(out.text.size() - marker.size(), marker.size(), marker) == 0) {
        out.text.resize(out.text.size() - marker.size());
        stopped = true;
        break;
      }
    }
    if (stopped) {
      out.finish_reason = "stop";
      break;
    }
  }
  return out;
}

GenResponse ToyGenerator::generate(const GenRequest& request) {
  return toy_generate(model_, adapter_, request.prompt, request.params, request.seed, request.stop_markers);
}

// ---------------------------------------------------------------- target

BigramCounts masked_counts(const MaskedDataset& dataset, const Tokenizer& tokenizer, const std::string& vocab,
                           const BigramCounts* prior) {
  BigramCounts counts = prior ? *prior : BigramCounts(vocab);
  if (counts.vocab() != vocab) throw Error("prior counts use a different vocabulary");
  std::size_t kept = 0;
  for (const MaskedRecord& rec : dataset.records) {
    if (!rec.mask.binary) throw Error("masked training needs binary masks: " + rec.sample_id);
    if (rec.mask.keep.size() != rec.token_ids.size()) throw Error("mask length mismatch: " + rec.sample_id);
    std::size_t context = 0;
    for (std::size_t t = 0; t < rec.token_ids.size(); ++t) {
      const bool keep = rec.mask.keep[t] == 1.0;
      kept += keep ? 1 : 0;
      for (char c : tokenizer.piece_text(rec.token_ids[t])) {
        const auto next = static_cast<std::size_t>(counts.index(c));
        if (keep) counts.add(context, next);
        context = next;
      }
    }
  }
  if (kept == 0) throw Error("masked training set keeps no tokens");
  return counts;
}

ToyLM train_masked_target(const MaskedDataset& dataset, const Tokenizer& tokenizer, double alpha,
                          const std::string& vocab, const BigramCounts* prior) {
  return masked_counts(dataset, tokenizer, vocab, prior).to_model(alpha);
}

std::vector<bool> planted_positions(const ScoredTrace& trace, const ToyAdapter& adapter) {
  std::vector<bool> out;
  out.reserve(trace.tokens.size());
  char context = kBoundary;
  for (const TokenRecord& tok : trace.tokens) {
    bool planted = false;
    for (char c : tok.token_text) {
      planted = planted || adapter.contains(context, c);
      context = c;
    }
    out.push_back(planted);
  }
  return out;
}

double planted_mean_rank(std::span<const ScoredTrace> traces, const ToyAdapter& adapter) {
  struct Item {
    double excess;
    bool planted;
  };
  std::vector<Item> items;
  for (const ScoredTrace& t : traces) {
    const std::vector<bool> planted = planted_positions(t, adapter);
    for (std::size_t i = 0; i < t.tokens.size(); ++i) {
      items.push_back({t.tokens[i].logp_expert - t.tokens[i].logp_amateur, planted[i]});
    }
  }
  std::stable_sort(items.begin(), items.end(), [](const Item& a, const Item& b) { return a.excess > b.excess; });
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t r = 0; r < items.size(); ++r) {
    if (!items[r].planted) continue;
    sum += static_cast<double>(r) / static_cast<double>(items.size());
    ++n;
  }
  if (n == 0) throw Error("no planted positions in the scored traces");
  return sum / static_cast<double>(n);
}

Nll heldout_nll(const ToyLM& model, std::span<const std::string> texts) {
  Nll nll;
  for (const auto& text : texts) {
    std::size_t context = 0;
    for (char c : text) {
      const auto next = static_cast<std::size_t>(model.require_index(c));
      const std::span<const double> row = model.row(context);
      nll.total += log_sum_exp(row) - row[next];
      ++nll.symbols;
      context = next;
    }
  }
  return nll;
}

}  // namespace titok::toy
