#include "titok/synthgen.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

#include "titok/jsonl.hpp"

namespace titok {
namespace {

bool is_name_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

// Calls `on_placeholder(name)` for every {name}; other text goes to `on_text`.
template <class Text, class Placeholder>
void scan_template(std::string_view s, Text on_text, Placeholder on_placeholder) {
  std::size_t i = 0;
  while (i < s.size()) {
    if (s[i] == '{') {
      std::size_t j = i + 1;
      while (j < s.size() && is_name_char(s[j])) ++j;
      if (j < s.size() && s[j] == '}' && j > i + 1) {
        on_placeholder(std::string(s.substr(i + 1, j - i - 1)));
        i = j + 1;
        continue;
      }
    }
    on_text(s[i]);
    ++i;
  }
}

}  // namespace

std::vector<std::string> PromptTemplate::placeholders() const {
  std::vector<std::string> names;
  scan_template(
      user_text, [](char) {},
      [&](const std::string& name) {
        if (std::find(names.begin(), names.end(), name) == names.end()) names.push_back(name);
      });
  return names;
}

std::string PromptTemplate::render(const std::map<std::string, std::string>& bindings) const {
  std::string out;
  scan_template(
      user_text, [&](char c) { out += c; },
      [&](const std::string& name) {
        auto it = bindings.find(name);
        if (it == bindings.end()) throw Error("unbound template placeholder {" + name + "}");
        out += it->second;
      });
  return out;
}

PromptTemplate PromptTemplate::load(const std::string& path) {
  std::ifstream in = open_read(path);
  Json j;
  try {
    j = Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error("template " + path + ": " + e.what());
  }
  PromptTemplate t;
  t.system_text = j.value("system_text", "");
  t.user_text = j.at("user_text").get<std::string>();
  t.stop_markers = j.value("stop_markers", std::vector<std::string>{});
  return t;
}

const std::set<std::string>& default_no_rouge_tasks() {
  static const std::set<std::string> tasks = {
      "bbh_boolean_expressions",
      "bbh_date_understanding",
      "bbh_disambiguation_qa",
      "bbh_geometric_shapes",
      "bbh_logical_deduction_three_objects",
      "bbh_multistep_arithmetic_two",
      "bbh_navigate",
      "bbh_object_counting",
      "bbh_penguins_in_a_table",
      "bbh_reasoning_about_colored_objects",
      "bbh_salient_translation_error_detection",
      "bbh_snarks",
      "bbh_temporal_sequences",
      "bbh_tracking_shuffled_objects_three_objects",
      "bbh_web_of_lies",
      "high_school_world_history",
      "high_school_us_history",
      "high_school_european_history",
  };
  return tasks;
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index, std::uint64_t stream) {
  // splitmix64 finalizer over a mixed key.
  std::uint64_t z = base ^ (index * 0x9E3779B97F4A7C15ull) ^ (stream * 0xD1B54A32D192ED03ull);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

std::string trim(std::string_view text) {
  std::size_t b = 0;
  std::size_t e = text.size();
  while (b < e && std::isspace(static_cast<unsigned char>(text[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(text[e - 1]))) --e;
  return std::string(text.substr(b, e - b));
}

namespace {

GenResponse call_with_retries(Generator& gen, const GenRequest& request, std::size_t max_retries,
                              const PoolResult& so_far) {
  std::string last_error;
  for (std::size_t attempt = 0; attempt <= max_retries; ++attempt) {
    try {
      return gen.generate(request);
    } catch (const GeneratorFailure& e) {
      last_error = e.what();
    }
  }
  throw PoolError("generator failed " + std::to_string(max_retries + 1) + " times on request " +
                      std::to_string(request.request_index) + " (" + request.role + "): " + last_error,
                  so_far);
}

std::map<std::string, std::string> few_shot_bindings(std::span<const SeedExample> few_shot, std::size_t count,
                                                     std::uint64_t seed) {
  std::vector<std::size_t> order(few_shot.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::mt19937_64 rng(seed);
  const std::size_t n = std::min(count, order.size());
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t j = i + static_cast<std::size_t>(rng() % (order.size() - i));
    std::swap(order[i], order[j]);
  }
  std::map<std::string, std::string> bindings;
  for (std::size_t i = 0; i < n; ++i) {
    const SeedExample& ex = few_shot[order[i]];
    bindings["example_" + std::to_string(i + 1)] = ex.query;
    bindings["example_" + std::to_string(i + 1) + "_response"] = ex.response;
  }
  bindings["seed_count"] = std::to_string(n);
  return bindings;
}

}  // namespace

PoolResult build_pool(const PoolConfig& config, std::span<const SeedExample> few_shot, Generator& query_generator,
                      Generator& label_generator, const PromptTemplate& query_template,
                      const PromptTemplate& label_template) {
  if (config.pool_size == 0) throw Error("pool size must be positive");
  if (few_shot.empty()) throw Error("few-shot seed list is empty");

  AdmissionPolicy policy = config.admission;
  if (config.no_rouge_tasks.count(config.task)) policy.rouge_threshold.reset();
  AdmissionGate gate(policy);

  PoolResult result;
  const std::size_t budget = config.attempt_factor * config.pool_size;
  std::size_t index = 0;
  while (result.samples.size() < config.pool_size) {
    if (result.attempts >= budget) {
      std::ostringstream msg;
      std::map<RejectReason, std::size_t> by_reason;
      for (const auto& r : result.rejects) ++by_reason[r.reason];
      msg << "admission starved: " << result.samples.size() << "/" << config.pool_size << " admitted after "
          << result.attempts << " attempts";
      for (const auto& [reason, n] : by_reason) msg << ", " << to_string(reason) << "=" << n;
      throw StarvationError(msg.str(), std::move(result));
    }
    ++result.attempts;
    const std::size_t request_index = index++;

    auto bindings = few_shot_bindings(few_shot, config.few_shot_count, derive_seed(config.seed, request_index, 0));
    GenRequest query_req;
    query_req.request_index = request_index;
    query_req.role = "query";
    query_req.system_text = query_template.system_text;
    query_req.prompt = query_template.render(bindings);
    query_req.params = config.query_params;
    query_req.seed = derive_seed(config.seed, request_index, 1);
    query_req.stop_markers = query_template.stop_markers;
    GenResponse query_resp = call_with_retries(query_generator, query_req, config.max_retries, result);
    std::string query = trim(query_resp.text);

    Admission verdict = gate.check(query);
    if (!verdict.accepted) {
      result.rejects.push_back({request_index, query, verdict.reason, verdict.max_rouge, query_resp.seed});
      continue;
    }

    bindings["query"] = query;
    GenRequest label_req;
    label_req.request_index = request_index;
    label_req.role = "label";
    label_req.system_text = label_template.system_text;
    label_req.prompt = label_template.render(bindings);
    label_req.params = config.label_params;
    label_req.seed = derive_seed(config.seed, request_index, 2);
    label_req.stop_markers = label_template.stop_markers;
    GenResponse label_resp = call_with_retries(label_generator, label_req, config.max_retries, result);
    std::string label = trim(label_resp.text);
    if (label.empty()) {
      result.rejects.push_back({request_index, query, RejectReason::empty_label, verdict.max_rouge, query_resp.seed});
      continue;
    }

    gate.add(query);
    char id[32];
    std::snprintf(id, sizeof id, "%06zu", result.samples.size());
    result.samples.push_back(
        {config.id_prefix + id, std::move(query), std::move(label), request_index, query_resp.seed, label_resp.seed});
  }
  return result;
}

void to_json(Json& j, const PoolSample& s) {
  j = Json{{"format_version", kFormatVersion}, {"label_seed", s.label_seed},     {"query_seed", s.query_seed},
           {"query_text", s.query_text},       {"request_index", s.request_index}, {"response_text", s.response_text},
           {"sample_id", s.sample_id}};
}

void from_json(const Json& j, PoolSample& s) {
  j.at("sample_id").get_to(s.sample_id);
  j.at("query_text").get_to(s.query_text);
  j.at("response_text").get_to(s.response_text);
  j.at("request_index").get_to(s.request_index);
  j.at("query_seed").get_to(s.query_seed);
  j.at("label_seed").get_to(s.label_seed);
}

void to_json(Json& j, const RejectEntry& r) {
  j = Json{{"format_version", kFormatVersion}, {"max_rouge", r.max_rouge},   {"query_seed", r.query_seed},
           {"query_text", r.query_text},       {"reason", to_string(r.reason)}, {"request_index", r.request_index}};
}

void from_json(const Json& j, RejectEntry& r) {
  static const std::map<std::string, RejectReason> reasons = {
      {"none", RejectReason::none},
      {"empty", RejectReason::empty},
      {"duplicate", RejectReason::duplicate},
      {"rouge", RejectReason::rouge},
      {"empty_label", RejectReason::empty_label},
  };
  j.at("request_index").get_to(r.request_index);
  j.at("query_text").get_to(r.query_text);
  r.reason = reasons.at(j.at("reason").get<std::string>());
  j.at("max_rouge").get_to(r.max_rouge);
  j.at("query_seed").get_to(r.query_seed);
}

void to_json(Json& j, const SeedExample& s) { j = Json{{"query", s.query}, {"response", s.response}}; }

void from_json(const Json& j, SeedExample& s) {
  j.at("query").get_to(s.query);
  j.at("response").get_to(s.response);
}

}  // namespace titok
