#include "titok/toyworld.hpp"

#include <random>

namespace titok::toy {
namespace {

class Sampler {
 public:
  explicit Sampler(std::uint64_t seed) : rng_(seed) {}

  std::size_t below(std::size_t n) { return static_cast<std::size_t>(rng_() % n); }
  double unit() { return static_cast<double>(rng_() >> 11) * 0x1.0p-53; }

  // Zipf-like: word i drawn with weight 1/(i+1).
  const std::string& zipf(const std::vector<std::string>& words) {
    double norm = 0.0;
    for (std::size_t i = 0; i < words.size(); ++i) norm += 1.0 / static_cast<double>(i + 1);
    double u = unit() * norm;
    for (std::size_t i = 0; i < words.size(); ++i) {
      u -= 1.0 / static_cast<double>(i + 1);
      if (u < 0.0) return words[i];
    }
    return words.back();
  }

  std::string sentence(double task_rate) {
    const std::size_t n = 4 + below(5);
    std::string out;
    for (std::size_t i = 0; i < n; ++i) {
      if (i) out += ' ';
      out += (task_rate > 0.0 && unit() < task_rate) ? task_words()[below(task_words().size())] : zipf(common_words());
    }
    return out;
  }

 private:
  std::mt19937_64 rng_;
};

}  // namespace

const std::vector<std::string>& common_words() {
  static const std::vector<std::string> words = {
      "the",  "of",    "and",   "to",   "in",    "is",    "was",  "for",  "on",    "that",
      "with", "as",    "it",    "at",   "by",    "from",  "this", "have", "are",   "be",
      "not",  "but",   "they",  "we",   "one",   "all",   "there", "their", "which", "she",
      "he",   "had",   "her",   "his",  "an",    "or",    "were", "been", "more",  "when",
      "time", "people", "other", "said", "about", "many",  "then", "them", "some",  "would",
  };
  return words;
}

const std::vector<std::string>& task_words() {
  static const std::vector<std::string> words = {"qzv", "zqa", "vqz", "jxq", "xjz", "qzzv", "zzq", "vjx"};
  return words;
}

ToyWorld make_toy_world(const ToyWorldParams& params) {
  Sampler base(params.seed * 4 + 0);
  Sampler planted(params.seed * 4 + 1);
  Sampler target(params.seed * 4 + 2);
  Sampler heldout(params.seed * 4 + 3);

  ToyWorld world;
  for (std::size_t i = 0; i < params.base_sentences; ++i) world.base_corpus.push_back(base.sentence(0.0));
  world.task_corpus = world.base_corpus;
  for (std::size_t i = 0; i < params.planted_sentences; ++i) world.task_corpus.push_back(planted.sentence(1.0));
  for (std::size_t i = 0; i < params.target_sentences; ++i) world.target_corpus.push_back(target.sentence(0.0));
  for (std::size_t i = 0; i < params.heldout_sentences; ++i) {
    world.heldout_task.push_back(heldout.sentence(params.task_word_rate));
  }
  for (std::size_t i = 0; i < params.few_shot; ++i) {
    world.few_shot.push_back({heldout.sentence(params.task_word_rate), heldout.sentence(params.task_word_rate)});
  }
  return world;
}

}  // namespace titok::toy
