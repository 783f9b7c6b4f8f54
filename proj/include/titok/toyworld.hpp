#pragma once

// Seeded synthetic corpora for the toy laboratory. The task corpus is the
// base corpus plus sentences built only from a small set of rare-letter
// "task words", so the fitted adapter boosts exactly the bigrams those
// words introduce.

#include <cstdint>
#include <string>
#include <vector>

#include "titok/synthgen.hpp"

namespace titok::toy {

struct ToyWorldParams {
  std::uint64_t seed = 1;
  std::size_t base_sentences = 400;
  std::size_t planted_sentences = 200;
  std::size_t target_sentences = 200;
  std::size_t heldout_sentences = 200;
  std::size_t few_shot = 5;
  /// Probability that a word of task text is a task word.
  double task_word_rate = 0.5;
};

struct ToyWorld {
  std::vector<std::string> base_corpus;    // source backbone pretraining text
  std::vector<std::string> task_corpus;    // base corpus + planted sentences
  std::vector<std::string> target_corpus;  // independent sample for the target backbone
  std::vector<std::string> heldout_task;   // fresh task text for evaluation
  std::vector<SeedExample> few_shot;
};

const std::vector<std::string>& common_words();
const std::vector<std::string>& task_words();

ToyWorld make_toy_world(const ToyWorldParams& params);

}  // namespace titok::toy
