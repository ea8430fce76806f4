#include "blex/corpus/synthetic.hpp"

#include "blex/error.hpp"
#include "blex/ter/labeler.hpp"

#include <algorithm>
#include <random>
#include <set>
#include <unordered_map>

namespace blex {
namespace {

using Engine = std::mt19937_64;

TokenSeq make_lexicon(int size, std::string_view consonants, std::string_view vowels,
                      Engine& rng) {
  std::uniform_int_distribution<std::size_t> pick_c(0, consonants.size() - 1);
  std::uniform_int_distribution<std::size_t> pick_v(0, vowels.size() - 1);
  std::uniform_int_distribution<int> syllables(1, 3);
  std::set<std::string> seen;
  TokenSeq lexicon;
  while (static_cast<int>(lexicon.size()) < size) {
    std::string word;
    const int n = syllables(rng);
    for (int i = 0; i < n; ++i) {
      word += consonants[pick_c(rng)];
      word += vowels[pick_v(rng)];
    }
    if (seen.insert(word).second) lexicon.push_back(word);
  }
  return lexicon;
}

struct Generator {
  const SyntheticConfig& config;
  const SyntheticTask& task;
  Engine rng;

  TokenSeq sample_source() {
    std::uniform_int_distribution<int> len(config.min_length, config.max_length);
    std::uniform_int_distribution<std::size_t> word(0, task.source_lexicon.size() - 1);
    TokenSeq s(static_cast<std::size_t>(len(rng)));
    for (auto& w : s) w = task.source_lexicon[word(rng)];
    return s;
  }

  std::string substitute_for(const TokenSeq& reference, const std::string& original) {
    std::vector<const std::string*> pool;
    for (const auto& w : task.target_lexicon) {
      if (std::find(reference.begin(), reference.end(), w) == reference.end()) pool.push_back(&w);
    }
    if (pool.empty()) {
      for (const auto& w : task.target_lexicon)
        if (w != original) pool.push_back(&w);
    }
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    return *pool[pick(rng)];
  }

  TokenSeq corrupt(const TokenSeq& reference) {
    std::bernoulli_distribution del(config.p_del), sub(config.p_sub), ins(config.p_ins);
    std::uniform_int_distribution<std::size_t> any(0, task.target_lexicon.size() - 1);
    for (int attempt = 0;; ++attempt) {
      TokenSeq mt;
      if (ins(rng)) mt.push_back(task.target_lexicon[any(rng)]);
      for (const auto& w : reference) {
        if (del(rng)) {
          // dropped
        } else if (sub(rng)) {
          mt.push_back(substitute_for(reference, w));
        } else {
          mt.push_back(w);
        }
        if (ins(rng)) mt.push_back(task.target_lexicon[any(rng)]);
      }
      if (!mt.empty()) return mt;
      if (attempt >= 16) return {reference.front()};
    }
  }

  TripletExample triplet() {
    TripletExample ex;
    ex.source = sample_source();
    ex.post_edit = synthetic_translate(task, ex.source);
    ex.mt = corrupt(ex.post_edit);
    auto labels = ter::label(ex.mt, ex.post_edit);
    ex.hter = labels.hter;
    ex.word_tags = std::move(labels.word_tags);
    ex.gap_tags = std::move(labels.gap_tags);
    return ex;
  }
};

}  // namespace

void validate(const SyntheticConfig& c) {
  if (c.vocab_size < 8) throw ValidationError("synthetic: vocab_size must be >= 8");
  if (c.min_length < 1 || c.max_length < c.min_length) {
    throw ValidationError("synthetic: need 1 <= min_length <= max_length");
  }
  for (double p : {c.p_sub, c.p_del, c.p_ins}) {
    if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("synthetic: noise rates must lie in [0, 1]");
  }
  if (c.p_del >= 1.0) throw ValidationError("synthetic: p_del must be < 1");
  if (c.parallel_pairs < 0 || c.train_triplets < 0 || c.dev_triplets < 0 || c.test_triplets < 0) {
    throw ValidationError("synthetic: corpus sizes must be non-negative");
  }
}

SyntheticTask generate_synthetic_task(const SyntheticConfig& config) {
  validate(config);
  SyntheticTask task;
  Engine lexicon_rng(config.seed);
  task.source_lexicon = make_lexicon(config.vocab_size, "klmnprst", "aou", lexicon_rng);
  task.target_lexicon = make_lexicon(config.vocab_size, "bdfghjvz", "eiy", lexicon_rng);

  // Separate streams so changing one split size leaves the others intact.
  Generator parallel{config, task, Engine(config.seed * 4 + 1)};
  for (int i = 0; i < config.parallel_pairs; ++i) {
    TokenSeq s = parallel.sample_source();
    TokenSeq t = synthetic_translate(task, s);
    task.parallel.push_back({std::move(s), std::move(t)});
  }
  Generator train{config, task, Engine(config.seed * 4 + 2)};
  for (int i = 0; i < config.train_triplets; ++i) task.train.push_back(train.triplet());
  Generator dev{config, task, Engine(config.seed * 4 + 3)};
  for (int i = 0; i < config.dev_triplets; ++i) task.dev.push_back(dev.triplet());
  Generator test{config, task, Engine(config.seed * 4 + 4)};
  for (int i = 0; i < config.test_triplets; ++i) task.test.push_back(test.triplet());
  return task;
}

TokenSeq synthetic_translate(const SyntheticTask& task, const TokenSeq& source) {
  std::unordered_map<std::string_view, std::size_t> index;
  for (std::size_t i = 0; i < task.source_lexicon.size(); ++i) index.emplace(task.source_lexicon[i], i);
  TokenSeq out;
  out.reserve(source.size());
  for (auto it = source.rbegin(); it != source.rend(); ++it) {
    auto found = index.find(*it);
    if (found == index.end()) throw ValidationError("synthetic_translate: unknown word " + *it);
    out.push_back(task.target_lexicon[found->second]);
  }
  return out;
}

}  // namespace blex
