#pragma once

#include "blex/corpus/corpus.hpp"

#include <cstdint>

namespace blex {

/// Desk-scale stand-in for a WMT QE task. Sources are uniform draws from a
/// source lexicon; the true translation maps every word through a fixed
/// bijection and then reverses the sentence; the MT output corrupts the
/// translation with independent substitutions, deletions and insertions.
struct SyntheticConfig {
  int vocab_size = 64;
  int parallel_pairs = 2000;
  int train_triplets = 500;
  int dev_triplets = 200;
  int test_triplets = 200;
  int min_length = 4;
  int max_length = 12;
  double p_sub = 0.15;
  double p_del = 0.05;
  double p_ins = 0.05;
  std::uint64_t seed = 1;
};

struct SyntheticTask {
  TokenSeq source_lexicon;
  TokenSeq target_lexicon;
  std::vector<SentencePair> parallel;
  std::vector<TripletExample> train;
  std::vector<TripletExample> dev;
  std::vector<TripletExample> test;
};

/// Throws ValidationError unless vocab_size >= 8, lengths are ordered and
/// positive, every rate is in [0, 1], and p_del < 1.
void validate(const SyntheticConfig& config);

SyntheticTask generate_synthetic_task(const SyntheticConfig& config);

/// Ground-truth translation of a source sentence under the task's mapping.
TokenSeq synthetic_translate(const SyntheticTask& task, const TokenSeq& source);

}  // namespace blex
