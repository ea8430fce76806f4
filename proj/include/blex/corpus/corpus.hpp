#pragma once

#include "blex/tags.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace blex {

using TokenSeq = std::vector<std::string>;

struct SentencePair {
  TokenSeq source;
  TokenSeq target;

  bool operator==(const SentencePair&) const = default;
  auto operator<=>(const SentencePair&) const = default;
};

/// A QE training record: source, machine translation, post-edit and the
/// labels derived from aligning the translation to the post-edit.
struct TripletExample {
  TokenSeq source;
  TokenSeq mt;
  TokenSeq post_edit;
  double hter = 0.0;
  TagSeq word_tags;  // |mt|
  TagSeq gap_tags;   // |mt| + 1
};

inline constexpr std::size_t kMaxSentenceLength = 70;

/// Whitespace tokenisation; runs of spaces/tabs collapse.
TokenSeq tokenize(std::string_view line);
std::string detokenize(const TokenSeq& tokens);

/// Keeps pairs with both sides non-empty, at most 70 tokens, and a length
/// ratio within [1/3, 3].
bool filter_pair(const TokenSeq& source, const TokenSeq& target);
std::vector<SentencePair> filter_corpus(const std::vector<SentencePair>& pairs);

/// Parallel corpus plus `copies` repetitions of the QE (source, post-edit)
/// pairs, shuffled with `seed`.
std::vector<SentencePair> combine_training_corpus(const std::vector<SentencePair>& parallel,
                                                  const std::vector<SentencePair>& qe_pairs,
                                                  std::uint64_t seed, int copies = 10);

std::vector<SentencePair> source_postedit_pairs(const std::vector<TripletExample>& triplets);

// Plain-text corpus files: UTF-8, one sentence per line, space-separated tokens.
std::vector<TokenSeq> read_token_file(const std::filesystem::path& path);
void write_token_file(const std::filesystem::path& path, const std::vector<TokenSeq>& sentences);
std::vector<double> read_hter_file(const std::filesystem::path& path);
void write_hter_file(const std::filesystem::path& path, const std::vector<double>& values);
std::vector<TagSeq> read_tags_file(const std::filesystem::path& path);
void write_tags_file(const std::filesystem::path& path, const std::vector<TagSeq>& tags);

std::vector<SentencePair> zip_pairs(const std::vector<TokenSeq>& source,
                                    const std::vector<TokenSeq>& target);

}  // namespace blex
