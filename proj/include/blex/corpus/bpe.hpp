#pragma once

#include "blex/corpus/corpus.hpp"
#include "blex/corpus/segmentation.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace blex {

using MergeRules = std::vector<std::pair<std::string, std::string>>;

/// Ordered byte-pair merge rules. A word is first split into UTF-8
/// characters with the end-of-word marker glued to the last one
/// ("low" -> l o w</w>), then rules are applied by rank.
class BpeMerges {
 public:
  static constexpr std::string_view kEndOfWord = "</w>";

  BpeMerges() = default;
  explicit BpeMerges(MergeRules rules);

  const MergeRules& rules() const { return rules_; }
  std::size_t size() const { return rules_.size(); }

  TokenSeq segment_word(const std::string& word) const;

  // One rule per line: "left right".
  void save(const std::filesystem::path& path) const;
  static BpeMerges load(const std::filesystem::path& path);

  bool operator==(const BpeMerges& other) const { return rules_ == other.rules_; }

 private:
  MergeRules rules_;
  std::map<std::pair<std::string, std::string>, int> rank_;
};

/// Splits a word into UTF-8 code points; the last carries the end marker.
TokenSeq initial_symbols(const std::string& word);

/// Greedy merge learning: each round merges the most frequent adjacent
/// symbol pair (ties to the byte-wise smallest pair). Stops early when no
/// pair remains.
BpeMerges learn_bpe(const std::vector<TokenSeq>& corpus, int num_merges);

struct BpeEncoding {
  TokenSeq units;
  SegmentationMatrix segmentation;
};

BpeEncoding apply_bpe(const TokenSeq& words, const BpeMerges& merges);

/// Rebuilds the word sequence from units using the end-of-word markers.
TokenSeq decode_bpe(const TokenSeq& units);

/// Segmentation implied by the end-of-word markers of a unit sequence.
SegmentationMatrix segmentation_of_units(const TokenSeq& units);

}  // namespace blex
