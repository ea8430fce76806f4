#pragma once

#include "blex/corpus/corpus.hpp"

#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace blex {

/// Token <-> id map with five reserved ids. Unknown tokens encode to UNK.
class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kBos = 2;
  static constexpr int kEos = 3;
  static constexpr int kBlank = 4;
  static constexpr int kReserved = 5;

  Vocab();

  /// Ids assigned by descending frequency, ties in byte order.
  static Vocab build(const std::vector<TokenSeq>& sentences, std::size_t max_size = 0);
  static Vocab from_tokens(const std::vector<std::string>& tokens);

  int add(const std::string& token);
  int id(const std::string& token) const;
  bool contains(const std::string& token) const { return index_.contains(token); }
  const std::string& token(int id) const;
  int size() const { return static_cast<int>(tokens_.size()); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  std::vector<int> encode(const TokenSeq& sentence) const;
  TokenSeq decode(std::span<const int> ids) const;

  bool operator==(const Vocab& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

}  // namespace blex
