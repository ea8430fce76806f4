#include "blex/corpus/vocab.hpp"

#include "blex/error.hpp"

#include <algorithm>
#include <map>

namespace blex {

Vocab::Vocab() {
  for (const char* t : {"<pad>", "<unk>", "<s>", "</s>", "<blank>"}) add(t);
}

Vocab Vocab::build(const std::vector<TokenSeq>& sentences, std::size_t max_size) {
  std::map<std::string, std::size_t> counts;
  for (const auto& s : sentences)
    for (const auto& tok : s) ++counts[tok];
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  Vocab v;
  for (const auto& [tok, n] : ranked) {
    if (max_size != 0 && static_cast<std::size_t>(v.size()) >= max_size) break;
    v.add(tok);
  }
  return v;
}

Vocab Vocab::from_tokens(const std::vector<std::string>& tokens) {
  Vocab v;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i < static_cast<std::size_t>(kReserved)) {
      if (tokens[i] != v.tokens_[i]) {
        throw FormatError("vocabulary slot " + std::to_string(i) + " must hold reserved token " +
                          v.tokens_[i]);
      }
      continue;
    }
    if (v.contains(tokens[i])) throw FormatError("duplicate vocabulary entry " + tokens[i]);
    v.add(tokens[i]);
  }
  return v;
}

int Vocab::add(const std::string& token) {
  auto [it, inserted] = index_.try_emplace(token, static_cast<int>(tokens_.size()));
  if (inserted) tokens_.push_back(token);
  return it->second;
}

int Vocab::id(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocab::token(int id) const {
  if (id < 0 || id >= size()) throw IndexError("vocabulary id " + std::to_string(id) + " out of range");
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocab::encode(const TokenSeq& sentence) const {
  std::vector<int> ids;
  ids.reserve(sentence.size());
  for (const auto& tok : sentence) ids.push_back(id(tok));
  return ids;
}

TokenSeq Vocab::decode(std::span<const int> ids) const {
  TokenSeq out;
  out.reserve(ids.size());
  for (int i : ids) out.push_back(token(i));
  return out;
}

}  // namespace blex
