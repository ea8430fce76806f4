#include "blex/corpus/bpe.hpp"

#include "blex/error.hpp"

#include <fstream>
#include <limits>

namespace blex {
namespace {

std::size_t utf8_length(unsigned char lead) {
  if (lead < 0x80) return 1;
  if ((lead >> 5) == 0x6) return 2;
  if ((lead >> 4) == 0xE) return 3;
  if ((lead >> 3) == 0x1E) return 4;
  return 1;  // stray continuation byte: pass through as its own symbol
}

bool ends_word(const std::string& unit) {
  const auto marker = BpeMerges::kEndOfWord;
  return unit.size() >= marker.size() &&
         unit.compare(unit.size() - marker.size(), marker.size(), marker) == 0;
}

// Replaces every non-overlapping left-to-right occurrence of (a, b) by a+b.
void merge_pair(TokenSeq& symbols, const std::string& a, const std::string& b) {
  TokenSeq out;
  out.reserve(symbols.size());
  for (std::size_t i = 0; i < symbols.size(); ++i) {
    if (i + 1 < symbols.size() && symbols[i] == a && symbols[i + 1] == b) {
      out.push_back(a + b);
      ++i;
    } else {
      out.push_back(std::move(symbols[i]));
    }
  }
  symbols = std::move(out);
}

}  // namespace

TokenSeq initial_symbols(const std::string& word) {
  TokenSeq symbols;
  for (std::size_t i = 0; i < word.size();) {
    const std::size_t n = std::min(utf8_length(static_cast<unsigned char>(word[i])), word.size() - i);
    symbols.push_back(word.substr(i, n));
    i += n;
  }
  if (!symbols.empty()) symbols.back() += BpeMerges::kEndOfWord;
  return symbols;
}

BpeMerges::BpeMerges(MergeRules rules)
    : rules_(std::move(rules)) {
  for (std::size_t i = 0; i < rules_.size(); ++i) rank_.try_emplace(rules_[i], static_cast<int>(i));
}

TokenSeq BpeMerges::segment_word(const std::string& word) const {
  TokenSeq symbols = initial_symbols(word);
  while (symbols.size() > 1) {
    int best = std::numeric_limits<int>::max();
    std::size_t best_at = 0;
    for (std::size_t i = 0; i + 1 < symbols.size(); ++i) {
      auto it = rank_.find({symbols[i], symbols[i + 1]});
      if (it != rank_.end() && it->second < best) {
        best = it->second;
        best_at = i;
      }
    }
    if (best == std::numeric_limits<int>::max()) break;
    const auto pair = std::make_pair(symbols[best_at], symbols[best_at + 1]);
    merge_pair(symbols, pair.first, pair.second);
  }
  return symbols;
}

void BpeMerges::save(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  for (const auto& [a, b] : rules_) out << a << ' ' << b << '\n';
}

BpeMerges BpeMerges::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  MergeRules rules;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto parts = tokenize(line);
    if (parts.size() != 2) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": expected 'left right'");
    }
    rules.emplace_back(parts[0], parts[1]);
  }
  return BpeMerges(std::move(rules));
}

BpeMerges learn_bpe(const std::vector<TokenSeq>& corpus, int num_merges) {
  if (num_merges < 0) throw ValidationError("learn_bpe: num_merges must be >= 0");
  std::map<std::string, std::size_t> word_counts;
  for (const auto& sentence : corpus)
    for (const auto& w : sentence) ++word_counts[w];

  std::vector<std::pair<TokenSeq, std::size_t>> words;
  words.reserve(word_counts.size());
  for (const auto& [w, n] : word_counts) words.emplace_back(initial_symbols(w), n);

  MergeRules rules;
  for (int round = 0; round < num_merges; ++round) {
    std::map<std::pair<std::string, std::string>, std::size_t> pairs;
    for (const auto& [symbols, n] : words)
      for (std::size_t i = 0; i + 1 < symbols.size(); ++i) pairs[{symbols[i], symbols[i + 1]}] += n;
    if (pairs.empty()) break;
    // std::map iterates in byte order, so the first maximum is the tie winner.
    auto best = pairs.begin();
    for (auto it = pairs.begin(); it != pairs.end(); ++it)
      if (it->second > best->second) best = it;
    const auto rule = best->first;
    for (auto& [symbols, n] : words) merge_pair(symbols, rule.first, rule.second);
    rules.push_back(rule);
  }
  return BpeMerges(std::move(rules));
}

BpeEncoding apply_bpe(const TokenSeq& words, const BpeMerges& merges) {
  BpeEncoding enc;
  std::vector<int> spans;
  spans.reserve(words.size());
  for (const auto& w : words) {
    TokenSeq units = merges.segment_word(w);
    if (units.empty()) throw ValidationError("apply_bpe: empty word");
    spans.push_back(static_cast<int>(units.size()));
    for (auto& u : units) enc.units.push_back(std::move(u));
  }
  enc.segmentation = SegmentationMatrix::from_span_lengths(spans);
  return enc;
}

TokenSeq decode_bpe(const TokenSeq& units) {
  TokenSeq words;
  std::string current;
  for (const auto& u : units) {
    if (ends_word(u)) {
      current.append(u, 0, u.size() - BpeMerges::kEndOfWord.size());
      words.push_back(std::move(current));
      current.clear();
    } else {
      current += u;
    }
  }
  if (!current.empty()) words.push_back(std::move(current));
  return words;
}

SegmentationMatrix segmentation_of_units(const TokenSeq& units) {
  std::vector<int> spans;
  int open = 0;
  for (const auto& u : units) {
    ++open;
    if (ends_word(u)) {
      spans.push_back(open);
      open = 0;
    }
  }
  if (open > 0) spans.push_back(open);
  return SegmentationMatrix::from_span_lengths(spans);
}

}  // namespace blex
