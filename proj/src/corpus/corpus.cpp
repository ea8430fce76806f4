#include "blex/corpus/corpus.hpp"

#include "blex/error.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <random>

namespace blex {
namespace {

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  return in;
}

std::ofstream open_output(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  return out;
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  auto in = open_input(path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  return lines;
}

}  // namespace

TokenSeq tokenize(std::string_view line) {
  TokenSeq tokens;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t') ++j;
    if (j > i) tokens.emplace_back(line.substr(i, j - i));
    i = j;
  }
  return tokens;
}

std::string detokenize(const TokenSeq& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

bool filter_pair(const TokenSeq& source, const TokenSeq& target) {
  if (source.empty() || target.empty()) {
    spdlog::warn("filter_pair: dropping pair with an empty side");
    return false;
  }
  if (source.size() > kMaxSentenceLength || target.size() > kMaxSentenceLength) return false;
  // 1/3 <= |s|/|t| <= 3 without division.
  return 3 * source.size() >= target.size() && source.size() <= 3 * target.size();
}

std::vector<SentencePair> filter_corpus(const std::vector<SentencePair>& pairs) {
  std::vector<SentencePair> kept;
  kept.reserve(pairs.size());
  for (const auto& p : pairs) {
    if (filter_pair(p.source, p.target)) kept.push_back(p);
  }
  return kept;
}

std::vector<SentencePair> combine_training_corpus(const std::vector<SentencePair>& parallel,
                                                  const std::vector<SentencePair>& qe_pairs,
                                                  std::uint64_t seed, int copies) {
  std::vector<SentencePair> combined;
  combined.reserve(parallel.size() + static_cast<std::size_t>(copies) * qe_pairs.size());
  combined.insert(combined.end(), parallel.begin(), parallel.end());
  for (int c = 0; c < copies; ++c) combined.insert(combined.end(), qe_pairs.begin(), qe_pairs.end());
  std::mt19937_64 rng(seed);
  std::shuffle(combined.begin(), combined.end(), rng);
  return combined;
}

std::vector<SentencePair> source_postedit_pairs(const std::vector<TripletExample>& triplets) {
  std::vector<SentencePair> pairs;
  pairs.reserve(triplets.size());
  for (const auto& t : triplets) pairs.push_back({t.source, t.post_edit});
  return pairs;
}

std::vector<TokenSeq> read_token_file(const std::filesystem::path& path) {
  std::vector<TokenSeq> out;
  for (const auto& line : read_lines(path)) out.push_back(tokenize(line));
  return out;
}

void write_token_file(const std::filesystem::path& path, const std::vector<TokenSeq>& sentences) {
  auto out = open_output(path);
  for (const auto& s : sentences) out << detokenize(s) << '\n';
}

std::vector<double> read_hter_file(const std::filesystem::path& path) {
  std::vector<double> values;
  std::size_t lineno = 0;
  for (const auto& line : read_lines(path)) {
    ++lineno;
    const auto tokens = tokenize(line);
    if (tokens.size() != 1) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": expected one number");
    }
    double v = 0.0;
    const auto& t = tokens.front();
    auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc() || ptr != t.data() + t.size()) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": bad number '" + t + "'");
    }
    values.push_back(v);
  }
  return values;
}

void write_hter_file(const std::filesystem::path& path, const std::vector<double>& values) {
  auto out = open_output(path);
  char buf[64];
  for (double v : values) {
    std::snprintf(buf, sizeof buf, "%.6f\n", v);
    out << buf;
  }
}

std::vector<TagSeq> read_tags_file(const std::filesystem::path& path) {
  std::vector<TagSeq> tags;
  for (const auto& line : read_lines(path)) {
    TagSeq seq;
    for (const auto& tok : tokenize(line)) seq.push_back(parse_tag(tok));
    tags.push_back(std::move(seq));
  }
  return tags;
}

void write_tags_file(const std::filesystem::path& path, const std::vector<TagSeq>& tags) {
  auto out = open_output(path);
  for (const auto& seq : tags) {
    for (std::size_t i = 0; i < seq.size(); ++i) {
      if (i) out << ' ';
      out << to_string(seq[i]);
    }
    out << '\n';
  }
}

std::vector<SentencePair> zip_pairs(const std::vector<TokenSeq>& source,
                                    const std::vector<TokenSeq>& target) {
  if (source.size() != target.size()) {
    throw ValidationError("corpus sides differ in length: " + std::to_string(source.size()) +
                          " vs " + std::to_string(target.size()) + " lines");
  }
  std::vector<SentencePair> pairs;
  pairs.reserve(source.size());
  for (std::size_t i = 0; i < source.size(); ++i) pairs.push_back({source[i], target[i]});
  return pairs;
}

}  // namespace blex
