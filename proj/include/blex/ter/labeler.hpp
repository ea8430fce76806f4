#pragma once

#include "blex/tags.hpp"

#include <algorithm>
#include <cstddef>
#include <span>
#include <vector>

namespace blex::ter {

enum class EditOp : std::uint8_t { Match, Substitute, Delete, Insert };

// Positions are 0-based; mt_pos is -1 for Insert and ref_pos is -1 for Delete.
struct Edit {
  EditOp op;
  int mt_pos;
  int ref_pos;

  bool operator==(const Edit&) const = default;
};

/// Monotone edit path turning an MT token sequence into its reference.
/// Shifts are never produced; a moved word costs a deletion plus an insertion.
struct EditScript {
  std::vector<Edit> edits;

  std::size_t count(EditOp op) const {
    return static_cast<std::size_t>(
        std::count_if(edits.begin(), edits.end(), [op](const Edit& e) { return e.op == op; }));
  }
  std::size_t cost() const { return edits.size() - count(EditOp::Match); }
  std::size_t mt_length() const { return edits.size() - count(EditOp::Insert); }
  std::size_t ref_length() const { return edits.size() - count(EditOp::Delete); }

  bool operator==(const EditScript&) const = default;
};

struct QeLabels {
  double hter = 0.0;
  TagSeq word_tags;  // one per MT token
  TagSeq gap_tags;   // one per MT boundary, including both ends
};

/// Unit-cost Levenshtein alignment. On equal cost the backtrace prefers
/// MATCH/SUB, then DEL, then INS.
template <typename Token>
EditScript align(std::span<const Token> mt, std::span<const Token> ref) {
  const std::size_t n = mt.size();
  const std::size_t m = ref.size();
  const std::size_t width = m + 1;
  std::vector<int> dist((n + 1) * width);
  auto at = [&](std::size_t i, std::size_t j) -> int& { return dist[i * width + j]; };
  for (std::size_t i = 0; i <= n; ++i) at(i, 0) = static_cast<int>(i);
  for (std::size_t j = 0; j <= m; ++j) at(0, j) = static_cast<int>(j);
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      const int diag = at(i - 1, j - 1) + (mt[i - 1] == ref[j - 1] ? 0 : 1);
      at(i, j) = std::min({diag, at(i - 1, j) + 1, at(i, j - 1) + 1});
    }
  }

  EditScript script;
  script.edits.reserve(n + m);
  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0) {
      const bool same = mt[i - 1] == ref[j - 1];
      if (at(i, j) == at(i - 1, j - 1) + (same ? 0 : 1)) {
        script.edits.push_back({same ? EditOp::Match : EditOp::Substitute,
                                static_cast<int>(i - 1), static_cast<int>(j - 1)});
        --i;
        --j;
        continue;
      }
    }
    if (i > 0 && at(i, j) == at(i - 1, j) + 1) {
      script.edits.push_back({EditOp::Delete, static_cast<int>(i - 1), -1});
      --i;
      continue;
    }
    script.edits.push_back({EditOp::Insert, -1, static_cast<int>(j - 1)});
    --j;
  }
  std::reverse(script.edits.begin(), script.edits.end());
  return script;
}

template <typename Container>
EditScript align(const Container& mt, const Container& ref) {
  using Token = typename Container::value_type;
  return align<Token>(std::span<const Token>(mt), std::span<const Token>(ref));
}

/// Edit count over reference length, clipped to [0, 1]. An empty reference
/// scores 1 against a non-empty MT and 0 against an empty one.
double hter(const EditScript& script, std::size_t ref_length);

/// OK exactly for MT tokens that take part in a MATCH.
TagSeq word_tags(const EditScript& script, std::size_t mt_length);

/// Gap k sits before MT token k (gap 0 is the sentence start, gap mt_length
/// the end); it is BAD when at least one insertion happens there.
TagSeq gap_tags(const EditScript& script, std::size_t mt_length);

template <typename Container>
QeLabels label(const Container& mt, const Container& ref) {
  const EditScript script = align(mt, ref);
  return {hter(script, ref.size()), word_tags(script, mt.size()), gap_tags(script, mt.size())};
}

}  // namespace blex::ter
