#include "blex/error.hpp"
#include "blex/ter/labeler.hpp"

#include <gtest/gtest.h>

#include <functional>
#include <map>
#include <string>
#include <vector>

using namespace blex;
using namespace blex::ter;

namespace {

using Seq = std::vector<int>;

// Minimal number of unit edits by exhaustive search over edit paths:
// from (i, j) try every operation and take the cheapest completion.
int brute_force_cost(const Seq& m, const Seq& t) {
  std::function<int(std::size_t, std::size_t)> go = [&](std::size_t i, std::size_t j) -> int {
    if (i == m.size()) return static_cast<int>(t.size() - j);
    if (j == t.size()) return static_cast<int>(m.size() - i);
    int best = go(i + 1, j) + 1;             // delete m_i
    best = std::min(best, go(i, j + 1) + 1);  // insert t_j
    best = std::min(best, go(i + 1, j + 1) + (m[i] == t[j] ? 0 : 1));
    return best;
  };
  return go(0, 0);
}

void enumerate(int max_len, int alphabet, const std::function<void(const Seq&)>& visit) {
  Seq s;
  std::function<void()> rec = [&] {
    visit(s);
    if (static_cast<int>(s.size()) == max_len) return;
    for (int a = 0; a < alphabet; ++a) {
      s.push_back(a);
      rec();
      s.pop_back();
    }
  };
  rec();
}

std::vector<std::string> words(std::initializer_list<const char*> w) { return {w.begin(), w.end()}; }

TagSeq tags(std::initializer_list<Tag> t) { return t; }

constexpr Tag OK = Tag::Ok;
constexpr Tag BAD = Tag::Bad;

}  // namespace

TEST(Align, IdenticalSequencesMatch) {
  auto s = align(words({"a", "b", "c"}), words({"a", "b", "c"}));
  ASSERT_EQ(s.edits.size(), 3u);
  for (const auto& e : s.edits) EXPECT_EQ(e.op, EditOp::Match);
  EXPECT_EQ(s.cost(), 0u);
}

TEST(Align, SingleSubstitution) {
  auto s = align(words({"a", "x", "c"}), words({"a", "b", "c"}));
  ASSERT_EQ(s.edits.size(), 3u);
  EXPECT_EQ(s.edits[0].op, EditOp::Match);
  EXPECT_EQ(s.edits[1], (Edit{EditOp::Substitute, 1, 1}));
  EXPECT_EQ(s.edits[2].op, EditOp::Match);
  EXPECT_EQ(s.cost(), 1u);
}

TEST(Align, EmptySequences) {
  std::vector<std::string> empty;
  EXPECT_TRUE(align(empty, empty).edits.empty());
  auto ins = align(empty, words({"a"}));
  ASSERT_EQ(ins.edits.size(), 1u);
  EXPECT_EQ(ins.edits[0].op, EditOp::Insert);
}

TEST(Align, TieBreakPrefersSubstitutionThenDeletion) {
  // [x, a] -> [a, b]: two SUBs and DEL+MATCH+INS both cost 2; SUB path wins.
  auto s = align(Seq{9, 1}, Seq{1, 2});
  ASSERT_EQ(s.edits.size(), 2u);
  EXPECT_EQ(s.edits[0].op, EditOp::Substitute);
  EXPECT_EQ(s.edits[1].op, EditOp::Substitute);
  EXPECT_EQ(align(Seq{9, 1}, Seq{1, 2}), s);
}

TEST(Align, CostEqualsExhaustiveSearch) {
  std::vector<Seq> all;
  enumerate(4, 3, [&](const Seq& s) { all.push_back(s); });
  for (const auto& m : all) {
    for (const auto& t : all) {
      auto script = align(m, t);
      ASSERT_EQ(static_cast<int>(script.cost()), brute_force_cost(m, t));
      EXPECT_EQ(script.mt_length(), m.size());
      EXPECT_EQ(script.ref_length(), t.size());
    }
  }
}

TEST(Hter, Examples) {
  EXPECT_EQ(hter(align(Seq{1, 2}, Seq{1, 2}), 2), 0.0);
  EXPECT_NEAR(hter(align(Seq{1, 9, 3}, Seq{1, 2, 3}), 3), 1.0 / 3.0, 1e-15);
  // Five edits against three reference tokens clips to 1.
  auto five = align(Seq{7, 8, 9, 7, 8}, Seq{1, 2, 3});
  EXPECT_EQ(five.cost(), 5u);
  EXPECT_EQ(hter(five, 3), 1.0);
}

TEST(Hter, EmptyReference) {
  EXPECT_EQ(hter(align(Seq{1}, Seq{}), 0), 1.0);
  EXPECT_EQ(hter(align(Seq{}, Seq{}), 0), 0.0);
  EXPECT_THROW(hter(align(Seq{1}, Seq{1}), 2), ContractError);
}

TEST(WordTags, Examples) {
  EXPECT_EQ(word_tags(align(Seq{1, 2}, Seq{1, 2}), 2), tags({OK, OK}));
  EXPECT_EQ(word_tags(align(words({"a", "x", "c"}), words({"a", "b", "c"})), 3), tags({OK, BAD, OK}));
  EXPECT_EQ(word_tags(align(words({"a", "b", "c", "d"}), words({"a", "b", "c"})), 4),
            tags({OK, OK, OK, BAD}));
  EXPECT_THROW(word_tags(align(Seq{1}, Seq{1}), 2), ContractError);
}

TEST(GapTags, Examples) {
  EXPECT_EQ(gap_tags(align(Seq{1, 2}, Seq{1, 2}), 2), tags({OK, OK, OK}));
  EXPECT_EQ(gap_tags(align(words({"a", "c"}), words({"a", "b", "c"})), 2), tags({OK, BAD, OK}));
  EXPECT_EQ(gap_tags(align(std::vector<std::string>{}, words({"a"})), 0), tags({BAD}));
  // Two insertions at one boundary still give one BAD gap.
  EXPECT_EQ(gap_tags(align(Seq{1}, Seq{1, 2, 3}), 1), tags({OK, BAD}));
}

TEST(Label, Composition) {
  auto same = label(words({"a", "b"}), words({"a", "b"}));
  EXPECT_EQ(same.hter, 0.0);
  EXPECT_EQ(same.word_tags, tags({OK, OK}));
  EXPECT_EQ(same.gap_tags, tags({OK, OK, OK}));

  auto sub = label(words({"a", "x", "c"}), words({"a", "b", "c"}));
  EXPECT_NEAR(sub.hter, 0.3333, 1e-4);
  EXPECT_EQ(sub.word_tags, tags({OK, BAD, OK}));
  EXPECT_EQ(sub.gap_tags, tags({OK, OK, OK, OK}));

  auto gap = label(words({"a", "c"}), words({"a", "b", "c"}));
  EXPECT_NEAR(gap.hter, 0.3333, 1e-4);
  EXPECT_EQ(gap.word_tags, tags({OK, OK}));
  EXPECT_EQ(gap.gap_tags, tags({OK, BAD, OK}));
}

TEST(Label, Invariants) {
  std::vector<Seq> all;
  enumerate(4, 3, [&](const Seq& s) { all.push_back(s); });
  for (const auto& m : all) {
    for (const auto& t : all) {
      const auto script = align(m, t);
      const auto l = label(m, t);
      ASSERT_EQ(l.word_tags.size(), m.size());
      ASSERT_EQ(l.gap_tags.size(), m.size() + 1);
      EXPECT_GE(l.hter, 0.0);
      EXPECT_LE(l.hter, 1.0);
      EXPECT_EQ(l.hter == 0.0, m == t);
      EXPECT_EQ(count_bad(l.word_tags),
                script.count(EditOp::Substitute) + script.count(EditOp::Delete));
      EXPECT_LE(count_bad(l.word_tags) + count_bad(l.gap_tags), script.cost());
    }
  }
}
