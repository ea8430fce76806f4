#include "blex/corpus/bpe.hpp"
#include "blex/corpus/corpus.hpp"
#include "blex/corpus/segmentation.hpp"
#include "blex/corpus/synthetic.hpp"
#include "blex/corpus/vocab.hpp"
#include "blex/error.hpp"
#include "blex/numerics/gradcheck.hpp"
#include "blex/numerics/optim.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <map>
#include <random>

using namespace blex;

namespace {

TokenSeq repeat(const std::string& w, std::size_t n) { return TokenSeq(n, w); }

std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("blex_corpus_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

// Per-word loop: accumulate (1/n) * F_j over the word's units.
Matrix pool_by_loop(const Matrix& units, const std::vector<int>& spans) {
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(spans.size()), units.cols());
  Eigen::Index col = 0;
  for (std::size_t w = 0; w < spans.size(); ++w) {
    const double weight = 1.0 / spans[w];
    for (int k = 0; k < spans[w]; ++k, ++col) out.row(static_cast<Eigen::Index>(w)) += weight * units.row(col);
  }
  return out;
}

}  // namespace

TEST(FilterPair, Examples) {
  EXPECT_TRUE(filter_pair(repeat("a", 10), repeat("b", 10)));
  EXPECT_FALSE(filter_pair(repeat("a", 71), repeat("b", 10)));
  EXPECT_FALSE(filter_pair(repeat("a", 10), repeat("b", 31)));
  EXPECT_TRUE(filter_pair(repeat("a", 10), repeat("b", 30)));
  EXPECT_FALSE(filter_pair({}, repeat("b", 3)));
}

TEST(FilterPair, IdempotentAndOrderIndependent) {
  std::vector<SentencePair> pairs;
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> len(0, 80);
  for (int i = 0; i < 200; ++i) pairs.push_back({repeat("s", len(rng)), repeat("t", len(rng))});
  auto once = filter_corpus(pairs);
  EXPECT_EQ(filter_corpus(once), once);
  auto shuffled = pairs;
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  auto a = filter_corpus(shuffled);
  std::sort(a.begin(), a.end());
  auto b = once;
  std::sort(b.begin(), b.end());
  EXPECT_EQ(a, b);
}

TEST(CombineTrainingCorpus, CountsAndMultiplicity) {
  std::vector<SentencePair> parallel, qe;
  for (int i = 0; i < 100; ++i) parallel.push_back({{"p" + std::to_string(i)}, {"q"}});
  for (int i = 0; i < 7; ++i) qe.push_back({{"s" + std::to_string(i % 5)}, {"t"}});
  auto combined = combine_training_corpus(parallel, qe, 9);
  EXPECT_EQ(combined.size(), 170u);

  std::map<SentencePair, int> in_qe, in_out;
  for (const auto& p : qe) ++in_qe[p];
  for (const auto& p : combined) ++in_out[p];
  for (const auto& [p, n] : in_qe) EXPECT_EQ(in_out[p], 10 * n);

  EXPECT_EQ(combine_training_corpus(parallel, {}, 9).size(), 100u);
  EXPECT_EQ(combine_training_corpus(parallel, qe, 9), combined);
}

TEST(Vocab, ReservedIdsAndRoundTrip) {
  Vocab v = Vocab::build({{"b", "a", "b"}, {"c"}});
  EXPECT_EQ(v.token(Vocab::kPad), "<pad>");
  EXPECT_EQ(v.token(Vocab::kBlank), "<blank>");
  EXPECT_EQ(v.id("b"), Vocab::kReserved);  // most frequent first
  EXPECT_EQ(v.id("zzz"), Vocab::kUnk);
  TokenSeq s{"a", "c", "b"};
  EXPECT_EQ(v.decode(v.encode(s)), s);
  EXPECT_EQ(Vocab::from_tokens(v.tokens()), v);
}

TEST(Tokenize, RoundTrip) {
  EXPECT_EQ(tokenize("  a  b\tc "), (TokenSeq{"a", "b", "c"}));
  TokenSeq s{"das", "ist", "gut", "."};
  EXPECT_EQ(tokenize(detokenize(s)), s);
}

TEST(LearnBpe, NoMergesSplitsToCharacters) {
  auto merges = learn_bpe({{"low", "lower"}}, 0);
  EXPECT_EQ(merges.size(), 0u);
  EXPECT_EQ(merges.segment_word("low"), (TokenSeq{"l", "o", "w</w>"}));
}

TEST(LearnBpe, MostFrequentPairFirst) {
  // Pair counts over 5 x "aaab": (a,a) 10, (a,b</w>) 5.
  auto merges = learn_bpe({repeat("aaab", 5)}, 1);
  ASSERT_EQ(merges.size(), 1u);
  EXPECT_EQ(merges.rules()[0], (std::pair<std::string, std::string>{"a", "a"}));
  EXPECT_EQ(learn_bpe({repeat("aaab", 5)}, 1), merges);
}

TEST(LearnBpe, StopsWhenNothingLeftToMerge) {
  auto merges = learn_bpe({{"ab"}}, 10);
  EXPECT_EQ(merges.size(), 1u);
  EXPECT_EQ(merges.segment_word("ab"), (TokenSeq{"ab</w>"}));
}

TEST(ApplyBpe, SegmentationRows) {
  BpeMerges merges(MergeRules{{"a", "b</w>"}, {"c", "d"}});
  auto whole = apply_bpe({"ab"}, merges);
  EXPECT_EQ(whole.units, (TokenSeq{"ab</w>"}));
  EXPECT_EQ(Matrix(whole.segmentation.matrix()), Matrix::Ones(1, 1));

  auto split = apply_bpe({"cde"}, merges);
  EXPECT_EQ(split.units, (TokenSeq{"cd", "e</w>"}));
  Matrix row = split.segmentation.matrix();
  EXPECT_EQ(row(0, 0), 0.5);
  EXPECT_EQ(row(0, 1), 0.5);
}

TEST(ApplyBpe, RowsSumToOneAndColumnsPartition) {
  BpeMerges merges(MergeRules{{"x", "y"}});
  auto enc = apply_bpe({"xy", "pq", "z"}, merges);    // x y</w> | p q</w> | z</w>
  auto enc5 = apply_bpe({"xyq", "pq", "z"}, merges);  // xy q</w> | p q</w> | z</w>
  for (const auto* e : {&enc, &enc5}) {
    Matrix s = e->segmentation.matrix();
    EXPECT_EQ(s.rows(), 3);
    for (Eigen::Index r = 0; r < s.rows(); ++r) EXPECT_DOUBLE_EQ(s.row(r).sum(), 1.0);
    for (Eigen::Index c = 0; c < s.cols(); ++c) EXPECT_EQ((s.col(c).array() != 0.0).count(), 1);
  }
  EXPECT_EQ(enc5.units.size(), 5u);
}

TEST(Bpe, DecodeEncodeRoundTrip) {
  std::vector<TokenSeq> corpus{{"lower", "newest", "widest"}, {"low", "new", "größer"}};
  auto merges = learn_bpe(corpus, 12);
  for (const auto& sentence : corpus) {
    auto enc = apply_bpe(sentence, merges);
    EXPECT_EQ(decode_bpe(enc.units), sentence);
    auto seg = segmentation_of_units(enc.units);
    EXPECT_EQ(seg.span_lengths(), enc.segmentation.span_lengths());
  }
  // Multi-byte characters stay whole.
  EXPECT_EQ(initial_symbols("ßa"), (TokenSeq{"ß", "a</w>"}));
}

TEST(Bpe, MergesFileRoundTrip) {
  auto dir = temp_dir("merges");
  auto merges = learn_bpe({{"hello", "help", "hell"}}, 6);
  merges.save(dir / "bpe.codes");
  EXPECT_EQ(BpeMerges::load(dir / "bpe.codes"), merges);
}

TEST(PoolFeatures, IdentityAndMean) {
  std::mt19937_64 rng(1);
  Matrix f = gaussian(4, 3, 1.0, rng);
  EXPECT_EQ(pool_features(f, SegmentationMatrix::identity(4)), f);

  Matrix two(2, 2);
  two << 2, 4, 6, 8;
  std::vector<int> spans{2};
  Matrix pooled = pool_features(two, SegmentationMatrix::from_span_lengths(spans));
  EXPECT_EQ(pooled(0, 0), 4.0);
  EXPECT_EQ(pooled(0, 1), 6.0);
}

TEST(PoolFeatures, MatchesPerWordLoopExactly) {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> words(1, 8), span(1, 4);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<int> spans(static_cast<std::size_t>(words(rng)));
    for (auto& s : spans) s = span(rng);
    auto seg = SegmentationMatrix::from_span_lengths(spans);
    Matrix f = gaussian(seg.units(), 5, 1.0, rng);
    EXPECT_EQ((pool_features(f, seg) - pool_by_loop(f, spans)).cwiseAbs().maxCoeff(), 0.0);
  }
}

TEST(PoolFeatures, DifferentiableAndShapeChecked) {
  std::mt19937_64 rng(2);
  std::vector<int> spans{1, 3, 2};
  auto seg = SegmentationMatrix::from_span_lengths(spans);
  Tensor f = Tensor::parameter(gaussian(6, 3, 1.0, rng));
  Tensor probe(gaussian(3, 3, 1.0, rng));
  std::vector<Tensor> params{f};
  EXPECT_LT(finite_difference_check([&] { return sum(mul(tanh(pool_features(f, seg)), probe)); }, params),
            1e-6);
  EXPECT_THROW(pool_features(Matrix(Matrix::Zero(5, 3)), seg), DimensionError);
}

TEST(CorpusFiles, RoundTrip) {
  auto dir = temp_dir("files");
  std::vector<TokenSeq> sents{{"a", "b"}, {"c"}};
  write_token_file(dir / "x.src", sents);
  EXPECT_EQ(read_token_file(dir / "x.src"), sents);
  std::vector<double> h{0.0, 0.333333, 1.0};
  write_hter_file(dir / "x.hter", h);
  EXPECT_EQ(read_hter_file(dir / "x.hter"), h);
  std::vector<TagSeq> tags{{Tag::Ok, Tag::Bad}, {Tag::Bad}};
  write_tags_file(dir / "x.tags", tags);
  EXPECT_EQ(read_tags_file(dir / "x.tags"), tags);
  EXPECT_THROW(read_token_file(dir / "missing"), FormatError);
}

TEST(Synthetic, NoNoiseMeansPerfectTranslations) {
  SyntheticConfig c;
  c.parallel_pairs = 20;
  c.train_triplets = 50;
  c.dev_triplets = c.test_triplets = 0;
  c.p_sub = c.p_del = c.p_ins = 0.0;
  auto task = generate_synthetic_task(c);
  for (const auto& ex : task.train) {
    EXPECT_EQ(ex.mt, ex.post_edit);
    EXPECT_EQ(ex.hter, 0.0);
    EXPECT_EQ(count_bad(ex.word_tags) + count_bad(ex.gap_tags), 0u);
    EXPECT_EQ(ex.post_edit, synthetic_translate(task, ex.source));
  }
  // Reversal: the last source word maps to the first target word.
  const auto& p = task.parallel.front();
  EXPECT_EQ(synthetic_translate(task, {p.source.back()}).front(), p.target.front());
}

TEST(Synthetic, FullSubstitutionMakesEveryTagBad) {
  SyntheticConfig c;
  c.parallel_pairs = 0;
  c.train_triplets = 50;
  c.dev_triplets = c.test_triplets = 0;
  c.p_sub = 1.0;
  c.p_del = c.p_ins = 0.0;
  for (const auto& ex : generate_synthetic_task(c).train) {
    EXPECT_EQ(count_bad(ex.word_tags), ex.mt.size());
    EXPECT_EQ(ex.hter, 1.0);
  }
}

TEST(Synthetic, MeanHterTracksExpectedEditFraction) {
  SyntheticConfig c;
  c.parallel_pairs = 0;
  c.train_triplets = 1000;
  c.dev_triplets = c.test_triplets = 0;
  c.p_sub = 0.15;
  c.p_del = 0.05;
  c.p_ins = 0.05;
  c.seed = 17;
  auto task = generate_synthetic_task(c);
  // Expected edits per reference token for length T: p_del + (1-p_del) p_sub
  // plus p_ins (T+1)/T insertions, averaged over the uniform length range.
  double expected = 0.0;
  for (int T = c.min_length; T <= c.max_length; ++T) {
    expected += c.p_del + (1 - c.p_del) * c.p_sub + c.p_ins * (T + 1.0) / T;
  }
  expected /= (c.max_length - c.min_length + 1);
  double mean = 0.0;
  for (const auto& ex : task.train) mean += ex.hter;
  mean /= static_cast<double>(task.train.size());
  EXPECT_NEAR(mean, expected, 0.05);
}

TEST(Synthetic, ReproduciblePerSeed) {
  SyntheticConfig c;
  c.parallel_pairs = 30;
  c.train_triplets = 30;
  auto a = generate_synthetic_task(c);
  auto b = generate_synthetic_task(c);
  EXPECT_EQ(a.parallel, b.parallel);
  for (std::size_t i = 0; i < a.train.size(); ++i) EXPECT_EQ(a.train[i].mt, b.train[i].mt);
  c.seed = 2;
  EXPECT_NE(generate_synthetic_task(c).parallel, a.parallel);
}

TEST(Synthetic, Validation) {
  SyntheticConfig c;
  c.vocab_size = 7;
  EXPECT_THROW(generate_synthetic_task(c), ValidationError);
  c.vocab_size = 8;
  c.p_del = 1.0;
  EXPECT_THROW(generate_synthetic_task(c), ValidationError);
}
