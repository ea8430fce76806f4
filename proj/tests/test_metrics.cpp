#include "blex/metrics/metrics.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

using namespace blex;

namespace {

using Vec = Eigen::VectorXd;

Vec vec(std::initializer_list<double> v) {
  Vec out(static_cast<Eigen::Index>(v.size()));
  std::copy(v.begin(), v.end(), out.data());
  return out;
}

// Textbook formulas written out with plain loops over std::vector.
double naive_pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
  }
  const double mx = sx / n, my = sy / n;
  double cov = 0, vx = 0, vy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    cov += (x[i] - mx) * (y[i] - my);
    vx += (x[i] - mx) * (x[i] - mx);
    vy += (y[i] - my) * (y[i] - my);
  }
  return cov / std::sqrt(vx * vy);
}

// Rank of x_i = 1 + #{x_j < x_i} + (#{x_j == x_i} - 1) / 2.
std::vector<double> naive_ranks(const std::vector<double>& x) {
  std::vector<double> r(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    double less = 0, equal = 0;
    for (double v : x) {
      less += v < x[i];
      equal += v == x[i];
    }
    r[i] = 1.0 + less + (equal - 1.0) / 2.0;
  }
  return r;
}

double naive_mae(const std::vector<double>& x, const std::vector<double>& y) {
  double s = 0;
  for (std::size_t i = 0; i < x.size(); ++i) s += std::fabs(x[i] - y[i]);
  return s / static_cast<double>(x.size());
}

double naive_rmse(const std::vector<double>& x, const std::vector<double>& y) {
  double s = 0;
  for (std::size_t i = 0; i < x.size(); ++i) s += (x[i] - y[i]) * (x[i] - y[i]);
  return std::sqrt(s / static_cast<double>(x.size()));
}

// Counts per (predicted, true) cell, then precision/recall/harmonic mean.
std::pair<double, double> naive_f1(const TagSeq& p, const TagSeq& t) {
  std::map<std::pair<Tag, Tag>, double> cell;
  for (std::size_t i = 0; i < p.size(); ++i) cell[{p[i], t[i]}] += 1;
  auto f1 = [&](Tag c, Tag other) {
    const double tp = cell[{c, c}], fp = cell[{c, other}], fn = cell[{other, c}];
    if (tp == 0) return 0.0;
    const double prec = tp / (tp + fp), rec = tp / (tp + fn);
    return 2 * prec * rec / (prec + rec);
  };
  return {f1(Tag::Ok, Tag::Bad), f1(Tag::Bad, Tag::Ok)};
}

Vec to_vec(const std::vector<double>& v) { return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size())); }

}  // namespace

TEST(Pearson, Examples) {
  const Vec x = vec({1, 2, 3, 4});
  EXPECT_NEAR(pearson(x, Vec(2 * x)), 1.0, 1e-15);
  EXPECT_NEAR(pearson(x, Vec(-x)), -1.0, 1e-15);
  EXPECT_NEAR(pearson(vec({1, 2, 3}), vec({1, 3, 2})), 0.5, 1e-15);
  EXPECT_THROW(pearson(vec({1, 1, 1}), vec({1, 2, 3})), UndefinedMetricError);
  EXPECT_THROW(pearson(vec({1}), vec({1})), UndefinedMetricError);
  EXPECT_THROW(pearson(vec({1, 2}), vec({1, 2, 3})), DimensionError);
}

TEST(Pearson, AffineInvariance) {
  const Vec x = vec({0.3, 0.1, 0.9, 0.4, 0.5}), y = vec({1, 0, 2, 2, 1});
  const double r = pearson(x, y);
  EXPECT_NEAR(pearson(Vec((3.0 * x.array() + 7.0).matrix()), y), r, 1e-14);
  EXPECT_NEAR(pearson(x, Vec((0.5 * y.array() - 2.0).matrix())), r, 1e-14);
}

TEST(Spearman, Examples) {
  const Vec x = vec({0.2, 0.5, 0.1, 0.9});
  EXPECT_NEAR(spearman(x, Vec(x.array().exp().matrix())), 1.0, 1e-15);
  EXPECT_NEAR(spearman(x, Vec(-x)), -1.0, 1e-15);
  EXPECT_EQ(average_ranks(vec({1, 1, 2})), vec({1.5, 1.5, 3}));
  EXPECT_NEAR(spearman(vec({1, 1, 2}), vec({1, 2, 3})), std::sqrt(3.0) / 2.0, 1e-15);
  EXPECT_NEAR(spearman(vec({1, 1, 2}), vec({1, 2, 3})), 0.866, 1e-3);
}

TEST(MaeRmse, Examples) {
  const Vec x = vec({1, 2});
  EXPECT_EQ(mae(x, x), 0.0);
  EXPECT_EQ(rmse(x, x), 0.0);
  EXPECT_EQ(mae(vec({1, -1}), vec({0, 0})), 1.0);
  EXPECT_EQ(rmse(vec({1, -1}), vec({0, 0})), 1.0);
  EXPECT_EQ(mae(vec({0, 2}), vec({0, 0})), 1.0);
  EXPECT_NEAR(rmse(vec({0, 2}), vec({0, 0})), std::sqrt(2.0), 1e-15);
  EXPECT_THROW(mae(vec({1}), vec({1, 2})), DimensionError);
}

TEST(Metrics, AgreeWithNaiveOracles) {
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<int> len(2, 12);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> grid(0, 4);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = len(rng);
    std::vector<double> x(n), y(n);
    // Half the trials draw from a coarse grid so ties occur.
    for (int i = 0; i < n; ++i) {
      x[i] = trial % 2 ? u(rng) : grid(rng) / 4.0;
      y[i] = trial % 2 ? u(rng) : grid(rng) / 4.0;
    }
    const Vec X = to_vec(x), Y = to_vec(y);
    EXPECT_NEAR(mae(X, Y), naive_mae(x, y), 1e-10);
    EXPECT_NEAR(rmse(X, Y), naive_rmse(x, y), 1e-10);
    const bool constant = std::all_of(x.begin(), x.end(), [&](double v) { return v == x[0]; }) ||
                          std::all_of(y.begin(), y.end(), [&](double v) { return v == y[0]; });
    if (constant) {
      EXPECT_THROW(pearson(X, Y), UndefinedMetricError);
      continue;
    }
    EXPECT_NEAR(pearson(X, Y), naive_pearson(x, y), 1e-10);
    EXPECT_NEAR(spearman(X, Y), naive_pearson(naive_ranks(x), naive_ranks(y)), 1e-10);
  }
}

TEST(DeltaAvg, HandEvaluation) {
  // n = 4 gives the single quantile q = 2: top half {0.4, 0.3} mean 0.35 minus 0.25.
  const Vec h = vec({0.1, 0.2, 0.3, 0.4});
  EXPECT_NEAR(delta_avg(h, h), 0.1, 1e-15);
  // n = 6: q = 2 (head 3) and q = 3 (heads 2 and 4).
  const Vec t = vec({0.6, 0.1, 0.5, 0.2, 0.4, 0.3});
  const double mean = 0.35;
  const double d2 = (0.5 - mean);
  const double d3 = ((0.55 - mean) + (0.45 - mean)) / 2;
  EXPECT_NEAR(delta_avg(t, t), (d2 + d3) / 2, 1e-15);
  // Reversed ranking flips the sign.
  EXPECT_NEAR(delta_avg(Vec(-h), h), -0.1, 1e-15);
  EXPECT_THROW(delta_avg(vec({1, 2, 3}), vec({1, 2, 3})), UndefinedMetricError);
}

TEST(DeltaAvg, ConstantTruthIsZero) {
  EXPECT_EQ(delta_avg(vec({0.3, 0.9, 0.1, 0.5, 0.7}), vec({0.1, 0.1, 0.1, 0.1, 0.1})), 0.0);
}

TEST(DeltaAvg, OracleRankingIsMaximal) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int n = 4; n <= 6; ++n) {
    std::vector<double> truth(n);
    for (auto& v : truth) v = u(rng);
    const Vec T = to_vec(truth);
    const double best = delta_avg(T, T);
    std::vector<double> perm = truth;
    std::sort(perm.begin(), perm.end());
    do {
      EXPECT_LE(delta_avg(to_vec(perm), T), best + 1e-15);
    } while (std::next_permutation(perm.begin(), perm.end()));
  }
}

TEST(DeltaAvg, RandomPredictionsNearZero) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double total = 0;
  const int trials = 20;
  for (int t = 0; t < trials; ++t) {
    Vec p(1000), h(1000);
    for (int i = 0; i < 1000; ++i) {
      p(i) = u(rng);
      h(i) = u(rng);
    }
    total += delta_avg(p, h);
  }
  EXPECT_LT(std::fabs(total / trials), 0.02);
}

TEST(F1, Examples) {
  const TagSeq truth{Tag::Ok, Tag::Bad, Tag::Bad, Tag::Ok};
  const auto perfect = f1_scores(std::span<const Tag>(truth), std::span<const Tag>(truth));
  EXPECT_EQ(perfect.f1_ok, 1.0);
  EXPECT_EQ(perfect.f1_bad, 1.0);
  EXPECT_EQ(perfect.f1_multi, 1.0);

  const TagSeq all_ok(4, Tag::Ok);
  const auto baseline = f1_scores(std::span<const Tag>(all_ok), std::span<const Tag>(truth));
  EXPECT_EQ(baseline.f1_bad, 0.0);
  EXPECT_EQ(baseline.f1_multi, 0.0);
  EXPECT_FALSE(baseline.bad_undefined);

  const TagSeq pred{Tag::Ok, Tag::Bad, Tag::Ok, Tag::Ok};
  const auto s = f1_scores(std::span<const Tag>(pred), std::span<const Tag>(truth));
  EXPECT_NEAR(s.f1_ok, 0.8, 1e-15);
  EXPECT_NEAR(s.f1_bad, 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(s.f1_multi, 0.8 * 2.0 / 3.0, 1e-15);
  EXPECT_LE(s.f1_multi, std::min(s.f1_ok, s.f1_bad));

  const auto absent = f1_scores(std::span<const Tag>(all_ok), std::span<const Tag>(all_ok));
  EXPECT_TRUE(absent.bad_undefined);
  EXPECT_EQ(absent.f1_bad, 0.0);
  EXPECT_THROW(f1_scores(std::span<const Tag>(pred), std::span<const Tag>(all_ok).first(3)), DimensionError);
}

TEST(F1, AgreesWithNaiveOracle) {
  std::mt19937_64 rng(21);
  std::uniform_int_distribution<int> len(1, 15);
  std::bernoulli_distribution coin(0.35);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = len(rng);
    TagSeq p(n), t(n);
    for (int i = 0; i < n; ++i) {
      p[i] = coin(rng) ? Tag::Bad : Tag::Ok;
      t[i] = coin(rng) ? Tag::Bad : Tag::Ok;
    }
    const auto s = f1_scores(std::span<const Tag>(p), std::span<const Tag>(t));
    const auto [ok, bad] = naive_f1(p, t);
    EXPECT_NEAR(s.f1_ok, ok, 1e-10);
    EXPECT_NEAR(s.f1_bad, bad, 1e-10);
    EXPECT_NEAR(s.f1_multi, ok * bad, 1e-10);
  }
}

TEST(F1, SentenceListsFlatten) {
  const std::vector<TagSeq> truth{{Tag::Ok, Tag::Bad}, {Tag::Bad, Tag::Ok}};
  const std::vector<TagSeq> pred{{Tag::Ok, Tag::Bad}, {Tag::Ok, Tag::Ok}};
  const auto s = f1_scores(pred, truth);
  EXPECT_EQ(s.count, 4u);
  EXPECT_NEAR(s.f1_ok, 0.8, 1e-15);
  const std::vector<TagSeq> ragged{{Tag::Ok}, {Tag::Ok, Tag::Ok}};
  EXPECT_THROW(f1_scores(ragged, truth), DimensionError);
}

TEST(Report, Formats) {
  MetricReport r;
  const std::vector<double> p{0.1, 0.2, 0.3, 0.4}, h{0.1, 0.2, 0.3, 0.4};
  r.sentence = sentence_scores(p, h);
  const TagSeq t{Tag::Ok, Tag::Bad};
  r.word = f1_scores(std::span<const Tag>(t), std::span<const Tag>(t));
  const std::string kv = r.to_key_values();
  EXPECT_NE(kv.find("sentence.pearson=1.000000\n"), std::string::npos);
  EXPECT_NE(kv.find("sentence.delta_avg=0.100000\n"), std::string::npos);
  EXPECT_NE(kv.find("word.f1_multi=1.000000\n"), std::string::npos);
  EXPECT_EQ(kv.find("gap."), std::string::npos);
  EXPECT_NE(r.to_text().find("pearson"), std::string::npos);

  const std::vector<double> flat{0.5, 0.5, 0.5, 0.5};
  EXPECT_TRUE(std::isnan(sentence_scores(flat, h).pearson));
}
