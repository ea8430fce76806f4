#pragma once

#include "blex/error.hpp"
#include "blex/tags.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace blex {

namespace detail {

template <typename X, typename Y>
void require_same_length(const Eigen::DenseBase<X>& x, const Eigen::DenseBase<Y>& y, const char* what) {
  if (x.size() != y.size())
    throw DimensionError(std::string(what) + ": length " + std::to_string(x.size()) + " vs " + std::to_string(y.size()));
}

}  // namespace detail

/// Sample Pearson correlation of two equally long vectors.
template <typename X, typename Y>
double pearson(const Eigen::DenseBase<X>& x, const Eigen::DenseBase<Y>& y) {
  detail::require_same_length(x, y, "pearson");
  if (x.size() < 2) throw UndefinedMetricError("pearson: need at least two points");
  const Eigen::ArrayXd a = x.derived().template cast<double>().array();
  const Eigen::ArrayXd b = y.derived().template cast<double>().array();
  const Eigen::ArrayXd da = a - a.mean(), db = b - b.mean();
  const double sa = da.square().sum(), sb = db.square().sum();
  if (sa == 0.0 || sb == 0.0) throw UndefinedMetricError("pearson: correlation undefined for constant input");
  return std::clamp((da * db).sum() / std::sqrt(sa * sb), -1.0, 1.0);
}

/// 1-based ranks; tied values share the mean of the ranks they span.
template <typename X>
Eigen::VectorXd average_ranks(const Eigen::DenseBase<X>& x) {
  const auto n = x.size();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index i, Eigen::Index j) { return x(i) < x(j); });
  Eigen::VectorXd ranks(n);
  for (Eigen::Index i = 0; i < n;) {
    Eigen::Index j = i;
    while (j + 1 < n && x(order[j + 1]) == x(order[i])) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (Eigen::Index k = i; k <= j; ++k) ranks(order[k]) = r;
    i = j + 1;
  }
  return ranks;
}

template <typename X, typename Y>
double spearman(const Eigen::DenseBase<X>& x, const Eigen::DenseBase<Y>& y) {
  detail::require_same_length(x, y, "spearman");
  return pearson(average_ranks(x), average_ranks(y));
}

template <typename X, typename Y>
double mae(const Eigen::DenseBase<X>& x, const Eigen::DenseBase<Y>& y) {
  detail::require_same_length(x, y, "mae");
  if (x.size() == 0) throw UndefinedMetricError("mae: empty input");
  return (x.derived().array() - y.derived().array()).abs().mean();
}

template <typename X, typename Y>
double rmse(const Eigen::DenseBase<X>& x, const Eigen::DenseBase<Y>& y) {
  detail::require_same_length(x, y, "rmse");
  if (x.size() == 0) throw UndefinedMetricError("rmse: empty input");
  return std::sqrt((x.derived().array() - y.derived().array()).square().mean());
}

/// Quantile ranking score. Sentences are sorted by predicted score, highest
/// first (ties keep input order). For q = 2..floor(n/2), the k-th head holds
/// the first floor(n*k/q) sentences and Delta_q averages (head mean truth -
/// overall mean truth) over k = 1..q-1; the result averages Delta_q over q.
/// Higher is better when larger predictions should mean larger truth.
template <typename X, typename Y>
double delta_avg(const Eigen::DenseBase<X>& predicted, const Eigen::DenseBase<Y>& truth) {
  detail::require_same_length(predicted, truth, "delta_avg");
  const auto n = predicted.size();
  if (n < 4) throw UndefinedMetricError("delta_avg: need at least four sentences");
  // Constant truth: every head mean is the overall mean.
  if ((truth.derived().array() == truth(0)).all()) return 0.0;
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index i, Eigen::Index j) { return predicted(i) > predicted(j); });
  std::vector<double> prefix(static_cast<std::size_t>(n) + 1, 0.0);
  for (Eigen::Index i = 0; i < n; ++i)
    prefix[static_cast<std::size_t>(i) + 1] = prefix[static_cast<std::size_t>(i)] + static_cast<double>(truth(order[i]));
  const double overall = prefix.back() / static_cast<double>(n);
  double total = 0.0;
  int quantiles = 0;
  for (Eigen::Index q = 2; q <= n / 2; ++q) {
    double delta = 0.0;
    for (Eigen::Index k = 1; k < q; ++k) {
      const Eigen::Index head = n * k / q;
      delta += prefix[static_cast<std::size_t>(head)] / static_cast<double>(head) - overall;
    }
    total += delta / static_cast<double>(q - 1);
    ++quantiles;
  }
  return total / quantiles;
}

struct TagScores {
  double f1_ok = 0.0;
  double f1_bad = 0.0;
  double f1_multi = 0.0;
  // Set when a class occurs in neither prediction nor truth; its F1 is then 0.
  bool ok_undefined = false;
  bool bad_undefined = false;
  std::size_t count = 0;
  std::size_t true_bad = 0;
  std::size_t predicted_bad = 0;
};

/// Per-class F1 over flattened tag sequences and their product.
TagScores f1_scores(std::span<const Tag> predicted, std::span<const Tag> truth);
TagScores f1_scores(const std::vector<TagSeq>& predicted, const std::vector<TagSeq>& truth);

struct SentenceScores {
  double pearson = 0.0;
  double spearman = 0.0;
  double mae = 0.0;
  double rmse = 0.0;
  double delta_avg = 0.0;
  std::size_t count = 0;
};

/// Undefined statistics (constant input, too few sentences) are reported as NaN.
SentenceScores sentence_scores(std::span<const double> predicted, std::span<const double> truth);

struct MetricReport {
  std::optional<SentenceScores> sentence;
  std::optional<TagScores> word;
  std::optional<TagScores> gap;

  // Aligned human-readable table.
  std::string to_text() const;
  // One "section.metric=value" line per number, fixed six decimals.
  std::string to_key_values() const;
};

}  // namespace blex
