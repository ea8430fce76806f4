#include "blex/metrics/metrics.hpp"

#include <spdlog/spdlog.h>

#include <cstdio>
#include <functional>
#include <limits>

namespace blex {
namespace {

double f1(std::size_t tp, std::size_t fp, std::size_t fn) {
  const double denom = static_cast<double>(2 * tp + fp + fn);
  return denom == 0.0 ? 0.0 : 2.0 * static_cast<double>(tp) / denom;
}

double or_nan(const std::function<double()>& metric, const char* name) {
  try {
    return metric();
  } catch (const UndefinedMetricError& e) {
    spdlog::warn("{} undefined: {}", name, e.what());
    return std::numeric_limits<double>::quiet_NaN();
  }
}

std::string fixed(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

TagScores f1_scores(std::span<const Tag> predicted, std::span<const Tag> truth) {
  if (predicted.size() != truth.size())
    throw DimensionError("f1: " + std::to_string(predicted.size()) + " predicted tags vs " +
                         std::to_string(truth.size()) + " gold tags");
  std::size_t bad_bad = 0, bad_ok = 0, ok_bad = 0, ok_ok = 0;  // predicted_true
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const bool p = predicted[i] == Tag::Bad, t = truth[i] == Tag::Bad;
    if (p && t) ++bad_bad;
    else if (p) ++bad_ok;
    else if (t) ++ok_bad;
    else ++ok_ok;
  }
  TagScores s;
  s.count = truth.size();
  s.true_bad = bad_bad + ok_bad;
  s.predicted_bad = bad_bad + bad_ok;
  s.f1_bad = f1(bad_bad, bad_ok, ok_bad);
  s.f1_ok = f1(ok_ok, ok_bad, bad_ok);
  s.bad_undefined = s.true_bad == 0 && s.predicted_bad == 0;
  s.ok_undefined = s.true_bad == s.count && s.predicted_bad == s.count;
  s.f1_multi = s.f1_ok * s.f1_bad;
  return s;
}

TagScores f1_scores(const std::vector<TagSeq>& predicted, const std::vector<TagSeq>& truth) {
  if (predicted.size() != truth.size())
    throw DimensionError("f1: " + std::to_string(predicted.size()) + " predicted sentences vs " +
                         std::to_string(truth.size()) + " gold sentences");
  TagSeq p, t;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (predicted[i].size() != truth[i].size())
      throw DimensionError("f1: sentence " + std::to_string(i) + " has " + std::to_string(predicted[i].size()) +
                           " predicted tags vs " + std::to_string(truth[i].size()) + " gold tags");
    p.insert(p.end(), predicted[i].begin(), predicted[i].end());
    t.insert(t.end(), truth[i].begin(), truth[i].end());
  }
  return f1_scores(std::span<const Tag>(p), std::span<const Tag>(t));
}

SentenceScores sentence_scores(std::span<const double> predicted, std::span<const double> truth) {
  const Eigen::Map<const Eigen::VectorXd> x(predicted.data(), static_cast<Eigen::Index>(predicted.size()));
  const Eigen::Map<const Eigen::VectorXd> y(truth.data(), static_cast<Eigen::Index>(truth.size()));
  detail::require_same_length(x, y, "sentence scores");
  SentenceScores s;
  s.count = predicted.size();
  s.pearson = or_nan([&] { return pearson(x, y); }, "pearson");
  s.spearman = or_nan([&] { return spearman(x, y); }, "spearman");
  s.mae = or_nan([&] { return mae(x, y); }, "mae");
  s.rmse = or_nan([&] { return rmse(x, y); }, "rmse");
  s.delta_avg = or_nan([&] { return delta_avg(x, y); }, "delta_avg");
  return s;
}

std::string MetricReport::to_text() const {
  std::string out;
  auto line = [&](const std::string& name, const std::string& value) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "  %-12s %12s\n", name.c_str(), value.c_str());
    out += buf;
  };
  if (sentence) {
    out += "sentence level (" + std::to_string(sentence->count) + " sentences)\n";
    line("pearson", fixed(sentence->pearson));
    line("spearman", fixed(sentence->spearman));
    line("mae", fixed(sentence->mae));
    line("rmse", fixed(sentence->rmse));
    line("delta_avg", fixed(sentence->delta_avg));
  }
  for (const auto& [name, scores] : {std::pair{"word", &word}, std::pair{"gap", &gap}}) {
    if (!*scores) continue;
    const TagScores& s = **scores;
    out += std::string(name) + " level (" + std::to_string(s.count) + " tags, " + std::to_string(s.true_bad) +
           " gold BAD)\n";
    line("f1_ok", fixed(s.f1_ok) + (s.ok_undefined ? "*" : ""));
    line("f1_bad", fixed(s.f1_bad) + (s.bad_undefined ? "*" : ""));
    line("f1_multi", fixed(s.f1_multi));
  }
  if ((word && (word->ok_undefined || word->bad_undefined)) || (gap && (gap->ok_undefined || gap->bad_undefined)))
    out += "  * class absent from both prediction and gold; F1 set to 0\n";
  return out;
}

std::string MetricReport::to_key_values() const {
  std::string out;
  auto kv = [&](const std::string& key, const std::string& value) { out += key + "=" + value + "\n"; };
  if (sentence) {
    kv("sentence.count", std::to_string(sentence->count));
    kv("sentence.pearson", fixed(sentence->pearson));
    kv("sentence.spearman", fixed(sentence->spearman));
    kv("sentence.mae", fixed(sentence->mae));
    kv("sentence.rmse", fixed(sentence->rmse));
    kv("sentence.delta_avg", fixed(sentence->delta_avg));
  }
  for (const auto& [name, scores] : {std::pair{"word", &word}, std::pair{"gap", &gap}}) {
    if (!*scores) continue;
    const TagScores& s = **scores;
    const std::string p = name;
    kv(p + ".count", std::to_string(s.count));
    kv(p + ".true_bad", std::to_string(s.true_bad));
    kv(p + ".predicted_bad", std::to_string(s.predicted_bad));
    kv(p + ".f1_ok", fixed(s.f1_ok));
    kv(p + ".f1_bad", fixed(s.f1_bad));
    kv(p + ".f1_multi", fixed(s.f1_multi));
    kv(p + ".ok_undefined", s.ok_undefined ? "1" : "0");
    kv(p + ".bad_undefined", s.bad_undefined ? "1" : "0");
  }
  return out;
}

}  // namespace blex
