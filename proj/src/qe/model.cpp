#include "blex/qe/model.hpp"

#include "blex/error.hpp"
#include "blex/metrics/metrics.hpp"
#include "blex/numerics/optim.hpp"
#include "blex/serialize.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace blex {
namespace {

// Keeps reported probabilities strictly inside (0, 1).
constexpr double kProbabilityFloor = 1e-12;

double squash(double p) { return std::clamp(p, kProbabilityFloor, 1.0 - kProbabilityFloor); }

std::vector<int> tag_ids(const TagSeq& tags) {
  std::vector<int> ids(tags.size());
  std::transform(tags.begin(), tags.end(), ids.begin(), [](Tag t) { return t == Tag::Bad ? 1 : 0; });
  return ids;
}

std::vector<double> bad_column(const Matrix& logits) {
  const Matrix p = kernels::masked_softmax_rows(logits, Mask());
  std::vector<double> out(static_cast<std::size_t>(p.rows()));
  for (Eigen::Index r = 0; r < p.rows(); ++r) out[static_cast<std::size_t>(r)] = squash(p(r, 1));
  return out;
}

io::KeyValues config_to_kv(const QeConfig& c, int width, const DecisionThreshold& th) {
  return {{"lstm_hidden", std::to_string(c.lstm_hidden)},
          {"layers", std::to_string(c.layers)},
          {"lambda_sent", io::format_double(c.lambda_sent)},
          {"lambda_word", io::format_double(c.lambda_word)},
          {"lambda_gap", io::format_double(c.lambda_gap)},
          {"epochs", std::to_string(c.epochs)},
          {"learning_rate", io::format_double(c.learning_rate)},
          {"batch_size", std::to_string(c.batch_size)},
          {"clip_norm", io::format_double(c.clip_norm)},
          {"seed", std::to_string(c.seed)},
          {"input_width", std::to_string(width)},
          {"theta_word", io::format_double(th.word)},
          {"theta_gap", io::format_double(th.gap)}};
}

}  // namespace

void QeConfig::validate() const {
  if (lstm_hidden <= 0) throw ValidationError("qe: lstm_hidden must be positive");
  if (layers != 1) throw ValidationError("qe: only a single Bi-LSTM layer is supported (got " + std::to_string(layers) + ")");
  if (lambda_sent < 0 || lambda_word < 0 || lambda_gap < 0) throw ValidationError("qe: task weights must be >= 0");
  if (lambda_sent + lambda_word + lambda_gap <= 0) throw ValidationError("qe: at least one task weight must be positive");
  if (epochs < 0 || batch_size <= 0) throw ValidationError("qe: epochs >= 0 and batch_size > 0 required");
  if (!(learning_rate > 0)) throw ValidationError("qe: learning_rate must be positive");
  if (!(clip_norm > 0)) throw ValidationError("qe: clip_norm must be positive");
}

Tensor QeModel::add_param(const std::string& name, Matrix value, int rank) {
  Tensor p = Tensor::parameter(std::move(value), rank);
  named_.emplace_back(name, p);
  return p;
}

QeModel::Lstm QeModel::make_lstm(const std::string& prefix, Rng& rng) {
  const int H = config_.lstm_hidden;
  Lstm cell;
  cell.wx = add_param(prefix + ".wx", xavier_uniform(input_width_, 4 * H, rng));
  cell.wh = add_param(prefix + ".wh", xavier_uniform(H, 4 * H, rng));
  Matrix b = Matrix::Zero(1, 4 * H);
  b.middleCols(H, H).setOnes();  // forget gate
  cell.b = add_param(prefix + ".b", std::move(b), 1);
  return cell;
}

QeModel::QeModel(int input_width, const QeConfig& config, Rng& rng) : config_(config), input_width_(input_width) {
  config_.validate();
  if (input_width <= 0) throw ValidationError("qe: input width must be positive");
  const int H = config_.lstm_hidden;
  mean_ = Eigen::RowVectorXd::Zero(input_width);
  scale_ = Eigen::RowVectorXd::Ones(input_width);
  fwd_ = make_lstm("fwd", rng);
  bwd_ = make_lstm("bwd", rng);
  sent_w_ = add_param("sent.w", xavier_uniform(2 * H, 1, rng));
  sent_b_ = add_param("sent.b", Matrix::Zero(1, 1), 1);
  word_w_ = add_param("word.w", xavier_uniform(2 * H, 2, rng));
  word_b_ = add_param("word.b", Matrix::Zero(1, 2), 1);
  gap_w_ = add_param("gap.w", xavier_uniform(4 * H, 2, rng));
  gap_b_ = add_param("gap.b", Matrix::Zero(1, 2), 1);
}

void QeModel::set_normalizer(Eigen::RowVectorXd mean, Eigen::RowVectorXd scale) {
  if (mean.size() != input_width_ || scale.size() != input_width_)
    throw DimensionError("qe: normaliser width differs from input width " + std::to_string(input_width_));
  if ((scale.array() <= 0).any()) throw ValidationError("qe: normaliser scale must be positive");
  mean_ = std::move(mean);
  scale_ = std::move(scale);
}

std::vector<Tensor> QeModel::active_parameters() const {
  std::vector<Tensor> out{fwd_.wx, fwd_.wh, fwd_.b, bwd_.wx, bwd_.wh, bwd_.b};
  if (config_.lambda_sent > 0) out.insert(out.end(), {sent_w_, sent_b_});
  if (config_.lambda_word > 0) out.insert(out.end(), {word_w_, word_b_});
  if (config_.lambda_gap > 0) out.insert(out.end(), {gap_w_, gap_b_});
  return out;
}

Tensor QeModel::normalise(const Matrix& features) const {
  if (features.cols() != input_width_)
    throw DimensionError("qe: feature width " + std::to_string(features.cols()) + " but model expects " +
                         std::to_string(input_width_));
  if (features.rows() == 0) throw ValidationError("qe: empty feature sequence");
  Matrix x = (features.rowwise() - mean_).array().rowwise() / scale_.array();
  return Tensor(std::move(x));
}

Tensor QeModel::run_lstm(const Lstm& cell, const Tensor& projected, bool reverse) const {
  const Eigen::Index T = projected.rows();
  const int H = config_.lstm_hidden;
  Tensor h = Tensor::zeros(1, H), c = Tensor::zeros(1, H);
  std::vector<Tensor> outputs(static_cast<std::size_t>(T));
  for (Eigen::Index step = 0; step < T; ++step) {
    const Eigen::Index t = reverse ? T - 1 - step : step;
    Tensor g = slice_rows(projected, t, 1) + matmul(h, cell.wh);
    Tensor i = sigmoid(slice_cols(g, 0, H));
    Tensor f = sigmoid(slice_cols(g, H, H));
    Tensor o = sigmoid(slice_cols(g, 2 * H, H));
    Tensor cand = tanh(slice_cols(g, 3 * H, H));
    c = mul(f, c) + mul(i, cand);
    h = mul(o, tanh(c));
    outputs[static_cast<std::size_t>(t)] = h;
  }
  return concat_rows(outputs);
}

QeModel::States QeModel::bilstm_forward(const Tensor& features) const {
  if (features.rows() == 0) throw ValidationError("qe: empty feature sequence");
  return {run_lstm(fwd_, add_bias(matmul(features, fwd_.wx), fwd_.b), false),
          run_lstm(bwd_, add_bias(matmul(features, bwd_.wx), bwd_.b), true)};
}

Tensor QeModel::hter_output(const States& h) const {
  const std::array ends{slice_rows(h.fwd, h.fwd.rows() - 1, 1), slice_rows(h.bwd, 0, 1)};
  return sigmoid(add_bias(matmul(concat_cols(ends), sent_w_), sent_b_));
}

Tensor QeModel::word_logits(const States& h) const {
  const std::array both{h.fwd, h.bwd};
  return add_bias(matmul(concat_cols(both), word_w_), word_b_);
}

Tensor QeModel::gap_logits(const States& h) const {
  const std::array both{h.fwd, h.bwd};
  const Tensor states = concat_cols(both);
  const Tensor zero = Tensor::zeros(1, states.cols());
  const std::array left{zero, states}, right{states, zero};
  const std::array pairs{concat_rows(left), concat_rows(right)};
  return add_bias(matmul(concat_cols(pairs), gap_w_), gap_b_);
}

Tensor QeModel::loss(const Matrix& features, const ter::QeLabels& labels) const {
  const auto T = static_cast<std::size_t>(features.rows());
  if (labels.word_tags.size() != T || labels.gap_tags.size() != T + 1)
    throw DimensionError("qe: " + std::to_string(T) + " feature rows but " + std::to_string(labels.word_tags.size()) +
                         " word tags and " + std::to_string(labels.gap_tags.size()) + " gap tags");
  const States h = bilstm_forward(normalise(features));
  Tensor total = Tensor::scalar(0.0);
  if (config_.lambda_sent > 0) {
    Tensor diff = hter_output(h) - Tensor::scalar(labels.hter);
    total = total + scale(mul(diff, diff), config_.lambda_sent);
  }
  if (config_.lambda_word > 0)
    total = total + scale(cross_entropy_from_logits(word_logits(h), tag_ids(labels.word_tags)), config_.lambda_word);
  if (config_.lambda_gap > 0)
    total = total + scale(cross_entropy_from_logits(gap_logits(h), tag_ids(labels.gap_tags)), config_.lambda_gap);
  return total;
}

Prediction QeModel::predict(const Matrix& features) const {
  const States h = bilstm_forward(normalise(features));
  Prediction p;
  p.hter = squash(hter_output(h).item());
  p.word_bad = bad_column(word_logits(h).value());
  p.gap_bad = bad_column(gap_logits(h).value());
  return p;
}

void QeModel::save(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw FormatError("cannot write " + tmp.string());
    io::write_magic(out, "QEBL1");
    io::write_key_values(out, config_to_kv(config_, input_width_, thresholds));
    out << "params " << named_.size() << '\n';
    for (const auto& [name, p] : named_) io::write_matrix(out, name, p.value(), p.rank());
    io::write_matrix(out, "norm.mean", mean_, 1);
    io::write_matrix(out, "norm.scale", scale_, 1);
    if (!out) throw FormatError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

QeModel QeModel::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  io::expect_magic(in, "QEBL1");
  const auto kv = io::read_key_values(in);
  QeConfig c;
  c.lstm_hidden = io::get_int(kv, "lstm_hidden");
  c.layers = io::get_int(kv, "layers");
  c.lambda_sent = io::get_double(kv, "lambda_sent");
  c.lambda_word = io::get_double(kv, "lambda_word");
  c.lambda_gap = io::get_double(kv, "lambda_gap");
  c.epochs = io::get_int(kv, "epochs");
  c.learning_rate = io::get_double(kv, "learning_rate");
  c.batch_size = io::get_int(kv, "batch_size");
  c.clip_norm = io::get_double(kv, "clip_norm");
  c.seed = static_cast<std::uint64_t>(io::get_int64(kv, "seed"));
  Rng unused(0);
  QeModel m(io::get_int(kv, "input_width"), c, unused);
  m.thresholds = {io::get_double(kv, "theta_word"), io::get_double(kv, "theta_gap")};

  std::string header, tag;
  std::size_t count = 0;
  std::getline(in, header);
  std::istringstream hs(header);
  if (!(hs >> tag >> count) || tag != "params" || count != m.named_.size())
    throw FormatError(path.string() + ": parameter count does not match the stored config");
  for (auto& [name, p] : m.named_) {
    io::NamedMatrix nm = io::read_matrix(in);
    if (nm.name != name || nm.value.rows() != p.rows() || nm.value.cols() != p.cols())
      throw FormatError(path.string() + ": unexpected parameter " + nm.name + " " +
                        shape_string(nm.value.rows(), nm.value.cols()) + ", expected " + name + " " + p.shape_string());
    p.mutable_value() = std::move(nm.value);
  }
  const auto mean = io::read_matrix(in), scale = io::read_matrix(in);
  if (mean.name != "norm.mean" || scale.name != "norm.scale")
    throw FormatError(path.string() + ": missing normaliser");
  m.set_normalizer(mean.value.row(0), scale.value.row(0));
  return m;
}

TagSeq tags_from_probabilities(std::span<const double> bad_probabilities, double theta) {
  TagSeq tags(bad_probabilities.size());
  std::transform(bad_probabilities.begin(), bad_probabilities.end(), tags.begin(),
                 [theta](double p) { return p >= theta ? Tag::Bad : Tag::Ok; });
  return tags;
}

double tune_threshold(const std::vector<std::vector<double>>& bad_probabilities, const std::vector<TagSeq>& truth) {
  if (bad_probabilities.size() != truth.size())
    throw DimensionError("tune_threshold: " + std::to_string(bad_probabilities.size()) + " predictions for " +
                         std::to_string(truth.size()) + " gold sentences");
  std::vector<double> probs;
  TagSeq gold;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (bad_probabilities[i].size() != truth[i].size())
      throw DimensionError("tune_threshold: sentence " + std::to_string(i) + " length mismatch");
    probs.insert(probs.end(), bad_probabilities[i].begin(), bad_probabilities[i].end());
    gold.insert(gold.end(), truth[i].begin(), truth[i].end());
  }
  if (gold.empty()) throw ValidationError("tune_threshold: empty development set");
  const std::size_t bad = count_bad(gold);
  if (bad == 0 || bad == gold.size()) {
    spdlog::warn("development tags contain a single class; using threshold 0.5");
    return 0.5;
  }
  double best_theta = 0.01, best = -1.0;
  for (int step = 1; step <= 99; ++step) {
    const double theta = step / 100.0;
    const TagSeq pred = tags_from_probabilities(probs, theta);
    const double score = f1_scores(std::span<const Tag>(pred), std::span<const Tag>(gold)).f1_multi;
    if (score > best) {
      best = score;
      best_theta = theta;
    }
  }
  return best_theta;
}

Prediction ensemble_predict(std::span<const QeModel> models, const Matrix& features) {
  if (models.empty()) throw ValidationError("ensemble: no models");
  for (const auto& m : models)
    if (m.input_width() != models.front().input_width())
      throw DimensionError("ensemble: member widths differ (" + std::to_string(m.input_width()) + " vs " +
                           std::to_string(models.front().input_width()) + ")");
  Prediction sum = models.front().predict(features);
  for (std::size_t i = 1; i < models.size(); ++i) {
    const Prediction p = models[i].predict(features);
    sum.hter += p.hter;
    for (std::size_t k = 0; k < p.word_bad.size(); ++k) sum.word_bad[k] += p.word_bad[k];
    for (std::size_t k = 0; k < p.gap_bad.size(); ++k) sum.gap_bad[k] += p.gap_bad[k];
  }
  if (models.size() == 1) return sum;
  const double n = static_cast<double>(models.size());
  sum.hter /= n;
  for (auto& v : sum.word_bad) v /= n;
  for (auto& v : sum.gap_bad) v /= n;
  return sum;
}

QeModel train_qe(const QeTrainingData& data, const QeConfig& config, const std::function<void(int, double)>& on_epoch) {
  config.validate();
  if (data.features.empty()) throw ValidationError("qe: empty training set");
  if (data.features.size() != data.labels.size())
    throw DimensionError("qe: " + std::to_string(data.features.size()) + " feature records but " +
                         std::to_string(data.labels.size()) + " label records");
  const auto width = data.features.front().cols();
  Eigen::RowVectorXd sum = Eigen::RowVectorXd::Zero(width), sq = Eigen::RowVectorXd::Zero(width);
  double rows = 0;
  for (std::size_t i = 0; i < data.features.size(); ++i) {
    const Matrix& f = data.features[i];
    const auto& l = data.labels[i];
    if (f.cols() != width)
      throw DimensionError("qe: sentence " + std::to_string(i) + " has feature width " + std::to_string(f.cols()) +
                           ", expected " + std::to_string(width));
    if (l.word_tags.size() != static_cast<std::size_t>(f.rows()) ||
        l.gap_tags.size() != static_cast<std::size_t>(f.rows()) + 1)
      throw DimensionError("qe: sentence " + std::to_string(i) + " has " + std::to_string(f.rows()) +
                           " feature rows but " + std::to_string(l.word_tags.size()) + " word tags and " +
                           std::to_string(l.gap_tags.size()) + " gap tags");
    sum += f.colwise().sum();
    sq += f.array().square().matrix().colwise().sum();
    rows += static_cast<double>(f.rows());
  }
  const Eigen::RowVectorXd mean = sum / rows;
  Eigen::RowVectorXd spread = (sq / rows - mean.cwiseProduct(mean)).cwiseMax(0.0).cwiseSqrt();
  for (Eigen::Index j = 0; j < spread.size(); ++j)
    if (spread(j) < 1e-8) spread(j) = 1.0;

  Rng rng(config.seed);
  QeModel model(static_cast<int>(width), config, rng);
  model.set_normalizer(mean, spread);
  std::vector<Tensor> params = model.active_parameters();
  Adam adam(params, AdamOptions{config.learning_rate});
  std::vector<std::size_t> order(data.features.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto batch = static_cast<std::size_t>(config.batch_size);

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      const double weight = 1.0 / static_cast<double>(end - start);
      for (std::size_t i = start; i < end; ++i) {
        Tensor loss = model.loss(data.features[order[i]], data.labels[order[i]]);
        if (!std::isfinite(loss.item()))
          throw NumericalError("qe training diverged at epoch " + std::to_string(epoch) + " on sentence " +
                               std::to_string(order[i]));
        epoch_loss += loss.item();
        backward(scale(loss, weight));
      }
      clip_grad_norm(params, config.clip_norm);
      adam.step();
    }
    if (on_epoch) on_epoch(epoch, epoch_loss / static_cast<double>(order.size()));
  }
  return model;
}

}  // namespace blex
