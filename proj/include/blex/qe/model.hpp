#pragma once

#include "blex/numerics/ops.hpp"
#include "blex/tags.hpp"
#include "blex/ter/labeler.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace blex {

struct QeConfig {
  int lstm_hidden = 128;
  int layers = 1;
  double lambda_sent = 1.0;
  double lambda_word = 1.0;
  double lambda_gap = 1.0;
  int epochs = 20;
  double learning_rate = 1e-3;
  int batch_size = 8;
  double clip_norm = 5.0;
  std::uint64_t seed = 1;

  void validate() const;
  bool operator==(const QeConfig&) const = default;
};

struct Prediction {
  double hter = 0.5;
  std::vector<double> word_bad;
  std::vector<double> gap_bad;
};

struct DecisionThreshold {
  double word = 0.5;
  double gap = 0.5;
};

/// One-layer Bi-LSTM over per-token features with a sentence HTER head, a
/// word OK/BAD head and a gap OK/BAD head. Inputs are standardised with
/// per-column statistics fixed at training time.
class QeModel {
 public:
  struct States {
    Tensor fwd;  // [T x H]
    Tensor bwd;  // [T x H]
  };

  QeModel() = default;
  QeModel(int input_width, const QeConfig& config, Rng& rng);

  int input_width() const { return input_width_; }
  const QeConfig& config() const { return config_; }

  /// Per-column shift and scale applied before the LSTM: (x - mean) / scale.
  void set_normalizer(Eigen::RowVectorXd mean, Eigen::RowVectorXd scale);
  const Eigen::RowVectorXd& feature_mean() const { return mean_; }
  const Eigen::RowVectorXd& feature_scale() const { return scale_; }

  States bilstm_forward(const Tensor& features) const;
  /// sigmoid(w . [h_fwd_T; h_bwd_1] + b), [1 x 1].
  Tensor hter_output(const States& h) const;
  /// [T x 2] logits, column 1 is BAD.
  Tensor word_logits(const States& h) const;
  /// [(T+1) x 2] logits over [h_k; h_{k+1}] with zero states at both ends.
  Tensor gap_logits(const States& h) const;

  /// Weighted multi-task loss for one sentence; heads with zero weight are skipped.
  Tensor loss(const Matrix& features, const ter::QeLabels& labels) const;

  Prediction predict(const Matrix& features) const;

  std::vector<std::pair<std::string, Tensor>>& named_parameters() { return named_; }
  const std::vector<std::pair<std::string, Tensor>>& named_parameters() const { return named_; }
  /// LSTM parameters plus those of the heads with a positive weight.
  std::vector<Tensor> active_parameters() const;

  DecisionThreshold thresholds;

  // "QEBL1" file: config block, named parameter blobs, normaliser, thresholds.
  void save(const std::filesystem::path& path) const;
  static QeModel load(const std::filesystem::path& path);

 private:
  struct Lstm {
    Tensor wx, wh, b;
  };

  Tensor add_param(const std::string& name, Matrix value, int rank = 2);
  Lstm make_lstm(const std::string& prefix, Rng& rng);
  Tensor run_lstm(const Lstm& cell, const Tensor& projected, bool reverse) const;
  Tensor normalise(const Matrix& features) const;

  QeConfig config_;
  int input_width_ = 0;
  Eigen::RowVectorXd mean_;
  Eigen::RowVectorXd scale_;
  Lstm fwd_, bwd_;
  Tensor sent_w_, sent_b_;
  Tensor word_w_, word_b_;
  Tensor gap_w_, gap_b_;
  std::vector<std::pair<std::string, Tensor>> named_;
};

/// BAD iff probability >= theta.
TagSeq tags_from_probabilities(std::span<const double> bad_probabilities, double theta);

/// Grid search over theta = 0.01 .. 0.99 for the best F1-Multi; ties go to
/// the lower theta. A development set with a single class yields 0.5.
double tune_threshold(const std::vector<std::vector<double>>& bad_probabilities, const std::vector<TagSeq>& truth);

/// Arithmetic mean of the members' outputs.
Prediction ensemble_predict(std::span<const QeModel> models, const Matrix& features);

struct QeTrainingData {
  std::vector<Matrix> features;
  std::vector<ter::QeLabels> labels;
};

/// Trains a fresh model; the normaliser is fitted on `data`. `on_epoch`
/// receives the 1-based epoch and the mean training loss.
QeModel train_qe(const QeTrainingData& data, const QeConfig& config,
                 const std::function<void(int, double)>& on_epoch = {});

}  // namespace blex
