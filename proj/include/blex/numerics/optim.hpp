#pragma once

#include "blex/numerics/tensor.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace blex {

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double epsilon = 1e-9;
};

/// Adam with bias correction. Moment buffers are allocated to match each
/// parameter at construction.
class Adam {
 public:
  explicit Adam(std::vector<Tensor> params, AdamOptions options = {});

  // Applies one update from the current grads, then clears them. Every
  // parameter must have received a gradient since the previous step.
  void step();
  void zero_grad();

  std::int64_t step_count() const { return step_count_; }
  const AdamOptions& options() const { return options_; }
  void set_learning_rate(double lr) { options_.learning_rate = lr; }
  const Matrix& first_moment(std::size_t i) const { return first_[i]; }
  const Matrix& second_moment(std::size_t i) const { return second_[i]; }
  std::span<Tensor> params() { return params_; }

 private:
  std::vector<Tensor> params_;
  std::vector<Matrix> first_;
  std::vector<Matrix> second_;
  AdamOptions options_;
  std::int64_t step_count_ = 0;
};

/// Rescales grads so their global L2 norm is at most `max_norm`; returns the
/// norm before rescaling. Parameters without grads are skipped.
double clip_grad_norm(std::span<Tensor> params, double max_norm);

/// Uniform in +-sqrt(6 / (fan_in + fan_out)).
Matrix xavier_uniform(Eigen::Index rows, Eigen::Index cols, Rng& rng);

/// Standard-normal noise of the given shape.
Matrix gaussian(Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng);

}  // namespace blex
