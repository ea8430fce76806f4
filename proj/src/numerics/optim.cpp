#include "blex/numerics/optim.hpp"

#include "blex/error.hpp"

#include <cmath>
#include <string>

namespace blex {

Adam::Adam(std::vector<Tensor> params, AdamOptions options)
    : params_(std::move(params)), options_(options) {
  first_.reserve(params_.size());
  second_.reserve(params_.size());
  for (const auto& p : params_) {
    if (!p.requires_grad()) throw ContractError("Adam: parameter does not require grad");
    first_.push_back(Matrix::Zero(p.rows(), p.cols()));
    second_.push_back(Matrix::Zero(p.rows(), p.cols()));
  }
}

void Adam::step() {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (!params_[i].has_grad()) {
      throw ContractError("Adam: parameter " + std::to_string(i) + " " +
                          params_[i].shape_string() + " has no gradient");
    }
    if (!params_[i].grad().allFinite()) {
      throw NumericalError("Adam: non-finite gradient for parameter " + std::to_string(i));
    }
  }
  ++step_count_;
  const auto& o = options_;
  const double t = static_cast<double>(step_count_);
  const double correction1 = 1.0 - std::pow(o.beta1, t);
  const double correction2 = 1.0 - std::pow(o.beta2, t);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const Matrix& g = params_[i].grad();
    first_[i] = o.beta1 * first_[i] + (1.0 - o.beta1) * g;
    second_[i] = o.beta2 * second_[i] + (1.0 - o.beta2) * g.cwiseAbs2();
    auto m_hat = first_[i].array() / correction1;
    auto v_hat = second_[i].array() / correction2;
    params_[i].mutable_value().array() -= o.learning_rate * m_hat / (v_hat.sqrt() + o.epsilon);
  }
  zero_grad();
}

void Adam::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

double clip_grad_norm(std::span<Tensor> params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params) {
    if (p.has_grad()) sq += p.grad().squaredNorm();
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double factor = max_norm / norm;
    for (auto& p : params) {
      if (p.has_grad()) p.node()->grad *= factor;
    }
  }
  return norm;
}

Matrix xavier_uniform(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

Matrix gaussian(Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

}  // namespace blex
