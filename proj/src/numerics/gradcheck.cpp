#include "blex/numerics/gradcheck.hpp"

#include "blex/error.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace blex {

double finite_difference_check(const std::function<Tensor()>& loss, std::span<Tensor> params,
                               double step) {
  const double first = loss().item();
  const double second = loss().item();
  if (first != second) {
    throw NonDeterministicError("finite_difference_check: repeated evaluation gave " +
                                std::to_string(first) + " then " + std::to_string(second));
  }

  for (auto& p : params) p.zero_grad();
  backward(loss());
  std::vector<Matrix> analytic;
  analytic.reserve(params.size());
  for (auto& p : params) {
    analytic.push_back(p.has_grad() ? p.grad() : Matrix::Zero(p.rows(), p.cols()));
    p.zero_grad();
  }

  double worst = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Matrix& value = params[i].mutable_value();
    for (Eigen::Index j = 0; j < value.size(); ++j) {
      const double saved = value.data()[j];
      value.data()[j] = saved + step;
      const double up = loss().item();
      value.data()[j] = saved - step;
      const double down = loss().item();
      value.data()[j] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double a = analytic[i].data()[j];
      const double denom = std::max({1.0, std::abs(a), std::abs(numeric)});
      worst = std::max(worst, std::abs(a - numeric) / denom);
    }
  }
  return worst;
}

}  // namespace blex
