#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace blex {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Mask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Rng = std::mt19937_64;

namespace detail {

struct Node {
  Matrix value;
  Matrix grad;
  bool requires_grad = false;
  bool grad_set = false;
  bool consumed = false;
  int rank = 2;
  std::vector<std::shared_ptr<Node>> parents;
  // Pushes this node's grad into its parents' grads.
  std::function<void(Node&)> propagate;

  template <typename Derived>
  void accumulate(const Eigen::MatrixBase<Derived>& g) {
    if (!grad_set) {
      grad = g;
      grad_set = true;
    } else {
      grad += g;
    }
  }
};

}  // namespace detail

/// Dense real array of rank 0, 1 or 2 that can take part in reverse-mode
/// differentiation. Copies share the underlying node; `detach()` does not.
///
/// Rank-1 tensors of width d are stored as 1 x d rows and rank-0 tensors as
/// 1 x 1, so every operation works on a row-major matrix.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Matrix value, bool requires_grad = false, int rank = 2);

  static Tensor scalar(double v);
  static Tensor vector(const Eigen::Ref<const Eigen::RowVectorXd>& v, bool requires_grad = false);
  static Tensor parameter(Matrix value, int rank = 2);
  static Tensor zeros(Eigen::Index rows, Eigen::Index cols);

  bool defined() const { return node_ != nullptr; }
  const Matrix& value() const { return node_->value; }
  // For optimizers and finite-difference probes only; never mutate a value
  // that already feeds a recorded graph.
  Matrix& mutable_value() { return node_->value; }

  bool requires_grad() const { return node_->requires_grad; }
  bool has_grad() const { return node_->grad_set; }
  const Matrix& grad() const;
  void zero_grad();

  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }
  Eigen::Index size() const { return node_->value.size(); }
  int rank() const { return node_->rank; }
  std::vector<Eigen::Index> shape() const;
  std::string shape_string() const;

  double item() const;
  Tensor detach() const;

  const std::shared_ptr<detail::Node>& node() const { return node_; }

  // Builds an op result. Records parents and the propagation rule only when
  // some parent requires a gradient.
  static Tensor make_result(Matrix value, std::vector<Tensor> parents,
                            std::function<void(detail::Node&)> propagate, int rank = 2);

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;
};

/// Topologically ordered record of the operations reachable from a root.
/// Every node appears after all of its inputs.
class Tape {
 public:
  static Tape record(const Tensor& root);

  const std::vector<detail::Node*>& nodes() const { return order_; }
  std::size_t size() const { return order_.size(); }

 private:
  std::vector<detail::Node*> order_;
};

/// Populates grads of every requires_grad tensor reachable from `loss`.
/// Gradients accumulate into existing parameter grads; a graph can be
/// traversed once.
void backward(const Tensor& loss);

std::string shape_string(Eigen::Index rows, Eigen::Index cols);

}  // namespace blex
