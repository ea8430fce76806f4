#include "blex/numerics/tensor.hpp"

#include "blex/error.hpp"

#include <sstream>
#include <unordered_set>

namespace blex {

std::string shape_string(Eigen::Index rows, Eigen::Index cols) {
  std::ostringstream os;
  os << "[" << rows << "x" << cols << "]";
  return os.str();
}

Tensor::Tensor(Matrix value, bool requires_grad, int rank)
    : node_(std::make_shared<detail::Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
  node_->rank = rank;
}

Tensor Tensor::scalar(double v) {
  Matrix m(1, 1);
  m(0, 0) = v;
  return Tensor(std::move(m), false, 0);
}

Tensor Tensor::vector(const Eigen::Ref<const Eigen::RowVectorXd>& v, bool requires_grad) {
  return Tensor(Matrix(v), requires_grad, 1);
}

Tensor Tensor::parameter(Matrix value, int rank) { return Tensor(std::move(value), true, rank); }

Tensor Tensor::zeros(Eigen::Index rows, Eigen::Index cols) {
  return Tensor(Matrix::Zero(rows, cols));
}

const Matrix& Tensor::grad() const {
  if (!node_->grad_set) {
    throw ContractError("tensor " + shape_string() + " has no gradient");
  }
  return node_->grad;
}

void Tensor::zero_grad() {
  node_->grad_set = false;
  node_->grad.resize(0, 0);
}

std::vector<Eigen::Index> Tensor::shape() const {
  switch (node_->rank) {
    case 0:
      return {};
    case 1:
      return {cols()};
    default:
      return {rows(), cols()};
  }
}

std::string Tensor::shape_string() const {
  if (!defined()) return "[undefined]";
  return blex::shape_string(rows(), cols());
}

double Tensor::item() const {
  if (size() != 1) throw ContractError("item() on non-scalar tensor " + shape_string());
  return node_->value(0, 0);
}

Tensor Tensor::detach() const { return Tensor(node_->value, false, node_->rank); }

Tensor Tensor::make_result(Matrix value, std::vector<Tensor> parents,
                           std::function<void(detail::Node&)> propagate, int rank) {
  auto node = std::make_shared<detail::Node>();
  node->value = std::move(value);
  node->rank = rank;
  bool any = false;
  for (const auto& p : parents) any = any || p.requires_grad();
  if (any) {
    node->requires_grad = true;
    node->parents.reserve(parents.size());
    for (auto& p : parents) node->parents.push_back(p.node_);
    node->propagate = std::move(propagate);
  }
  return Tensor(std::move(node));
}

Tape Tape::record(const Tensor& root) {
  Tape tape;
  if (!root.defined() || !root.requires_grad()) return tape;
  std::unordered_set<const detail::Node*> visited;
  // Iterative post-order DFS; a node is emitted after all of its parents.
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  visited.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::Node* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) {
        stack.emplace_back(parent, 0);
      }
    } else {
      tape.order_.push_back(node);
      stack.pop_back();
    }
  }
  return tape;
}

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw ContractError("backward() needs a scalar loss, got " + loss.shape_string());
  }
  if (!std::isfinite(loss.item())) throw NumericalError("non-finite loss in backward()");
  auto& root = *loss.node();
  if (!root.requires_grad) return;
  if (root.consumed) throw ContractError("graph has already been traversed by backward()");
  root.consumed = true;

  Tape tape = Tape::record(loss);
  root.accumulate(Matrix::Ones(1, 1));
  const auto& order = tape.nodes();
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node& node = **it;
    if (node.propagate && node.grad_set) node.propagate(node);
  }
}

}  // namespace blex
