#include "blex/numerics/ops.hpp"

#include "blex/error.hpp"

#include <cmath>
#include <string>

namespace blex {
namespace {

detail::Node& parent(detail::Node& node, std::size_t i) { return *node.parents[i]; }

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + a.shape_string() + " vs " +
                         b.shape_string());
  }
}

int binary_rank(const Tensor& a, const Tensor& b) { return std::max(a.rank(), b.rank()); }

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner dimensions differ " + a.shape_string() + " x " +
                         b.shape_string());
  }
  Matrix out = a.value() * b.value();
  return Tensor::make_result(std::move(out), {a, b}, [](detail::Node& n) {
    auto& pa = parent(n, 0);
    auto& pb = parent(n, 1);
    if (pa.requires_grad) pa.accumulate(n.grad * pb.value.transpose());
    if (pb.requires_grad) pb.accumulate(pa.value.transpose() * n.grad);
  });
}

Tensor operator+(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  return Tensor::make_result(
      a.value() + b.value(), {a, b},
      [](detail::Node& n) {
        for (std::size_t i = 0; i < 2; ++i) {
          if (parent(n, i).requires_grad) parent(n, i).accumulate(n.grad);
        }
      },
      binary_rank(a, b));
}

Tensor operator-(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  return Tensor::make_result(
      a.value() - b.value(), {a, b},
      [](detail::Node& n) {
        if (parent(n, 0).requires_grad) parent(n, 0).accumulate(n.grad);
        if (parent(n, 1).requires_grad) parent(n, 1).accumulate(-n.grad);
      },
      binary_rank(a, b));
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Matrix out = a.value().cwiseProduct(b.value());
  return Tensor::make_result(
      std::move(out), {a, b},
      [](detail::Node& n) {
        auto& pa = parent(n, 0);
        auto& pb = parent(n, 1);
        if (pa.requires_grad) pa.accumulate(n.grad.cwiseProduct(pb.value));
        if (pb.requires_grad) pb.accumulate(n.grad.cwiseProduct(pa.value));
      },
      binary_rank(a, b));
}

Tensor scale(const Tensor& a, double factor) {
  return Tensor::make_result(
      a.value() * factor, {a},
      [factor](detail::Node& n) { parent(n, 0).accumulate(n.grad * factor); }, a.rank());
}

Tensor add_bias(const Tensor& a, const Tensor& bias) {
  if (bias.rows() != 1 || bias.cols() != a.cols()) {
    throw DimensionError("add_bias: bias " + bias.shape_string() + " does not fit " +
                         a.shape_string());
  }
  Matrix out = a.value().rowwise() + bias.value().row(0);
  return Tensor::make_result(std::move(out), {a, bias}, [](detail::Node& n) {
    if (parent(n, 0).requires_grad) parent(n, 0).accumulate(n.grad);
    if (parent(n, 1).requires_grad) parent(n, 1).accumulate(n.grad.colwise().sum());
  });
}

Tensor relu(const Tensor& a) {
  Matrix out = a.value().cwiseMax(0.0);
  return Tensor::make_result(
      std::move(out), {a},
      [](detail::Node& n) {
        auto& pa = parent(n, 0);
        pa.accumulate((pa.value.array() > 0.0).cast<double>().matrix().cwiseProduct(n.grad));
      },
      a.rank());
}

Tensor tanh(const Tensor& a) {
  Matrix out = a.value().array().tanh().matrix();
  return Tensor::make_result(
      std::move(out), {a},
      [](detail::Node& n) {
        parent(n, 0).accumulate((1.0 - n.value.array().square()).matrix().cwiseProduct(n.grad));
      },
      a.rank());
}

Tensor sigmoid(const Tensor& a) {
  // Split by sign so exp never overflows.
  Matrix out = a.value().unaryExpr([](double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
  });
  return Tensor::make_result(
      std::move(out), {a},
      [](detail::Node& n) {
        parent(n, 0).accumulate(
            (n.value.array() * (1.0 - n.value.array())).matrix().cwiseProduct(n.grad));
      },
      a.rank());
}

Tensor sum(const Tensor& a) {
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return Tensor::make_result(
      std::move(out), {a},
      [](detail::Node& n) {
        auto& pa = parent(n, 0);
        pa.accumulate(Matrix::Constant(pa.value.rows(), pa.value.cols(), n.grad(0, 0)));
      },
      0);
}

Tensor mean(const Tensor& a) {
  if (a.size() == 0) throw DimensionError("mean of empty tensor");
  Matrix out(1, 1);
  out(0, 0) = a.value().mean();
  return Tensor::make_result(
      std::move(out), {a},
      [](detail::Node& n) {
        auto& pa = parent(n, 0);
        const double g = n.grad(0, 0) / static_cast<double>(pa.value.size());
        pa.accumulate(Matrix::Constant(pa.value.rows(), pa.value.cols(), g));
      },
      0);
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const Eigen::Index rows = parts.front().rows();
  Eigen::Index cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows) {
      throw DimensionError("concat_cols: row counts differ " + parts.front().shape_string() +
                           " vs " + p.shape_string());
    }
    cols += p.cols();
  }
  Matrix out(rows, cols);
  std::vector<Eigen::Index> offsets;
  offsets.reserve(parts.size());
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    offsets.push_back(at);
    out.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  return Tensor::make_result(std::move(out), {parts.begin(), parts.end()},
                             [offsets](detail::Node& n) {
                               for (std::size_t i = 0; i < n.parents.size(); ++i) {
                                 auto& p = parent(n, i);
                                 if (!p.requires_grad) continue;
                                 p.accumulate(n.grad.middleCols(offsets[i], p.value.cols()));
                               }
                             });
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  const Eigen::Index cols = parts.front().cols();
  Eigen::Index rows = 0;
  for (const auto& p : parts) {
    if (p.cols() != cols) {
      throw DimensionError("concat_rows: column counts differ " + parts.front().shape_string() +
                           " vs " + p.shape_string());
    }
    rows += p.rows();
  }
  Matrix out(rows, cols);
  std::vector<Eigen::Index> offsets;
  offsets.reserve(parts.size());
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    offsets.push_back(at);
    out.middleRows(at, p.rows()) = p.value();
    at += p.rows();
  }
  return Tensor::make_result(std::move(out), {parts.begin(), parts.end()},
                             [offsets](detail::Node& n) {
                               for (std::size_t i = 0; i < n.parents.size(); ++i) {
                                 auto& p = parent(n, i);
                                 if (!p.requires_grad) continue;
                                 p.accumulate(n.grad.middleRows(offsets[i], p.value.rows()));
                               }
                             });
}

Tensor slice_rows(const Tensor& a, Eigen::Index begin, Eigen::Index count) {
  if (begin < 0 || count < 0 || begin + count > a.rows()) {
    throw DimensionError("slice_rows: [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") outside " + a.shape_string());
  }
  return Tensor::make_result(a.value().middleRows(begin, count), {a},
                             [begin, count](detail::Node& n) {
                               auto& pa = parent(n, 0);
                               Matrix g = Matrix::Zero(pa.value.rows(), pa.value.cols());
                               g.middleRows(begin, count) = n.grad;
                               pa.accumulate(g);
                             });
}

Tensor slice_cols(const Tensor& a, Eigen::Index begin, Eigen::Index count) {
  if (begin < 0 || count < 0 || begin + count > a.cols()) {
    throw DimensionError("slice_cols: [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") outside " + a.shape_string());
  }
  return Tensor::make_result(a.value().middleCols(begin, count), {a},
                             [begin, count](detail::Node& n) {
                               auto& pa = parent(n, 0);
                               Matrix g = Matrix::Zero(pa.value.rows(), pa.value.cols());
                               g.middleCols(begin, count) = n.grad;
                               pa.accumulate(g);
                             });
}

Tensor gather_rows(const Tensor& table, std::span<const int> ids) {
  Matrix out(static_cast<Eigen::Index>(ids.size()), table.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= table.rows()) {
      throw IndexError("gather_rows: id " + std::to_string(ids[i]) + " outside table " +
                       table.shape_string());
    }
    out.row(static_cast<Eigen::Index>(i)) = table.value().row(ids[i]);
  }
  std::vector<int> rows(ids.begin(), ids.end());
  return Tensor::make_result(std::move(out), {table}, [rows](detail::Node& n) {
    auto& pt = parent(n, 0);
    Matrix g = Matrix::Zero(pt.value.rows(), pt.value.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) g.row(rows[i]) += n.grad.row(static_cast<Eigen::Index>(i));
    pt.accumulate(g);
  });
}

namespace kernels {

Matrix masked_softmax_rows(const Matrix& logits, const Mask& allowed) {
  const bool masked = allowed.size() != 0;
  if (masked && (allowed.rows() != logits.rows() || allowed.cols() != logits.cols())) {
    throw DimensionError("masked_softmax: mask " + shape_string(allowed.rows(), allowed.cols()) +
                         " does not match logits " + shape_string(logits.rows(), logits.cols()));
  }
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    auto row = out.row(r);
    row = logits.row(r);
    if (masked) {
      if (!allowed.row(r).any()) {
        throw InvalidMaskError("masked_softmax: row " + std::to_string(r) +
                               " has every position blocked");
      }
      for (Eigen::Index c = 0; c < row.size(); ++c) {
        if (!allowed(r, c)) row(c) += kMaskedLogit;
      }
    }
    const double shift = row.maxCoeff();
    row = (row.array() - shift).exp().matrix();
    if (masked) {
      for (Eigen::Index c = 0; c < row.size(); ++c) {
        if (!allowed(r, c)) row(c) = 0.0;
      }
    }
    row /= row.sum();
  }
  return out;
}

}  // namespace kernels

namespace {

// d(softmax)^T g for each row, given probabilities p.
Matrix softmax_rows_backward(const Matrix& p, const Matrix& g) {
  Eigen::VectorXd dots = p.cwiseProduct(g).rowwise().sum();
  return p.cwiseProduct(g - dots.replicate(1, g.cols()));
}

}  // namespace

Tensor masked_softmax(const Tensor& logits, const Mask& allowed) {
  if (allowed.size() == 0 && logits.cols() == 0) {
    throw InvalidMaskError("masked_softmax: empty rows");
  }
  Matrix out = kernels::masked_softmax_rows(logits.value(), allowed);
  return Tensor::make_result(
      std::move(out), {logits},
      [](detail::Node& n) { parent(n, 0).accumulate(softmax_rows_backward(n.value, n.grad)); },
      logits.rank());
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias) {
  const Eigen::Index d = x.cols();
  if (d < 1) throw DimensionError("layer_norm: empty feature dimension");
  if (gain.rows() != 1 || gain.cols() != d || bias.rows() != 1 || bias.cols() != d) {
    throw DimensionError("layer_norm: gain " + gain.shape_string() + " / bias " +
                         bias.shape_string() + " do not fit " + x.shape_string());
  }
  const Matrix& xv = x.value();
  Eigen::VectorXd mu = xv.rowwise().mean();
  Matrix centered = xv.colwise() - mu;
  Eigen::VectorXd var = centered.array().square().rowwise().mean();
  Eigen::VectorXd inv_std = (var.array() + kLayerNormEpsilon).rsqrt();
  Matrix normalized = inv_std.asDiagonal() * centered;
  Matrix out = (normalized.array().rowwise() * gain.value().row(0).array()).matrix();
  out.rowwise() += bias.value().row(0);

  return Tensor::make_result(
      std::move(out), {x, gain, bias},
      [normalized = std::move(normalized), inv_std = std::move(inv_std)](detail::Node& n) {
        auto& px = parent(n, 0);
        auto& pg = parent(n, 1);
        auto& pb = parent(n, 2);
        if (pg.requires_grad) pg.accumulate(n.grad.cwiseProduct(normalized).colwise().sum());
        if (pb.requires_grad) pb.accumulate(n.grad.colwise().sum());
        if (px.requires_grad) {
          Matrix dn = (n.grad.array().rowwise() * pg.value.row(0).array()).matrix();
          Eigen::VectorXd mean_dn = dn.rowwise().mean();
          Eigen::VectorXd mean_dn_n = dn.cwiseProduct(normalized).rowwise().mean();
          Matrix dx = dn;
          dx.colwise() -= mean_dn;
          dx -= mean_dn_n.asDiagonal() * normalized;
          px.accumulate(inv_std.asDiagonal() * dx);
        }
      },
      x.rank());
}

Tensor cross_entropy_from_logits(const Tensor& logits, std::span<const int> targets) {
  const Eigen::Index rows = logits.rows();
  const Eigen::Index classes = logits.cols();
  if (static_cast<Eigen::Index>(targets.size()) != rows) {
    throw DimensionError("cross_entropy: " + std::to_string(targets.size()) +
                         " targets for logits " + logits.shape_string());
  }
  if (rows == 0) throw DimensionError("cross_entropy: no rows");
  Matrix probs(rows, classes);
  double total = 0.0;
  for (Eigen::Index r = 0; r < rows; ++r) {
    const int t = targets[static_cast<std::size_t>(r)];
    if (t < 0 || t >= classes) {
      throw IndexError("cross_entropy: target " + std::to_string(t) + " outside [0, " +
                       std::to_string(classes) + ")");
    }
    const auto row = logits.value().row(r);
    const double shift = row.maxCoeff();
    auto e = (row.array() - shift).exp();
    const double z = e.sum();
    probs.row(r) = e.matrix() / z;
    total += shift + std::log(z) - row(t);
  }
  Matrix out(1, 1);
  out(0, 0) = total / static_cast<double>(rows);
  std::vector<int> kept(targets.begin(), targets.end());
  return Tensor::make_result(
      std::move(out), {logits},
      [probs = std::move(probs), kept = std::move(kept)](detail::Node& n) {
        Matrix g = probs;
        for (std::size_t r = 0; r < kept.size(); ++r) g(static_cast<Eigen::Index>(r), kept[r]) -= 1.0;
        g *= n.grad(0, 0) / static_cast<double>(kept.size());
        parent(n, 0).accumulate(g);
      },
      0);
}

Tensor multi_head_attention(const Tensor& queries, const Tensor& keys, const Tensor& values,
                            int heads, const Mask& allowed) {
  const Eigen::Index d = queries.cols();
  if (heads < 1 || d % heads != 0) {
    throw DimensionError("attention: width " + std::to_string(d) + " not divisible into " +
                         std::to_string(heads) + " heads");
  }
  if (keys.cols() != d || values.cols() != d || keys.rows() != values.rows()) {
    throw DimensionError("attention: q " + queries.shape_string() + ", k " + keys.shape_string() +
                         ", v " + values.shape_string());
  }
  const Eigen::Index dh = d / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  const Matrix& q = queries.value();
  const Matrix& k = keys.value();
  const Matrix& v = values.value();

  Matrix out(q.rows(), d);
  std::vector<Matrix> probs(static_cast<std::size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    const Eigen::Index c = h * dh;
    Matrix scores = (q.middleCols(c, dh) * k.middleCols(c, dh).transpose()) * inv_sqrt;
    probs[h] = kernels::masked_softmax_rows(scores, allowed);
    out.middleCols(c, dh) = probs[h] * v.middleCols(c, dh);
  }

  return Tensor::make_result(
      std::move(out), {queries, keys, values},
      [probs = std::move(probs), dh, inv_sqrt](detail::Node& n) {
        auto& pq = parent(n, 0);
        auto& pk = parent(n, 1);
        auto& pv = parent(n, 2);
        Matrix dq = Matrix::Zero(pq.value.rows(), pq.value.cols());
        Matrix dk = Matrix::Zero(pk.value.rows(), pk.value.cols());
        Matrix dv = Matrix::Zero(pv.value.rows(), pv.value.cols());
        for (std::size_t h = 0; h < probs.size(); ++h) {
          const Eigen::Index c = static_cast<Eigen::Index>(h) * dh;
          const Matrix& p = probs[h];
          Matrix go = n.grad.middleCols(c, dh);
          dv.middleCols(c, dh) = p.transpose() * go;
          Matrix dp = go * pv.value.middleCols(c, dh).transpose();
          Matrix ds = softmax_rows_backward(p, dp) * inv_sqrt;
          dq.middleCols(c, dh) = ds * pk.value.middleCols(c, dh);
          dk.middleCols(c, dh) = ds.transpose() * pq.value.middleCols(c, dh);
        }
        if (pq.requires_grad) pq.accumulate(dq);
        if (pk.requires_grad) pk.accumulate(dk);
        if (pv.requires_grad) pv.accumulate(dv);
      });
}

Tensor sparse_matmul(const SparseMatrix& lhs, const Tensor& rhs) {
  if (lhs.cols() != rhs.rows()) {
    throw DimensionError("sparse_matmul: " + shape_string(lhs.rows(), lhs.cols()) + " x " +
                         rhs.shape_string());
  }
  Matrix out = lhs * rhs.value();
  return Tensor::make_result(std::move(out), {rhs}, [lhs](detail::Node& n) {
    parent(n, 0).accumulate(Matrix(lhs.transpose() * n.grad));
  });
}

Mask causal_mask(Eigen::Index length) {
  Mask m(length, length);
  for (Eigen::Index r = 0; r < length; ++r)
    for (Eigen::Index c = 0; c < length; ++c) m(r, c) = c <= r;
  return m;
}

Mask anticausal_mask(Eigen::Index length) {
  Mask m(length, length);
  for (Eigen::Index r = 0; r < length; ++r)
    for (Eigen::Index c = 0; c < length; ++c) m(r, c) = c >= r;
  return m;
}

}  // namespace blex
