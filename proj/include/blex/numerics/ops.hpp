#pragma once

#include "blex/numerics/tensor.hpp"

#include <Eigen/SparseCore>

#include <span>
#include <vector>

namespace blex {

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

// Additive constant standing in for -inf on blocked softmax positions.
inline constexpr double kMaskedLogit = -1e9;
inline constexpr double kLayerNormEpsilon = 1e-6;

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor operator+(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a, const Tensor& b);
// Elementwise product.
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
// a [n x m] plus a row vector bias [1 x m] broadcast over rows.
Tensor add_bias(const Tensor& a, const Tensor& bias);

Tensor relu(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor sigmoid(const Tensor& a);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

Tensor concat_cols(std::span<const Tensor> parts);
Tensor concat_rows(std::span<const Tensor> parts);
Tensor slice_rows(const Tensor& a, Eigen::Index begin, Eigen::Index count);
Tensor slice_cols(const Tensor& a, Eigen::Index begin, Eigen::Index count);
// Embedding lookup: row i of the result is table.row(ids[i]).
Tensor gather_rows(const Tensor& table, std::span<const int> ids);

/// Row-wise softmax over admissible positions. Blocked positions get an
/// additive kMaskedLogit before normalisation and are then set to exactly 0.
/// Throws InvalidMaskError when a row has no admissible position.
Tensor masked_softmax(const Tensor& logits, const Mask& allowed);

/// Per-row normalisation to zero mean and unit variance followed by
/// `gain * x + bias`; gain and bias are [1 x d].
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias);

/// Mean over rows of -log softmax(logits)[row, target].
Tensor cross_entropy_from_logits(const Tensor& logits, std::span<const int> targets);

/// Scaled dot-product attention over `heads` column blocks of the already
/// projected queries/keys/values. `allowed` is [Tq x Tk]; pass an empty mask
/// for unrestricted attention.
Tensor multi_head_attention(const Tensor& queries, const Tensor& keys, const Tensor& values,
                            int heads, const Mask& allowed);

/// Constant sparse left factor times a dense tensor: lhs * rhs.
Tensor sparse_matmul(const SparseMatrix& lhs, const Tensor& rhs);

/// Allowed-position masks for the two target streams: a query at k may see
/// keys j <= k (causal) or j >= k (anti-causal).
Mask causal_mask(Eigen::Index length);
Mask anticausal_mask(Eigen::Index length);

namespace kernels {
// Forward masked softmax on a raw matrix; used by the attention op.
Matrix masked_softmax_rows(const Matrix& logits, const Mask& allowed);
}  // namespace kernels

}  // namespace blex
