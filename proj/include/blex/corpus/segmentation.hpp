#pragma once

#include "blex/numerics/ops.hpp"

#include <span>
#include <vector>

namespace blex {

/// Sparse words x units matrix whose row i averages the subword units of
/// word i: S(i, j) = 1 / n_i when unit j belongs to word i, else 0.
class SegmentationMatrix {
 public:
  SegmentationMatrix() = default;
  /// Consecutive words own consecutive unit spans of the given lengths (each >= 1).
  static SegmentationMatrix from_span_lengths(std::span<const int> units_per_word);
  static SegmentationMatrix identity(int length);

  Eigen::Index words() const { return matrix_.rows(); }
  Eigen::Index units() const { return matrix_.cols(); }
  const SparseMatrix& matrix() const { return matrix_; }
  const std::vector<int>& span_lengths() const { return spans_; }
  // Word owning unit j.
  int word_of(int unit) const { return owner_[static_cast<std::size_t>(unit)]; }

 private:
  SparseMatrix matrix_;
  std::vector<int> spans_;
  std::vector<int> owner_;
};

/// Word-level features S * F for unit-level features F [units x d].
Tensor pool_features(const Tensor& unit_features, const SegmentationMatrix& seg);
Matrix pool_features(const Matrix& unit_features, const SegmentationMatrix& seg);

}  // namespace blex
