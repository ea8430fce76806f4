#include "blex/corpus/segmentation.hpp"

#include "blex/error.hpp"

#include <numeric>
#include <string>

namespace blex {

SegmentationMatrix SegmentationMatrix::from_span_lengths(std::span<const int> units_per_word) {
  SegmentationMatrix seg;
  const int units = std::accumulate(units_per_word.begin(), units_per_word.end(), 0);
  seg.matrix_.resize(static_cast<Eigen::Index>(units_per_word.size()), units);
  seg.matrix_.reserve(units);
  seg.spans_.assign(units_per_word.begin(), units_per_word.end());
  seg.owner_.reserve(static_cast<std::size_t>(units));
  int col = 0;
  for (std::size_t word = 0; word < units_per_word.size(); ++word) {
    const int n = units_per_word[word];
    if (n < 1) throw DimensionError("segmentation: word " + std::to_string(word) + " has no units");
    const double weight = 1.0 / static_cast<double>(n);
    seg.matrix_.startVec(static_cast<Eigen::Index>(word));
    for (int k = 0; k < n; ++k, ++col) {
      seg.matrix_.insertBack(static_cast<Eigen::Index>(word), col) = weight;
      seg.owner_.push_back(static_cast<int>(word));
    }
  }
  seg.matrix_.finalize();
  return seg;
}

SegmentationMatrix SegmentationMatrix::identity(int length) {
  std::vector<int> ones(static_cast<std::size_t>(length), 1);
  return from_span_lengths(ones);
}

Tensor pool_features(const Tensor& unit_features, const SegmentationMatrix& seg) {
  return sparse_matmul(seg.matrix(), unit_features);
}

Matrix pool_features(const Matrix& unit_features, const SegmentationMatrix& seg) {
  if (seg.units() != unit_features.rows()) {
    throw DimensionError("pool_features: segmentation " + shape_string(seg.words(), seg.units()) +
                         " vs features " + shape_string(unit_features.rows(), unit_features.cols()));
  }
  return seg.matrix() * unit_features;
}

}  // namespace blex
