#pragma once

#include "blex/corpus/segmentation.hpp"
#include "blex/expert/trainer.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace blex {

inline constexpr int kMismatchWidth = 4;

/// (l[m], max l, l[m] - max l, [m != argmax]) with the argmax taken at the
/// lowest index among ties.
Eigen::RowVector4d extract_mismatch(const Eigen::Ref<const Eigen::RowVectorXd>& logits, int token);

/// Per MT token: [z_fwd_k, z_bwd_k, e(m_{k-1}), e(m_{k+1})] with BOS/EOS
/// embeddings at the ends. Noise is off. [T x 4 d_model]
Matrix extract_model_derived(const ExpertModel& model, std::span<const int> source, std::span<const int> mt);

/// Model-derived block followed by the mismatch block. [T x (4 d_model + 4)]
Matrix extract_features(const ExpertModel& model, std::span<const int> source, std::span<const int> mt);

int feature_width(const ExpertConfig& config);

/// Column subsets used for ablations.
enum class FeatureSet { Full, ModelDerived, Mismatch };

FeatureSet parse_feature_set(const std::string& name);
std::string to_string(FeatureSet set);
Matrix select_features(const Matrix& full, FeatureSet set);

/// Averages unit-level rows into word rows. The soft-mismatch column is
/// recomputed from the pooled logits, and the hard-mismatch column becomes 1
/// when any unit of the word disagrees, so it stays binary.
Matrix pool_unit_features(const Matrix& unit_features, const SegmentationMatrix& seg);

struct FeatureRecord {
  std::uint64_t id = 0;
  Matrix features;

  bool operator==(const FeatureRecord&) const = default;
};

/// Extracts one record per (source, mt) pair. When `segmentations` is given
/// (subword mode) it holds one segmentation per MT sentence and rows are
/// pooled to words. Fails when the data looks encoded for another
/// vocabulary, naming `checkpoint_name`.
std::vector<FeatureRecord> extract_dataset(const ExpertBundle& bundle, const std::vector<SentencePair>& source_mt,
                                           const std::string& checkpoint_name,
                                           const std::vector<SegmentationMatrix>* segmentations = nullptr);

// "QEFT1" then per record: u64 id, u32 T, u32 width, row-major doubles.
void write_feature_file(const std::filesystem::path& path, const std::vector<FeatureRecord>& records);
std::vector<FeatureRecord> read_feature_file(const std::filesystem::path& path);

}  // namespace blex
