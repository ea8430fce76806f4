#include "blex/features/extractor.hpp"

#include "blex/error.hpp"

#include <spdlog/spdlog.h>

#include <array>
#include <bit>
#include <cstring>
#include <fstream>

namespace blex {
namespace {

static_assert(std::endian::native == std::endian::little, "feature files are little-endian");

constexpr char kFeatureMagic[] = {'Q', 'E', 'F', 'T', '1'};

// Above this share of unknown tokens the dataset is treated as encoded for a
// different checkpoint.
constexpr double kMaxUnknownShare = 0.5;

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
bool get(std::istream& in, T& v) {
  return static_cast<bool>(in.read(reinterpret_cast<char*>(&v), sizeof v));
}

double unknown_share(const std::vector<std::vector<int>>& encoded) {
  std::size_t unk = 0, total = 0;
  for (const auto& s : encoded) {
    for (int id : s) unk += id == Vocab::kUnk;
    total += s.size();
  }
  return total == 0 ? 0.0 : static_cast<double>(unk) / static_cast<double>(total);
}

// [z_fwd, z_bwd, e(prev), e(next)] plus `extra` trailing columns left for the caller.
Matrix model_derived_block(const ExpertModel& model, const LatentStates& z, std::span<const int> mt,
                           Eigen::Index extra) {
  const Matrix& emb = model.target_embedding().value();
  const Eigen::Index T = z.length(), d = model.config().d_model;
  Matrix out(T, 4 * d + extra);
  out.leftCols(d) = z.mu_fwd.value();
  out.middleCols(d, d) = z.mu_bwd.value();
  for (Eigen::Index k = 0; k < T; ++k) {
    const int prev = k == 0 ? Vocab::kBos : mt[static_cast<std::size_t>(k - 1)];
    const int next = k + 1 == T ? Vocab::kEos : mt[static_cast<std::size_t>(k + 1)];
    out.block(k, 2 * d, 1, d) = emb.row(prev);
    out.block(k, 3 * d, 1, d) = emb.row(next);
  }
  return out;
}

}  // namespace

Eigen::RowVector4d extract_mismatch(const Eigen::Ref<const Eigen::RowVectorXd>& logits, int token) {
  if (token < 0 || token >= logits.size())
    throw IndexError("mismatch: token " + std::to_string(token) + " outside vocabulary of " +
                     std::to_string(logits.size()));
  Eigen::Index arg = 0;
  for (Eigen::Index i = 1; i < logits.size(); ++i)
    if (logits(i) > logits(arg)) arg = i;
  const double lm = logits(token), lmax = logits(arg);
  return {lm, lmax, lm - lmax, token == arg ? 0.0 : 1.0};
}

int feature_width(const ExpertConfig& config) { return 4 * config.d_model + kMismatchWidth; }

Matrix extract_model_derived(const ExpertModel& model, std::span<const int> source, std::span<const int> mt) {
  if (mt.empty()) throw ValidationError("features: empty MT sentence");
  const LatentStates z = model.encode_target(mt, model.encode_source(source), nullptr);
  return model_derived_block(model, z, mt, 0);
}

Matrix extract_features(const ExpertModel& model, std::span<const int> source, std::span<const int> mt) {
  if (mt.empty()) throw ValidationError("features: empty MT sentence");
  const LatentStates z = model.encode_target(mt, model.encode_source(source), nullptr);
  const Matrix logits = model.reconstruct_logits(z).value();
  Matrix out = model_derived_block(model, z, mt, kMismatchWidth);
  const Eigen::Index d4 = 4 * model.config().d_model;
  for (Eigen::Index k = 0; k < out.rows(); ++k)
    out.block(k, d4, 1, kMismatchWidth) = extract_mismatch(logits.row(k), mt[static_cast<std::size_t>(k)]);
  return out;
}

FeatureSet parse_feature_set(const std::string& name) {
  if (name == "full" || name == "md+mm") return FeatureSet::Full;
  if (name == "md") return FeatureSet::ModelDerived;
  if (name == "mm") return FeatureSet::Mismatch;
  throw ValidationError("unknown feature set '" + name + "' (expected full, md or mm)");
}

std::string to_string(FeatureSet set) {
  switch (set) {
    case FeatureSet::Full: return "full";
    case FeatureSet::ModelDerived: return "md";
    case FeatureSet::Mismatch: return "mm";
  }
  return "full";
}

Matrix select_features(const Matrix& full, FeatureSet set) {
  if (full.cols() <= kMismatchWidth) throw DimensionError("select_features: too few columns " + std::to_string(full.cols()));
  switch (set) {
    case FeatureSet::Full: return full;
    case FeatureSet::ModelDerived: return full.leftCols(full.cols() - kMismatchWidth);
    case FeatureSet::Mismatch: return full.rightCols(kMismatchWidth);
  }
  return full;
}

Matrix pool_unit_features(const Matrix& unit_features, const SegmentationMatrix& seg) {
  Matrix words = pool_features(unit_features, seg);
  const Eigen::Index flag = unit_features.cols() - 1;
  words.col(flag - 1) = words.col(flag - 3) - words.col(flag - 2);
  for (Eigen::Index j = 0; j < unit_features.rows(); ++j) {
    const int w = seg.word_of(static_cast<int>(j));
    if (unit_features(j, flag) != 0.0) words(w, flag) = 1.0;
  }
  for (Eigen::Index w = 0; w < words.rows(); ++w)
    if (words(w, flag) != 1.0) words(w, flag) = 0.0;
  return words;
}

std::vector<FeatureRecord> extract_dataset(const ExpertBundle& bundle, const std::vector<SentencePair>& source_mt,
                                           const std::string& checkpoint_name,
                                           const std::vector<SegmentationMatrix>* segmentations) {
  if (segmentations != nullptr && segmentations->size() != source_mt.size())
    throw DimensionError("features: " + std::to_string(segmentations->size()) + " segmentations for " +
                         std::to_string(source_mt.size()) + " sentences");
  std::vector<std::vector<int>> sources, mts;
  sources.reserve(source_mt.size());
  mts.reserve(source_mt.size());
  for (const auto& p : source_mt) {
    sources.push_back(bundle.source_vocab.encode(p.source));
    mts.push_back(bundle.target_vocab.encode(p.target));
  }
  const double src_unk = unknown_share(sources), mt_unk = unknown_share(mts);
  if (src_unk > kMaxUnknownShare || mt_unk > kMaxUnknownShare)
    throw ValidationError("dataset vocabulary does not match checkpoint " + checkpoint_name + ": " +
                          std::to_string(static_cast<int>(100 * src_unk)) + "% of source and " +
                          std::to_string(static_cast<int>(100 * mt_unk)) + "% of MT tokens are unknown");

  std::vector<FeatureRecord> records;
  records.reserve(source_mt.size());
  for (std::size_t i = 0; i < source_mt.size(); ++i) {
    Matrix f = extract_features(bundle.model, sources[i], mts[i]);
    if (segmentations != nullptr) {
      const auto& seg = (*segmentations)[i];
      if (seg.units() != f.rows())
        throw DimensionError("features: sentence " + std::to_string(i) + " has " + std::to_string(f.rows()) +
                             " units but its segmentation covers " + std::to_string(seg.units()));
      f = pool_unit_features(f, seg);
    }
    records.push_back({static_cast<std::uint64_t>(i), std::move(f)});
  }
  return records;
}

void write_feature_file(const std::filesystem::path& path, const std::vector<FeatureRecord>& records) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  out.write(kFeatureMagic, sizeof kFeatureMagic);
  for (const auto& r : records) {
    put<std::uint64_t>(out, r.id);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(r.features.rows()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(r.features.cols()));
    out.write(reinterpret_cast<const char*>(r.features.data()),
              static_cast<std::streamsize>(r.features.size() * sizeof(double)));
  }
  if (!out) throw FormatError("write failed for " + path.string());
}

std::vector<FeatureRecord> read_feature_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  char magic[sizeof kFeatureMagic] = {};
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kFeatureMagic, sizeof magic) != 0)
    throw FormatError(path.string() + ": not a feature file");
  std::vector<FeatureRecord> records;
  std::uint64_t id = 0;
  while (get(in, id)) {
    std::uint32_t T = 0, width = 0;
    if (!get(in, T) || !get(in, width)) throw FormatError(path.string() + ": truncated record header");
    FeatureRecord r{id, Matrix(T, width)};
    if (!in.read(reinterpret_cast<char*>(r.features.data()),
                 static_cast<std::streamsize>(r.features.size() * sizeof(double))))
      throw FormatError(path.string() + ": truncated record " + std::to_string(id));
    if (!records.empty() && records.front().features.cols() != r.features.cols())
      throw FormatError(path.string() + ": record " + std::to_string(id) + " has width " + std::to_string(width));
    records.push_back(std::move(r));
  }
  return records;
}

}  // namespace blex
