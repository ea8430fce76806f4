#pragma once

#include "blex/corpus/synthetic.hpp"
#include "blex/expert/model.hpp"
#include "blex/features/extractor.hpp"
#include "blex/qe/model.hpp"
#include "blex/serialize.hpp"

#include <cstdint>
#include <filesystem>
#include <string>

namespace blex::pipeline {

enum class Tokenization { Word, Bpe };

struct RunConfig {
  std::filesystem::path out = "run";
  // Corpus directory; empty means <out>/data.
  std::filesystem::path data_dir;
  std::uint64_t seed = 1;
  int threads = 1;

  // Generate the corpus with `synth` when the data directory has none.
  bool synthetic = true;
  SyntheticConfig synth;

  Tokenization tokenization = Tokenization::Word;
  int bpe_merges = 200;

  bool task_sentence = true;
  bool task_word = true;
  bool task_gap = true;

  ExpertConfig expert;
  int expert_epochs = 8;
  int expert_batch_size = 16;
  double expert_learning_rate = 1e-3;
  double expert_p_del = 0.1;
  int corpus_copies = 10;

  QeConfig qe;
  FeatureSet features = FeatureSet::Full;
  int ensemble = 1;

  RunConfig();

  std::filesystem::path data() const { return data_dir.empty() ? out / "data" : data_dir; }

  /// Applies one "key=value" setting; unknown keys and bad values throw ValidationError.
  void set(const std::string& key, const std::string& value);
  void validate() const;
  /// Every setting except paths and threads, in a fixed order.
  io::KeyValues snapshot() const;
  /// The subset of the snapshot whose keys start with one of the prefixes.
  io::KeyValues section(std::initializer_list<std::string_view> prefixes) const;
};

/// Reads "key=value" lines; blank lines and lines starting with '#' are skipped.
RunConfig load_run_config(const std::filesystem::path& path);
void apply_config_file(RunConfig& config, const std::filesystem::path& path);

std::string to_string(Tokenization t);

}  // namespace blex::pipeline
