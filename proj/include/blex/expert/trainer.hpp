#pragma once

#include "blex/corpus/corpus.hpp"
#include "blex/corpus/vocab.hpp"
#include "blex/expert/model.hpp"
#include "blex/numerics/optim.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

namespace blex {

struct EncodedPair {
  std::vector<int> source;
  std::vector<int> target;
};

std::vector<EncodedPair> encode_pairs(const std::vector<SentencePair>& pairs, const Vocab& source_vocab,
                                      const Vocab& target_vocab);

/// Trained expert with its vocabularies and training metadata.
struct ExpertBundle {
  ExpertModel model;
  Vocab source_vocab;
  Vocab target_vocab;
  std::int64_t step = 0;
  double loss = 0.0;

  // "BLEX1" file: config block, named parameter blobs, vocabularies, metadata.
  void save(const std::filesystem::path& path) const;
  static ExpertBundle load(const std::filesystem::path& path);
};

struct ExpertTrainOptions {
  int epochs = 10;
  int batch_size = 16;
  AdamOptions adam;
  double clip_norm = 5.0;
  std::uint64_t seed = 1;
  // Token deletion rate when building gap-expert examples.
  double p_del = 0.1;
  // Written every `checkpoint_every` optimizer steps and after each epoch
  // when the path is non-empty.
  std::filesystem::path checkpoint_path;
  int checkpoint_every = 0;
  std::function<void(int epoch, double mean_loss)> on_epoch;
};

/// Token NLL (mean over positions) plus kl_weight * 0.5 * mean ||mu||^2 for one pair.
Tensor expert_loss(const ExpertModel& model, std::span<const int> source, std::span<const int> target,
                   Rng* noise);

/// A target with some tokens removed and, for every gap of the shortened
/// sequence, the token that belongs there (the first one when several were
/// removed together) or BLANK.
struct GapExample {
  std::vector<int> tokens;
  std::vector<int> gap_targets;
};

GapExample make_gap_example(std::span<const int> target, const std::vector<bool>& deleted);
/// Deletes each token with probability p_del, keeping at least one token.
GapExample corrupt_for_gap(std::span<const int> target, double p_del, Rng& rng);

/// Token NLL on the corrupted sequence plus mean gap-token NLL.
Tensor gap_expert_loss(const ExpertModel& model, std::span<const int> source, const GapExample& example,
                       Rng* noise);

/// Builds vocabularies from the corpus and trains a fresh expert. With
/// config.gap_head the examples are corrupted afresh each epoch and the
/// gap-token loss is added.
ExpertBundle train_expert(const std::vector<SentencePair>& corpus, ExpertConfig config,
                          const ExpertTrainOptions& options);

/// Continues training an existing bundle on already encoded pairs.
std::vector<double> train_expert_epochs(ExpertBundle& bundle, const std::vector<EncodedPair>& data,
                                        const ExpertTrainOptions& options);

/// Mean per-token NLL of the deterministic (noise-free) model over `data`.
double expert_token_nll(const ExpertModel& model, const std::vector<EncodedPair>& data);

}  // namespace blex
