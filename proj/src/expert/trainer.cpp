#include "blex/expert/trainer.hpp"

#include "blex/error.hpp"
#include "blex/serialize.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace blex {
namespace {

io::KeyValues config_to_kv(const ExpertConfig& c) {
  return {{"d_model", std::to_string(c.d_model)},
          {"n_layers", std::to_string(c.n_layers)},
          {"d_ff", std::to_string(c.d_ff)},
          {"n_heads", std::to_string(c.n_heads)},
          {"sigma", io::format_double(c.sigma)},
          {"kl_weight", io::format_double(c.kl_weight)},
          {"source_vocab", std::to_string(c.source_vocab)},
          {"target_vocab", std::to_string(c.target_vocab)},
          {"max_length", std::to_string(c.max_length)},
          {"gap_head", c.gap_head ? "1" : "0"}};
}

ExpertConfig config_from_kv(const io::KeyValues& kv) {
  ExpertConfig c;
  c.d_model = io::get_int(kv, "d_model");
  c.n_layers = io::get_int(kv, "n_layers");
  c.d_ff = io::get_int(kv, "d_ff");
  c.n_heads = io::get_int(kv, "n_heads");
  c.sigma = io::get_double(kv, "sigma");
  c.kl_weight = io::get_double(kv, "kl_weight");
  c.source_vocab = io::get_int(kv, "source_vocab");
  c.target_vocab = io::get_int(kv, "target_vocab");
  c.max_length = io::get_int(kv, "max_length");
  c.gap_head = io::get_int(kv, "gap_head") != 0;
  return c;
}

Tensor latent_penalty(const LatentStates& z) {
  const double n = static_cast<double>(2 * z.length());
  return scale(sum(mul(z.mu_fwd, z.mu_fwd)) + sum(mul(z.mu_bwd, z.mu_bwd)), 0.5 / n);
}

}  // namespace

std::vector<EncodedPair> encode_pairs(const std::vector<SentencePair>& pairs, const Vocab& source_vocab,
                                      const Vocab& target_vocab) {
  std::vector<EncodedPair> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) out.push_back({source_vocab.encode(p.source), target_vocab.encode(p.target)});
  return out;
}

void ExpertBundle::save(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw FormatError("cannot write " + tmp.string());
    io::write_magic(out, "BLEX1");
    io::write_key_values(out, config_to_kv(model.config()));
    const auto& params = model.named_parameters();
    out << "params " << params.size() << '\n';
    for (const auto& [name, p] : params) io::write_matrix(out, name, p.value(), p.rank());
    io::write_tokens(out, "source", source_vocab.tokens());
    io::write_tokens(out, "target", target_vocab.tokens());
    io::write_key_values(out, {{"step", std::to_string(step)}, {"loss", io::format_double(loss)}});
    if (!out) throw FormatError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

ExpertBundle ExpertBundle::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  io::expect_magic(in, "BLEX1");
  const ExpertConfig config = config_from_kv(io::read_key_values(in));
  Rng unused(0);
  ExpertBundle b{ExpertModel(config, unused), {}, {}, 0, 0.0};

  std::string tag;
  std::size_t count = 0;
  std::string header;
  std::getline(in, header);
  std::istringstream hs(header);
  if (!(hs >> tag >> count) || tag != "params") throw FormatError("expected parameter count in " + path.string());
  auto& params = b.model.named_parameters();
  if (count != params.size())
    throw FormatError("checkpoint has " + std::to_string(count) + " parameters, model expects " +
                      std::to_string(params.size()));
  for (auto& [name, p] : params) {
    io::NamedMatrix nm = io::read_matrix(in);
    if (nm.name != name) throw FormatError("parameter order mismatch: expected " + name + ", got " + nm.name);
    if (nm.value.rows() != p.rows() || nm.value.cols() != p.cols())
      throw FormatError("shape mismatch for " + name + ": " + shape_string(nm.value.rows(), nm.value.cols()) +
                        " vs " + p.shape_string());
    p.mutable_value() = std::move(nm.value);
  }
  b.source_vocab = Vocab::from_tokens(io::read_tokens(in, "source"));
  b.target_vocab = Vocab::from_tokens(io::read_tokens(in, "target"));
  if (b.source_vocab.size() != config.source_vocab || b.target_vocab.size() != config.target_vocab)
    throw FormatError("vocabulary sizes disagree with the stored config");
  const auto meta = io::read_key_values(in);
  b.step = io::get_int64(meta, "step");
  b.loss = io::get_double(meta, "loss");
  return b;
}

Tensor expert_loss(const ExpertModel& model, std::span<const int> source, std::span<const int> target,
                   Rng* noise) {
  const LatentStates z = model.encode_target(target, model.encode_source(source), noise);
  Tensor nll = cross_entropy_from_logits(model.reconstruct_logits(z), target);
  return nll + scale(latent_penalty(z), model.config().kl_weight);
}

GapExample make_gap_example(std::span<const int> target, const std::vector<bool>& deleted) {
  if (deleted.size() != target.size()) throw DimensionError("make_gap_example: mask length differs from target");
  GapExample ex;
  ex.gap_targets.push_back(Vocab::kBlank);
  for (std::size_t k = 0; k < target.size(); ++k) {
    if (deleted[k]) {
      if (ex.gap_targets.back() == Vocab::kBlank) ex.gap_targets.back() = target[k];
    } else {
      ex.tokens.push_back(target[k]);
      ex.gap_targets.push_back(Vocab::kBlank);
    }
  }
  if (ex.tokens.empty()) throw ValidationError("make_gap_example: every token deleted");
  return ex;
}

GapExample corrupt_for_gap(std::span<const int> target, double p_del, Rng& rng) {
  if (target.empty()) throw ValidationError("corrupt_for_gap: empty target");
  std::bernoulli_distribution coin(p_del);
  std::vector<bool> deleted(target.size());
  for (std::size_t k = 0; k < target.size(); ++k) deleted[k] = coin(rng);
  if (std::all_of(deleted.begin(), deleted.end(), [](bool d) { return d; })) {
    std::uniform_int_distribution<std::size_t> pick(0, target.size() - 1);
    deleted[pick(rng)] = false;
  }
  return make_gap_example(target, deleted);
}

Tensor gap_expert_loss(const ExpertModel& model, std::span<const int> source, const GapExample& example,
                       Rng* noise) {
  const LatentStates z = model.encode_target(example.tokens, model.encode_source(source), noise);
  Tensor nll = cross_entropy_from_logits(model.reconstruct_logits(z), example.tokens);
  Tensor gap = cross_entropy_from_logits(model.gap_logits(z), example.gap_targets);
  return nll + gap + scale(latent_penalty(z), model.config().kl_weight);
}

std::vector<double> train_expert_epochs(ExpertBundle& bundle, const std::vector<EncodedPair>& data,
                                        const ExpertTrainOptions& options) {
  if (options.epochs < 0 || options.batch_size <= 0) throw ValidationError("expert: epochs >= 0 and batch_size > 0");
  if (data.empty()) throw ValidationError("expert: empty training corpus");
  ExpertModel& model = bundle.model;
  const bool with_gaps = model.config().gap_head;
  if (with_gaps && !(options.p_del >= 0.0 && options.p_del <= 0.5))
    throw ValidationError("expert: p_del must lie in [0, 0.5]");
  Rng rng(options.seed ^ 0x9e3779b97f4a7c15ULL);
  Adam adam(model.parameters(), options.adam);
  std::vector<Tensor> params = model.parameters();
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  std::vector<double> epoch_losses;
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(options.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(options.batch_size));
      const double weight = 1.0 / static_cast<double>(end - start);
      double batch_loss = 0.0;
      for (std::size_t i = start; i < end; ++i) {
        const EncodedPair& ex = data[order[i]];
        Tensor loss = with_gaps ? gap_expert_loss(model, ex.source, corrupt_for_gap(ex.target, options.p_del, rng), &rng)
                                : expert_loss(model, ex.source, ex.target, &rng);
        if (!std::isfinite(loss.item()))
          throw NumericalError("expert training diverged at epoch " + std::to_string(epoch + 1) + ", step " +
                               std::to_string(bundle.step + 1) + ": loss is " + std::to_string(loss.item()));
        batch_loss += weight * loss.item();
        backward(scale(loss, weight));
      }
      clip_grad_norm(params, options.clip_norm);
      adam.step();
      ++bundle.step;
      loss_sum += batch_loss;
      ++batches;
      bundle.loss = batch_loss;
      if (!options.checkpoint_path.empty() && options.checkpoint_every > 0 &&
          bundle.step % options.checkpoint_every == 0)
        bundle.save(options.checkpoint_path);
    }
    const double mean_loss = loss_sum / static_cast<double>(batches);
    epoch_losses.push_back(mean_loss);
    bundle.loss = mean_loss;
    if (options.on_epoch) options.on_epoch(epoch + 1, mean_loss);
    if (!options.checkpoint_path.empty()) bundle.save(options.checkpoint_path);
  }
  return epoch_losses;
}

ExpertBundle train_expert(const std::vector<SentencePair>& corpus, ExpertConfig config,
                          const ExpertTrainOptions& options) {
  std::vector<TokenSeq> sources, targets;
  sources.reserve(corpus.size());
  targets.reserve(corpus.size());
  for (const auto& p : corpus) {
    sources.push_back(p.source);
    targets.push_back(p.target);
  }
  ExpertBundle bundle;
  bundle.source_vocab = Vocab::build(sources);
  bundle.target_vocab = Vocab::build(targets);
  config.source_vocab = bundle.source_vocab.size();
  config.target_vocab = bundle.target_vocab.size();
  Rng init(options.seed);
  bundle.model = ExpertModel(config, init);
  train_expert_epochs(bundle, encode_pairs(corpus, bundle.source_vocab, bundle.target_vocab), options);
  return bundle;
}

double expert_token_nll(const ExpertModel& model, const std::vector<EncodedPair>& data) {
  double total = 0.0;
  std::size_t tokens = 0;
  for (const auto& ex : data) {
    const LatentStates z = model.encode_target(ex.target, model.encode_source(ex.source), nullptr);
    total += cross_entropy_from_logits(model.reconstruct_logits(z), ex.target).item() *
             static_cast<double>(ex.target.size());
    tokens += ex.target.size();
  }
  return tokens == 0 ? 0.0 : total / static_cast<double>(tokens);
}

}  // namespace blex
