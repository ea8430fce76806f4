#pragma once

#include "blex/numerics/ops.hpp"

#include <span>
#include <string>
#include <utility>
#include <vector>

namespace blex {

struct ExpertConfig {
  int d_model = 64;
  int n_layers = 2;
  int d_ff = 512;
  int n_heads = 8;
  double sigma = 0.1;
  double kl_weight = 1e-3;
  int source_vocab = 0;
  int target_vocab = 0;
  int max_length = 128;
  // Adds the gap-token head over adjacent latent pairs.
  bool gap_head = false;

  void validate() const;
  bool operator==(const ExpertConfig&) const = default;
};

/// Per-position latent states of the two target streams, [T x d_model] each.
/// Row k of the forward stream sees the source and t_{<k}; row k of the
/// backward stream sees the source and t_{>k}.
struct LatentStates {
  Tensor z_fwd;
  Tensor z_bwd;
  Tensor mu_fwd;
  Tensor mu_bwd;

  Eigen::Index length() const { return z_fwd.rows(); }
};

/// Transformer source encoder, forward and backward target self-attention
/// streams with cross-attention to the source, a Gaussian latent layer, and
/// a token reconstructor over [z_fwd; z_bwd]. Optionally a gap head over
/// [z_fwd_k; z_bwd_k; z_fwd_{k+1}; z_bwd_{k+1}].
class ExpertModel {
 public:
  ExpertModel() = default;
  ExpertModel(const ExpertConfig& config, Rng& rng);

  const ExpertConfig& config() const { return config_; }

  /// Source memory [|s| x d_model]. Inputs longer than max_length are truncated.
  Tensor encode_source(std::span<const int> source) const;

  /// Latent states for a target sequence. `noise` draws z = mu + sigma * eta;
  /// pass nullptr for the deterministic states used at inference.
  LatentStates encode_target(std::span<const int> target, const Tensor& memory,
                             Rng* noise = nullptr) const;

  /// Token logits [T x target_vocab].
  Tensor reconstruct_logits(const LatentStates& z) const;

  /// Gap-token logits [(T+1) x target_vocab]; boundary states are zero.
  Tensor gap_logits(const LatentStates& z) const;

  /// Raw target embedding rows (no scaling, no position signal).
  const Tensor& target_embedding() const { return tgt_embed_; }

  std::vector<std::pair<std::string, Tensor>>& named_parameters() { return named_; }
  const std::vector<std::pair<std::string, Tensor>>& named_parameters() const { return named_; }
  std::vector<Tensor> parameters() const;

 private:
  struct Attention {
    Tensor wq, wk, wv, wo, bo;
  };
  struct Norm {
    Tensor gain, bias;
  };
  struct FeedForward {
    Tensor w1, b1, w2, b2;
  };
  struct EncoderLayer {
    Attention self_attn;
    Norm norm1;
    FeedForward ff;
    Norm norm2;
  };
  struct StreamLayer {
    Attention self_attn;
    Norm norm1;
    Attention cross_attn;
    Norm norm2;
    FeedForward ff;
    Norm norm3;
  };

  Attention make_attention(const std::string& prefix, Rng& rng);
  Norm make_norm(const std::string& prefix);
  FeedForward make_ff(const std::string& prefix, Rng& rng);
  Tensor add_param(const std::string& name, Matrix value, int rank = 2);

  Tensor embed(const Tensor& table, std::span<const int> ids) const;
  Tensor attend(const Attention& a, const Tensor& queries, const Tensor& memory,
                const Mask& allowed) const;
  Tensor feed_forward(const FeedForward& f, const Tensor& x) const;
  Tensor run_stream(const std::vector<StreamLayer>& layers, std::span<const int> inputs,
                    const Tensor& memory, const Mask& allowed) const;

  ExpertConfig config_;
  Tensor src_embed_;
  Tensor tgt_embed_;
  std::vector<EncoderLayer> encoder_;
  std::vector<StreamLayer> forward_;
  std::vector<StreamLayer> backward_;
  Tensor out_w_, out_b_;
  Tensor gap_w_, gap_b_;
  std::vector<std::pair<std::string, Tensor>> named_;
};

/// Sinusoidal position signal [length x d].
Matrix position_encoding(Eigen::Index length, Eigen::Index d);

/// Shifted stream inputs: forward gets (BOS, t_1..t_{T-1}), backward gets
/// (t_2..t_T, EOS).
std::vector<int> forward_inputs(std::span<const int> target);
std::vector<int> backward_inputs(std::span<const int> target);

}  // namespace blex
