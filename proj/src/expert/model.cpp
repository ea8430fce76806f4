#include "blex/expert/model.hpp"

#include "blex/corpus/vocab.hpp"
#include "blex/error.hpp"
#include "blex/numerics/optim.hpp"

#include <spdlog/spdlog.h>

#include <array>
#include <cmath>

namespace blex {

void ExpertConfig::validate() const {
  if (d_model <= 0 || n_layers <= 0 || d_ff <= 0 || n_heads <= 0)
    throw ValidationError("expert: d_model, n_layers, d_ff and n_heads must be positive");
  if (d_model % n_heads != 0)
    throw ValidationError("expert: d_model " + std::to_string(d_model) + " not divisible by n_heads " +
                          std::to_string(n_heads));
  if (!(sigma >= 0.0)) throw ValidationError("expert: sigma must be >= 0");
  if (!(kl_weight >= 0.0)) throw ValidationError("expert: kl_weight must be >= 0");
  if (source_vocab <= Vocab::kReserved || target_vocab <= Vocab::kReserved)
    throw ValidationError("expert: vocabularies must hold more than the reserved ids");
  if (max_length <= 0) throw ValidationError("expert: max_length must be positive");
}

Matrix position_encoding(Eigen::Index length, Eigen::Index d) {
  Matrix pe(length, d);
  for (Eigen::Index pos = 0; pos < length; ++pos) {
    for (Eigen::Index i = 0; i < d; ++i) {
      const double rate = std::pow(10000.0, -static_cast<double>(i - i % 2) / static_cast<double>(d));
      pe(pos, i) = (i % 2 == 0) ? std::sin(pos * rate) : std::cos(pos * rate);
    }
  }
  return pe;
}

std::vector<int> forward_inputs(std::span<const int> target) {
  std::vector<int> in;
  in.reserve(target.size());
  in.push_back(Vocab::kBos);
  for (std::size_t k = 0; k + 1 < target.size(); ++k) in.push_back(target[k]);
  return in;
}

std::vector<int> backward_inputs(std::span<const int> target) {
  std::vector<int> in(target.begin() + (target.empty() ? 0 : 1), target.end());
  in.push_back(Vocab::kEos);
  return in;
}

Tensor ExpertModel::add_param(const std::string& name, Matrix value, int rank) {
  Tensor p = Tensor::parameter(std::move(value), rank);
  named_.emplace_back(name, p);
  return p;
}

ExpertModel::Attention ExpertModel::make_attention(const std::string& prefix, Rng& rng) {
  const int d = config_.d_model;
  Attention a;
  a.wq = add_param(prefix + ".wq", xavier_uniform(d, d, rng));
  a.wk = add_param(prefix + ".wk", xavier_uniform(d, d, rng));
  a.wv = add_param(prefix + ".wv", xavier_uniform(d, d, rng));
  a.wo = add_param(prefix + ".wo", xavier_uniform(d, d, rng));
  a.bo = add_param(prefix + ".bo", Matrix::Zero(1, d), 1);
  return a;
}

ExpertModel::Norm ExpertModel::make_norm(const std::string& prefix) {
  const int d = config_.d_model;
  return {add_param(prefix + ".gain", Matrix::Ones(1, d), 1), add_param(prefix + ".bias", Matrix::Zero(1, d), 1)};
}

ExpertModel::FeedForward ExpertModel::make_ff(const std::string& prefix, Rng& rng) {
  const int d = config_.d_model, h = config_.d_ff;
  FeedForward f;
  f.w1 = add_param(prefix + ".w1", xavier_uniform(d, h, rng));
  f.b1 = add_param(prefix + ".b1", Matrix::Zero(1, h), 1);
  f.w2 = add_param(prefix + ".w2", xavier_uniform(h, d, rng));
  f.b2 = add_param(prefix + ".b2", Matrix::Zero(1, d), 1);
  return f;
}

ExpertModel::ExpertModel(const ExpertConfig& config, Rng& rng) : config_(config) {
  config_.validate();
  const int d = config_.d_model, V = config_.target_vocab;
  src_embed_ = add_param("src_embed", xavier_uniform(config_.source_vocab, d, rng));
  tgt_embed_ = add_param("tgt_embed", xavier_uniform(V, d, rng));
  for (int l = 0; l < config_.n_layers; ++l) {
    const std::string p = "enc" + std::to_string(l);
    EncoderLayer layer;
    layer.self_attn = make_attention(p + ".self", rng);
    layer.norm1 = make_norm(p + ".norm1");
    layer.ff = make_ff(p + ".ff", rng);
    layer.norm2 = make_norm(p + ".norm2");
    encoder_.push_back(std::move(layer));
  }
  for (const auto& [tag, stream] : {std::pair{"fwd", &forward_}, std::pair{"bwd", &backward_}}) {
    for (int l = 0; l < config_.n_layers; ++l) {
      const std::string p = std::string(tag) + std::to_string(l);
      StreamLayer layer;
      layer.self_attn = make_attention(p + ".self", rng);
      layer.norm1 = make_norm(p + ".norm1");
      layer.cross_attn = make_attention(p + ".cross", rng);
      layer.norm2 = make_norm(p + ".norm2");
      layer.ff = make_ff(p + ".ff", rng);
      layer.norm3 = make_norm(p + ".norm3");
      stream->push_back(std::move(layer));
    }
  }
  out_w_ = add_param("out.w", xavier_uniform(2 * d, V, rng));
  out_b_ = add_param("out.b", Matrix::Zero(1, V), 1);
  if (config_.gap_head) {
    gap_w_ = add_param("gap.w", xavier_uniform(4 * d, V, rng));
    gap_b_ = add_param("gap.b", Matrix::Zero(1, V), 1);
  }
}

std::vector<Tensor> ExpertModel::parameters() const {
  std::vector<Tensor> out;
  out.reserve(named_.size());
  for (const auto& [name, p] : named_) out.push_back(p);
  return out;
}

Tensor ExpertModel::embed(const Tensor& table, std::span<const int> ids) const {
  const auto n = static_cast<Eigen::Index>(ids.size());
  Tensor x = scale(gather_rows(table, ids), std::sqrt(static_cast<double>(config_.d_model)));
  return x + Tensor(position_encoding(n, config_.d_model));
}

Tensor ExpertModel::attend(const Attention& a, const Tensor& queries, const Tensor& memory,
                           const Mask& allowed) const {
  Tensor ctx = multi_head_attention(matmul(queries, a.wq), matmul(memory, a.wk), matmul(memory, a.wv),
                                    config_.n_heads, allowed);
  return add_bias(matmul(ctx, a.wo), a.bo);
}

Tensor ExpertModel::feed_forward(const FeedForward& f, const Tensor& x) const {
  return add_bias(matmul(relu(add_bias(matmul(x, f.w1), f.b1)), f.w2), f.b2);
}

Tensor ExpertModel::encode_source(std::span<const int> source) const {
  if (source.empty()) throw ValidationError("expert: empty source sentence");
  if (static_cast<int>(source.size()) > config_.max_length) {
    spdlog::warn("source of length {} truncated to {}", source.size(), config_.max_length);
    source = source.first(static_cast<std::size_t>(config_.max_length));
  }
  for (int id : source)
    if (id < 0 || id >= config_.source_vocab) throw IndexError("source id " + std::to_string(id) + " out of range");
  Tensor h = embed(src_embed_, source);
  const Mask none;
  for (const auto& layer : encoder_) {
    h = layer_norm(h + attend(layer.self_attn, h, h, none), layer.norm1.gain, layer.norm1.bias);
    h = layer_norm(h + feed_forward(layer.ff, h), layer.norm2.gain, layer.norm2.bias);
  }
  return h;
}

Tensor ExpertModel::run_stream(const std::vector<StreamLayer>& layers, std::span<const int> inputs,
                               const Tensor& memory, const Mask& allowed) const {
  Tensor h = embed(tgt_embed_, inputs);
  const Mask none;
  for (const auto& layer : layers) {
    h = layer_norm(h + attend(layer.self_attn, h, h, allowed), layer.norm1.gain, layer.norm1.bias);
    h = layer_norm(h + attend(layer.cross_attn, h, memory, none), layer.norm2.gain, layer.norm2.bias);
    h = layer_norm(h + feed_forward(layer.ff, h), layer.norm3.gain, layer.norm3.bias);
  }
  return h;
}

LatentStates ExpertModel::encode_target(std::span<const int> target, const Tensor& memory, Rng* noise) const {
  if (target.empty()) throw ValidationError("expert: empty target sentence");
  if (static_cast<int>(target.size()) > config_.max_length)
    throw ValidationError("expert: target length " + std::to_string(target.size()) + " exceeds max_length " +
                          std::to_string(config_.max_length));
  for (int id : target)
    if (id < 0 || id >= config_.target_vocab) throw IndexError("target id " + std::to_string(id) + " out of range");
  const auto T = static_cast<Eigen::Index>(target.size());
  LatentStates z;
  z.mu_fwd = run_stream(forward_, forward_inputs(target), memory, causal_mask(T));
  z.mu_bwd = run_stream(backward_, backward_inputs(target), memory, anticausal_mask(T));
  if (noise != nullptr && config_.sigma > 0.0) {
    z.z_fwd = z.mu_fwd + Tensor(gaussian(T, config_.d_model, config_.sigma, *noise));
    z.z_bwd = z.mu_bwd + Tensor(gaussian(T, config_.d_model, config_.sigma, *noise));
  } else {
    z.z_fwd = z.mu_fwd;
    z.z_bwd = z.mu_bwd;
  }
  return z;
}

Tensor ExpertModel::reconstruct_logits(const LatentStates& z) const {
  const std::array parts{z.z_fwd, z.z_bwd};
  return add_bias(matmul(concat_cols(parts), out_w_), out_b_);
}

Tensor ExpertModel::gap_logits(const LatentStates& z) const {
  if (!config_.gap_head) throw ContractError("expert: model has no gap head");
  const Tensor zero = Tensor::zeros(1, config_.d_model);
  // Rows 0..T of the left context are (0, z_1..z_T); right context (z_1..z_T, 0).
  const std::array fwd_left{zero, z.z_fwd}, bwd_left{zero, z.z_bwd};
  const std::array fwd_right{z.z_fwd, zero}, bwd_right{z.z_bwd, zero};
  const std::array parts{concat_rows(fwd_left), concat_rows(bwd_left), concat_rows(fwd_right),
                         concat_rows(bwd_right)};
  return add_bias(matmul(concat_cols(parts), gap_w_), gap_b_);
}

}  // namespace blex
