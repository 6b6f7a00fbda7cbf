#pragma once

#include <memory>

#include <json.hpp>

#include "artic/nn/attention.hpp"

namespace artic::model {

using nn::AttentionTrace;

struct EncoderConfig {
  int n_layers = 12;
  int model_dim = 512;  // D; reshaped later as d feature maps of 8x8
  int n_heads = 8;
  int ff_dim = 2048;
  real dropout = 0.1;
  int vocab_size = 41;
  int max_len = 4096;
  bool positional_encoding = true;

  void validate() const {
    if (model_dim % n_heads != 0)
      throw ConfigError("encoder: model_dim must be divisible by n_heads");
    if (model_dim % 64 != 0)
      throw ConfigError("encoder: model_dim must be divisible by 64 (D = d*8*8)");
    if (n_layers < 1 || vocab_size < 2 || !(dropout >= 0 && dropout < 1))
      throw ConfigError("encoder: bad config");
  }
};

inline void to_json(nlohmann::json& j, const EncoderConfig& c) {
  j = {{"n_layers", c.n_layers},   {"model_dim", c.model_dim},
       {"n_heads", c.n_heads},     {"ff_dim", c.ff_dim},
       {"dropout", c.dropout},     {"vocab_size", c.vocab_size},
       {"max_len", c.max_len},     {"positional_encoding", c.positional_encoding}};
}

inline void from_json(const nlohmann::json& j, EncoderConfig& c) {
  j.at("n_layers").get_to(c.n_layers);
  j.at("model_dim").get_to(c.model_dim);
  j.at("n_heads").get_to(c.n_heads);
  j.at("ff_dim").get_to(c.ff_dim);
  j.at("dropout").get_to(c.dropout);
  j.at("vocab_size").get_to(c.vocab_size);
  j.at("max_len").get_to(c.max_len);
  j.at("positional_encoding").get_to(c.positional_encoding);
}

/// Sinusoidal positional encoding rows [0, n).
inline Tensor sinusoidal_positions(int n, int dim) {
  Tensor pe({n, dim});
  for (int pos = 0; pos < n; ++pos)
    for (int i = 0; i < dim; i += 2) {
      const real angle =
          pos * std::exp(-std::log(real(10000)) * i / static_cast<real>(dim));
      pe.at(pos, i) = std::sin(angle);
      if (i + 1 < dim) pe.at(pos, i + 1) = std::cos(angle);
    }
  return pe;
}

/// One pre-norm transformer block: self-attention and feed-forward, each with
/// residual connection and layer normalization.
class TransformerLayer : public nn::Module {
 public:
  TransformerLayer(const EncoderConfig& cfg, Rng& rng)
      : dropout_(cfg.dropout),
        ln1_(cfg.model_dim),
        ln2_(cfg.model_dim),
        attn_(cfg.model_dim, cfg.n_heads, rng),
        ff1_(cfg.model_dim, cfg.ff_dim, rng),
        ff2_(cfg.ff_dim, cfg.model_dim, rng) {
    child("ln1", ln1_);
    child("ln2", ln2_);
    child("attn", attn_);
    child("ff1", ff1_);
    child("ff2", ff2_);
  }

  ad::Var forward(ad::Tape& t, ad::Var x, AttentionTrace* trace = nullptr) {
    ad::Var a = attn_.forward(t, ln1_.forward(t, x), trace);
    x = ad::add(t, x, ad::dropout(t, a, dropout_));
    ad::Var f = ff2_.forward(t, ad::relu(t, ff1_.forward(t, ln2_.forward(t, x))));
    return ad::add(t, x, ad::dropout(t, f, dropout_));
  }

 private:
  real dropout_;
  nn::LayerNorm ln1_, ln2_;
  nn::MultiHeadAttention attn_;
  nn::Linear ff1_, ff2_;
};

/// Maps a frame-aligned phoneme-id sequence to (n, D) features via a
/// learnable embedding and a transformer stack.
class PhonemeEncoder : public nn::Module {
 public:
  PhonemeEncoder(const EncoderConfig& cfg, Rng& rng)
      : cfg_(cfg), embed_(cfg.vocab_size, cfg.model_dim, rng), final_ln_(cfg.model_dim) {
    cfg.validate();
    child("embed", embed_);
    for (int i = 0; i < cfg.n_layers; ++i) {
      layers_.push_back(std::make_unique<TransformerLayer>(cfg, rng));
      child("layer" + std::to_string(i), *layers_.back());
    }
    child("final_ln", final_ln_);
  }

  const EncoderConfig& config() const { return cfg_; }

  /// Embedding lookup plus sinusoidal positional encoding.
  ad::Var embed(ad::Tape& t, const std::vector<int>& ids) {
    ad::Var e = embed_.forward(t, ids);
    if (!cfg_.positional_encoding) return e;
    return ad::add(t, e,
                   t.constant(sinusoidal_positions(static_cast<int>(ids.size()),
                                                   cfg_.model_dim)));
  }

  /// Full encode: (n) ids -> (n, D). Attention matrices are captured into
  /// `traces` (one entry per layer) when provided.
  ad::Var encode(ad::Tape& t, const std::vector<int>& ids,
                 std::vector<AttentionTrace>* traces = nullptr) {
    if (ids.empty()) throw Error("encode: empty phoneme sequence");
    if (static_cast<int>(ids.size()) > cfg_.max_len)
      throw Error("encode: sequence longer than max_len");
    ad::Var x = ad::dropout(t, embed(t, ids), cfg_.dropout);
    for (auto& layer : layers_) {
      AttentionTrace* trace = nullptr;
      if (traces) {
        traces->emplace_back();
        trace = &traces->back();
      }
      x = layer->forward(t, x, trace);
    }
    return final_ln_.forward(t, x);
  }

 private:
  EncoderConfig cfg_;
  nn::Embedding embed_;
  std::vector<std::unique_ptr<TransformerLayer>> layers_;
  nn::LayerNorm final_ln_;
};

}  // namespace artic::model
