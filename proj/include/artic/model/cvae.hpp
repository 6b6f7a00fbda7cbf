#pragma once

#include <json.hpp>

#include "artic/nn/layers.hpp"

namespace artic::model {

struct CVAEConfig {
  int latent_dim = 64;
  int vocab_size = 41;
  int c_feature = 32;   // channels of the tapped feature F (8x8 resolution)
  int enc_hidden = 256;
  real beta = 1.0;      // KL weight (plain ELBO)

  void validate() const {
    if (latent_dim < 1 || vocab_size < 2 || c_feature < 1 || enc_hidden < 1)
      throw ConfigError("cvae: bad config");
  }
};

inline void to_json(nlohmann::json& j, const CVAEConfig& c) {
  j = {{"latent_dim", c.latent_dim},
       {"vocab_size", c.vocab_size},
       {"c_feature", c.c_feature},
       {"enc_hidden", c.enc_hidden},
       {"beta", c.beta}};
}

inline void from_json(const nlohmann::json& j, CVAEConfig& c) {
  j.at("latent_dim").get_to(c.latent_dim);
  j.at("vocab_size").get_to(c.vocab_size);
  j.at("c_feature").get_to(c.c_feature);
  j.at("enc_hidden").get_to(c.enc_hidden);
  j.at("beta").get_to(c.beta);
}

struct LatentPosterior {
  ad::Var mean;
  ad::Var logvar;
};

/// z = mean + exp(0.5*logvar) * noise.
inline ad::Var reparameterize(ad::Tape& t, const LatentPosterior& post,
                              const Tensor& noise) {
  ad::Var std_ = ad::exp_(t, ad::affine(t, post.logvar, 0.5, 0));
  return ad::add(t, post.mean, ad::mul(t, std_, t.constant(noise)));
}

/// KL(N(mean, diag exp(logvar)) || N(0, I)) summed over latent dims and
/// averaged over the batch: 0.5 * sum(exp(lv) + mean^2 - 1 - lv).
inline ad::Var kl_divergence(ad::Tape& t, const LatentPosterior& post) {
  const int batch = t.val(post.mean).dim(0);
  ad::Var term = ad::add(t, ad::exp_(t, post.logvar), ad::mul(t, post.mean, post.mean));
  term = ad::add(t, term, ad::affine(t, post.logvar, -1.0, -1.0));
  return ad::affine(t, ad::sum_all(t, term), 0.5 / static_cast<real>(batch), 0);
}

/// Frame-level conditional VAE: the latent space is conditioned on the
/// phoneme label on both the encoder and decoder side. The decoder exposes
/// the 8x8-resolution activation F for injection into the s2s-v decoder.
class CVAE : public nn::Module {
 public:
  CVAE(const CVAEConfig& cfg, Rng& rng)
      : cfg_(cfg),
        e1_(3, 16, 4, 2, 1, rng),
        eb1_(16),
        e2_(16, 32, 4, 2, 1, rng),
        eb2_(32),
        e3_(32, 32, 4, 2, 1, rng),
        eb3_(32),
        e4_(32, 64, 4, 2, 1, rng),
        eb4_(64),
        enc_fc_(64 * 4 * 4 + cfg.vocab_size, cfg.enc_hidden, rng),
        fc_mean_(cfg.enc_hidden, cfg.latent_dim, rng),
        fc_logvar_(cfg.enc_hidden, cfg.latent_dim, rng),
        dec_fc_(cfg.latent_dim + cfg.vocab_size, 128 * 4 * 4, rng),
        d1_(128, cfg.c_feature, 4, 2, 1, rng),
        db1_(cfg.c_feature),
        d2_(cfg.c_feature, 32, 4, 2, 1, rng),
        db2_(32),
        d3_(32, 16, 4, 2, 1, rng),
        db3_(16),
        d4_(16, 16, 4, 2, 1, rng),
        db4_(16),
        out_conv_(16, 3, 3, 1, 1, rng) {
    cfg.validate();
    child("e1", e1_); child("eb1", eb1_);
    child("e2", e2_); child("eb2", eb2_);
    child("e3", e3_); child("eb3", eb3_);
    child("e4", e4_); child("eb4", eb4_);
    child("enc_fc", enc_fc_);
    child("fc_mean", fc_mean_);
    child("fc_logvar", fc_logvar_);
    child("dec_fc", dec_fc_);
    child("d1", d1_); child("db1", db1_);
    child("d2", d2_); child("db2", db2_);
    child("d3", d3_); child("db3", db3_);
    child("d4", d4_); child("db4", db4_);
    child("out_conv", out_conv_);
  }

  const CVAEConfig& config() const { return cfg_; }

  Tensor one_hot(const std::vector<int>& ids) const {
    Tensor oh({static_cast<int>(ids.size()), cfg_.vocab_size});
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (ids[i] < 0 || ids[i] >= cfg_.vocab_size)
        throw Error("cvae: phoneme id " + std::to_string(ids[i]) + " out of range");
      oh.at(static_cast<int>(i), ids[i]) = 1;
    }
    return oh;
  }

  /// frames (N, 3, 64, 64) + ids (N) -> posterior over (N, latent_dim).
  LatentPosterior encode(ad::Tape& t, ad::Var frames, const std::vector<int>& ids) {
    const Tensor& f = t.val(frames);
    if (f.ndim() != 4 || f.dim(1) != 3 || f.dim(2) != 64 || f.dim(3) != 64)
      throw ShapeError("cvae encode: frames must be (N, 3, 64, 64)");
    if (f.dim(0) != static_cast<int>(ids.size()))
      throw ShapeError("cvae encode: frame/id count mismatch");
    ad::Var x = ad::relu(t, eb1_.forward(t, e1_.forward(t, frames)));
    x = ad::relu(t, eb2_.forward(t, e2_.forward(t, x)));
    x = ad::relu(t, eb3_.forward(t, e3_.forward(t, x)));
    x = ad::relu(t, eb4_.forward(t, e4_.forward(t, x)));
    x = ad::reshape(t, x, {f.dim(0), 64 * 4 * 4});
    x = ad::concat_cols(t, {x, t.constant(one_hot(ids))});
    x = ad::relu(t, enc_fc_.forward(t, x));
    return {fc_mean_.forward(t, x), fc_logvar_.forward(t, x)};
  }

  /// z (N, latent_dim) + ids (N) -> frames (N, 3, 64, 64) in [0,1]; also taps
  /// F (N, c_feature, 8, 8) when `f_tap` is given.
  ad::Var decode(ad::Tape& t, ad::Var z, const std::vector<int>& ids,
                 ad::Var* f_tap = nullptr) {
    const int n = t.val(z).dim(0);
    if (n != static_cast<int>(ids.size()))
      throw ShapeError("cvae decode: z/id count mismatch");
    ad::Var x = ad::concat_cols(t, {z, t.constant(one_hot(ids))});
    x = ad::relu(t, dec_fc_.forward(t, x));
    x = ad::reshape(t, x, {n, 128, 4, 4});
    x = ad::relu(t, db1_.forward(t, d1_.forward(t, x)));  // 8x8: the F tap
    if (f_tap) *f_tap = x;
    x = ad::relu(t, db2_.forward(t, d2_.forward(t, x)));  // 16x16
    x = ad::relu(t, db3_.forward(t, d3_.forward(t, x)));  // 32x32
    x = ad::relu(t, db4_.forward(t, d4_.forward(t, x)));  // 64x64
    return ad::sigmoid(t, out_conv_.forward(t, x));
  }

  struct LossParts {
    ad::Var total;
    ad::Var reconstruction;  // MSE
    ad::Var kl;
  };

  /// ELBO-style loss: MSE(reconstruction, frame) + beta * KL.
  LossParts loss(ad::Tape& t, const Tensor& frames, const std::vector<int>& ids,
                 const Tensor& noise) {
    ad::Var fv = t.constant(frames);
    LatentPosterior post = encode(t, fv, ids);
    ad::Var z = reparameterize(t, post, noise);
    ad::Var recon = decode(t, z, ids);
    ad::Var mse = ad::mse_loss(t, recon, frames);
    ad::Var kl = kl_divergence(t, post);
    ad::Var total = ad::add(t, mse, ad::affine(t, kl, cfg_.beta, 0));
    return {total, mse, kl};
  }

 private:
  CVAEConfig cfg_;
  nn::Conv2d e1_;
  nn::BatchNorm eb1_;
  nn::Conv2d e2_;
  nn::BatchNorm eb2_;
  nn::Conv2d e3_;
  nn::BatchNorm eb3_;
  nn::Conv2d e4_;
  nn::BatchNorm eb4_;
  nn::Linear enc_fc_;
  nn::Linear fc_mean_;
  nn::Linear fc_logvar_;
  nn::Linear dec_fc_;
  nn::ConvTranspose2d d1_;
  nn::BatchNorm db1_;
  nn::ConvTranspose2d d2_;
  nn::BatchNorm db2_;
  nn::ConvTranspose2d d3_;
  nn::BatchNorm db3_;
  nn::ConvTranspose2d d4_;
  nn::BatchNorm db4_;
  nn::Conv2d out_conv_;
};

/// Draws z ~ N(0, I) per frame (seeded) and returns the frame-ordered F
/// sequence (n, c_F, 8, 8) from a frozen CVAE in eval mode.
inline Tensor sample_feature_sequence(CVAE& cvae, const std::vector<int>& ids,
                                      std::uint64_t seed) {
  if (ids.empty()) throw Error("sample_feature_sequence: empty id sequence");
  const int n = static_cast<int>(ids.size());
  const int L = cvae.config().latent_dim;
  Tensor z({n, L});
  Rng rng = Rng::keyed(seed, Rng::hash_tag("cvae-feature-noise"));
  rng.fill_normal(z, 0.0, 1.0);
  ad::Tape t(/*training=*/false, nullptr, /*grad_enabled=*/false);
  ad::Var f_tap;
  cvae.decode(t, t.constant(z), ids, &f_tap);
  return t.val(f_tap).clone();
}

}  // namespace artic::model
