#pragma once

#include <array>
#include <memory>

#include <json.hpp>

#include "artic/nn/layers.hpp"

namespace artic::model {

struct SegNetConfig {
  std::vector<int> enc_channels = {16, 32, 64, 64};  // one entry per stage

  void validate() const {
    if (enc_channels.size() != 4)
      throw ConfigError("segnet: exactly 4 encoder stages expected");
    for (int c : enc_channels)
      if (c < 1) throw ConfigError("segnet: bad channel width");
  }
};

inline void to_json(nlohmann::json& j, const SegNetConfig& c) {
  j = {{"enc_channels", c.enc_channels}};
}

inline void from_json(const nlohmann::json& j, SegNetConfig& c) {
  j.at("enc_channels").get_to(c.enc_channels);
}

/// conv-BN-ReLU pair used throughout the SegNet stages.
class ConvBlock : public nn::Module {
 public:
  ConvBlock(int in, int out, Rng& rng) : conv_(in, out, 3, 1, 1, rng), bn_(out) {
    child("conv", conv_);
    child("bn", bn_);
  }
  ad::Var forward(ad::Tape& t, ad::Var x) {
    return ad::relu(t, bn_.forward(t, conv_.forward(t, x)));
  }

 private:
  nn::Conv2d conv_;
  nn::BatchNorm bn_;
};

/// One shared 4-stage encoder with pooling indices and three decoder heads
/// that unpool with those indices; each head emits 2-class logits per pixel.
class SegNet : public nn::Module {
 public:
  static constexpr int kHeads = 3;

  SegNet(const SegNetConfig& cfg, Rng& rng) : cfg_(cfg) {
    cfg.validate();
    int in = 3;
    for (std::size_t s = 0; s < 4; ++s) {
      const int out = cfg.enc_channels[s];
      enc_a_.push_back(std::make_unique<ConvBlock>(in, out, rng));
      enc_b_.push_back(std::make_unique<ConvBlock>(out, out, rng));
      child("enc" + std::to_string(s) + "a", *enc_a_.back());
      child("enc" + std::to_string(s) + "b", *enc_b_.back());
      in = out;
    }
    for (int h = 0; h < kHeads; ++h) {
      for (int s = 3; s >= 0; --s) {
        const int cin = cfg.enc_channels[static_cast<std::size_t>(s)];
        const int cout = s > 0 ? cfg.enc_channels[static_cast<std::size_t>(s - 1)] : 2;
        dec_a_[static_cast<std::size_t>(h)].push_back(
            std::make_unique<ConvBlock>(cin, cin, rng));
        child("dec" + std::to_string(h) + "_" + std::to_string(s) + "a",
              *dec_a_[static_cast<std::size_t>(h)].back());
        if (s > 0) {
          dec_b_[static_cast<std::size_t>(h)].push_back(
              std::make_unique<ConvBlock>(cin, cout, rng));
          child("dec" + std::to_string(h) + "_" + std::to_string(s) + "b",
                *dec_b_[static_cast<std::size_t>(h)].back());
        }
      }
      // final conv to logits, no norm/activation
      head_out_[static_cast<std::size_t>(h)] =
          std::make_unique<nn::Conv2d>(cfg.enc_channels[0], 2, 3, 1, 1, rng);
      child("head" + std::to_string(h) + "_out", *head_out_[static_cast<std::size_t>(h)]);
    }
  }

  const SegNetConfig& config() const { return cfg_; }

  /// frames (N, 3, 64, 64) -> three (N, 2, 64, 64) logit maps.
  std::array<ad::Var, kHeads> forward(ad::Tape& t, ad::Var frames) {
    ad::Var x = frames;
    std::array<std::shared_ptr<std::vector<std::int32_t>>, 4> indices;
    for (std::size_t s = 0; s < 4; ++s) {
      x = enc_a_[s]->forward(t, x);
      x = enc_b_[s]->forward(t, x);
      auto pooled = ad::maxpool2d(t, x);
      x = pooled.out;
      indices[s] = pooled.indices;
    }
    std::array<ad::Var, kHeads> out;
    for (int h = 0; h < kHeads; ++h) {
      ad::Var y = x;
      std::size_t block = 0;
      for (int s = 3; s >= 0; --s, ++block) {
        y = ad::maxunpool2d(t, y, indices[static_cast<std::size_t>(s)]);
        y = dec_a_[static_cast<std::size_t>(h)][block]->forward(t, y);
        if (s > 0)
          y = dec_b_[static_cast<std::size_t>(h)][block]->forward(t, y);
      }
      out[static_cast<std::size_t>(h)] =
          head_out_[static_cast<std::size_t>(h)]->forward(t, y);
    }
    return out;
  }

 private:
  SegNetConfig cfg_;
  std::vector<std::unique_ptr<ConvBlock>> enc_a_, enc_b_;
  std::array<std::vector<std::unique_ptr<ConvBlock>>, kHeads> dec_a_, dec_b_;
  std::array<std::unique_ptr<nn::Conv2d>, kHeads> head_out_;
};

}  // namespace artic::model
