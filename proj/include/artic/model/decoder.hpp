#pragma once

#include <memory>
#include <optional>

#include <json.hpp>

#include "artic/nn/layers.hpp"

namespace artic::model {

struct DecoderConfig {
  int d = 8;            // feature maps after reshape; paired encoder D = d*64
  int res1_out = 64;
  int res2_out = 64;
  int tconv1_out = 32;  // 8x8 -> 32x32 (stride 4)
  int tconv2_out = 16;  // 32x32 -> 64x64 (stride 2)
  int cvae_feature_channels = 32;  // c_F concatenated after the first ResBlock
  bool use_cvae_features = false;  // s2s-v when true

  void validate() const {
    if (d < 1 || res1_out < 1 || res2_out < 1 || tconv1_out < 1 || tconv2_out < 1)
      throw ConfigError("decoder: bad channel widths");
    if (use_cvae_features && cvae_feature_channels < 1)
      throw ConfigError("decoder: bad cvae_feature_channels");
  }
};

inline void to_json(nlohmann::json& j, const DecoderConfig& c) {
  j = {{"d", c.d},
       {"res1_out", c.res1_out},
       {"res2_out", c.res2_out},
       {"tconv1_out", c.tconv1_out},
       {"tconv2_out", c.tconv2_out},
       {"cvae_feature_channels", c.cvae_feature_channels},
       {"use_cvae_features", c.use_cvae_features}};
}

inline void from_json(const nlohmann::json& j, DecoderConfig& c) {
  j.at("d").get_to(c.d);
  j.at("res1_out").get_to(c.res1_out);
  j.at("res2_out").get_to(c.res2_out);
  j.at("tconv1_out").get_to(c.tconv1_out);
  j.at("tconv2_out").get_to(c.tconv2_out);
  j.at("cvae_feature_channels").get_to(c.cvae_feature_channels);
  j.at("use_cvae_features").get_to(c.use_cvae_features);
}

/// (n, D) -> (n, d, 8, 8): row-major rearrangement of each feature vector
/// into d feature maps of 8x8 (bijective; D = d*8*8).
inline ad::Var reshape_features(ad::Tape& t, ad::Var enc, int d) {
  const Tensor& v = t.val(enc);
  if (v.ndim() != 2)
    throw ShapeError("reshape_features: need (n, D), got " + v.shape_str());
  if (v.dim(1) != d * 64)
    throw ShapeError("reshape_features: D=" + std::to_string(v.dim(1)) +
                     " is not d*8*8 for d=" + std::to_string(d));
  return ad::reshape(t, enc, {v.dim(0), d, 8, 8});
}

/// Two 3-d conv/norm/activation sub-layers with a residual connection. The
/// first conv spans one frame each side (kernel 3 on the sequence axis); a
/// 1x1x1 projection carries the skip when channel counts differ. The final
/// activation is omitted on the output block so the sigmoid can use the full
/// range.
class ResBlock3d : public nn::Module {
 public:
  ResBlock3d(int in, int out, Rng& rng, bool final_relu = true)
      : final_relu_(final_relu),
        conv1_(in, out, 3, 3, 3, rng),
        bn1_(out),
        conv2_(out, out, 1, 3, 3, rng),
        bn2_(out) {
    child("conv1", conv1_);
    child("bn1", bn1_);
    child("conv2", conv2_);
    child("bn2", bn2_);
    if (in != out) {
      proj_ = std::make_unique<nn::Conv3d>(in, out, 1, 1, 1, rng);
      child("proj", *proj_);
    }
  }

  ad::Var forward(ad::Tape& t, ad::Var x) {
    ad::Var h = ad::relu(t, bn1_.forward(t, conv1_.forward(t, x)));
    h = bn2_.forward(t, conv2_.forward(t, h));
    ad::Var skip = proj_ ? proj_->forward(t, x) : x;
    ad::Var y = ad::add(t, h, skip);
    return final_relu_ ? ad::relu(t, y) : y;
  }

 private:
  bool final_relu_;
  nn::Conv3d conv1_;
  nn::BatchNorm bn1_;
  nn::Conv3d conv2_;
  nn::BatchNorm bn2_;
  std::unique_ptr<nn::Conv3d> proj_;
};

/// Shapes observed at the decoder's internal stages during one forward pass.
struct StageTrace {
  std::vector<std::pair<std::string, std::vector<int>>> stages;

  const std::vector<int>& shape(const std::string& name) const {
    for (const auto& [n, s] : stages)
      if (n == name) return s;
    throw Error("no stage named " + name);
  }
};

/// Converts (n, D) encoder features into (n, 3, 64, 64) frames: reshape, two
/// 3-d ResBlocks (with optional CVAE feature concatenation between them), two
/// per-frame transposed-conv upsampling stages, and two final 3-d ResBlocks
/// reducing to 3 channels under a sigmoid.
class FrameDecoder : public nn::Module {
 public:
  FrameDecoder(const DecoderConfig& cfg, Rng& rng)
      : cfg_(cfg),
        res1_(cfg.d, cfg.res1_out, rng),
        res2_(cfg.res1_out + (cfg.use_cvae_features ? cfg.cvae_feature_channels : 0),
              cfg.res2_out, rng),
        tconv1_(cfg.res2_out, cfg.tconv1_out, 8, 4, 2, rng),
        bn_t1_(cfg.tconv1_out),
        tconv2_(cfg.tconv1_out, cfg.tconv2_out, 4, 2, 1, rng),
        bn_t2_(cfg.tconv2_out),
        res3_(cfg.tconv2_out, cfg.tconv2_out, rng),
        res4_(cfg.tconv2_out, 3, rng, /*final_relu=*/false) {
    cfg.validate();
    child("res1", res1_);
    child("res2", res2_);
    child("tconv1", tconv1_);
    child("bn_t1", bn_t1_);
    child("tconv2", tconv2_);
    child("bn_t2", bn_t2_);
    child("res3", res3_);
    child("res4", res4_);
  }

  const DecoderConfig& config() const { return cfg_; }

  ad::Var forward(ad::Tape& t, ad::Var enc,
                  std::optional<ad::Var> cvae_features = std::nullopt,
                  StageTrace* trace = nullptr) {
    if (cfg_.use_cvae_features != cvae_features.has_value())
      throw Error(cfg_.use_cvae_features
                      ? "decoder: s2s-v requires CVAE features"
                      : "decoder: s2s variant takes no CVAE features");
    ad::Var x = reshape_features(t, enc, cfg_.d);
    if (trace) trace->stages.emplace_back("post_reshape", t.val(x).shape());
    x = res1_.forward(t, x);
    if (trace) trace->stages.emplace_back("post_res1", t.val(x).shape());
    if (cvae_features) {
      const Tensor& f = t.val(*cvae_features);
      if (f.ndim() != 4 || f.dim(0) != t.val(x).dim(0) ||
          f.dim(1) != cfg_.cvae_feature_channels || f.dim(2) != 8 || f.dim(3) != 8)
        throw ShapeError("decoder: CVAE features must be (n, " +
                         std::to_string(cfg_.cvae_feature_channels) +
                         ", 8, 8) matching the sequence length; got " + f.shape_str());
      x = ad::concat_chan(t, x, *cvae_features);
      if (trace) trace->stages.emplace_back("post_concat", t.val(x).shape());
    }
    x = res2_.forward(t, x);
    x = ad::relu(t, bn_t1_.forward(t, tconv1_.forward(t, x)));
    if (trace) trace->stages.emplace_back("post_tconv1", t.val(x).shape());
    x = ad::relu(t, bn_t2_.forward(t, tconv2_.forward(t, x)));
    if (trace) trace->stages.emplace_back("post_upsample", t.val(x).shape());
    x = res3_.forward(t, x);
    x = ad::sigmoid(t, res4_.forward(t, x));
    if (trace) trace->stages.emplace_back("output", t.val(x).shape());
    return x;
  }

 private:
  DecoderConfig cfg_;
  ResBlock3d res1_;
  ResBlock3d res2_;
  nn::ConvTranspose2d tconv1_;
  nn::BatchNorm bn_t1_;
  nn::ConvTranspose2d tconv2_;
  nn::BatchNorm bn_t2_;
  ResBlock3d res3_;
  ResBlock3d res4_;
};

}  // namespace artic::model
