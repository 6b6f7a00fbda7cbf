#pragma once

#include "artic/ad/conv.hpp"
#include "artic/ad/ops.hpp"
#include "artic/nn/module.hpp"

namespace artic::nn {

class Linear : public Module {
 public:
  Linear(int in, int out, Rng& rng)
      : in_(in),
        out_(out),
        w_(param("weight", init::uniform_fan_in(rng, {out, in}, in))),
        b_(param("bias", init::uniform_fan_in(rng, {out}, in))) {}

  ad::Var forward(ad::Tape& t, ad::Var x) {
    return ad::add_bias_rows(t, ad::matmul(t, x, pvar(t, w_), false, true), pvar(t, b_));
  }

  int in_features() const { return in_; }
  int out_features() const { return out_; }

 private:
  int in_, out_;
  ParamTensor& w_;
  ParamTensor& b_;
};

class Embedding : public Module {
 public:
  Embedding(int vocab, int dim, Rng& rng)
      : vocab_(vocab), dim_(dim), w_(param("weight", init::normal(rng, {vocab, dim}))) {}

  ad::Var forward(ad::Tape& t, const std::vector<int>& ids) {
    return ad::embedding(t, ids, pvar(t, w_));
  }

  int vocab() const { return vocab_; }
  int dim() const { return dim_; }

 private:
  int vocab_, dim_;
  ParamTensor& w_;
};

class LayerNorm : public Module {
 public:
  explicit LayerNorm(int dim)
      : g_(param("gamma", Tensor::full({dim}, 1.0))),
        b_(param("beta", Tensor({dim}))) {}

  ad::Var forward(ad::Tape& t, ad::Var x) {
    return ad::layer_norm(t, x, pvar(t, g_), pvar(t, b_));
  }

 private:
  ParamTensor& g_;
  ParamTensor& b_;
};

/// Per-channel batch norm over axis 1 of (A, C, H, W). Covers both the 3-d
/// stages (A = sequence length at batch size 1) and the 2-d stages (A =
/// frames-as-batch), which pool statistics over the same axes here.
class BatchNorm : public Module {
 public:
  explicit BatchNorm(int channels)
      : g_(param("gamma", Tensor::full({channels}, 1.0))),
        b_(param("beta", Tensor({channels}))),
        run_mean_(buffer("running_mean", Tensor({channels}))),
        run_var_(buffer("running_var", Tensor::full({channels}, 1.0))) {}

  ad::Var forward(ad::Tape& t, ad::Var x) {
    return ad::batch_norm_c1(t, x, pvar(t, g_), pvar(t, b_), run_mean_, run_var_);
  }

 private:
  ParamTensor& g_;
  ParamTensor& b_;
  Tensor& run_mean_;
  Tensor& run_var_;
};

class Conv2d : public Module {
 public:
  Conv2d(int in, int out, int k, int stride, int pad, Rng& rng)
      : stride_(stride),
        pad_(pad),
        w_(param("weight", init::uniform_fan_in(rng, {out, in, k, k}, in * k * k))),
        b_(param("bias", init::uniform_fan_in(rng, {out}, in * k * k))) {}

  ad::Var forward(ad::Tape& t, ad::Var x) {
    return ad::conv2d(t, x, pvar(t, w_), pvar(t, b_), stride_, pad_);
  }

 private:
  int stride_, pad_;
  ParamTensor& w_;
  ParamTensor& b_;
};

class Conv3d : public Module {
 public:
  Conv3d(int in, int out, int kt, int kh, int kw, Rng& rng)
      : w_(param("weight",
                 init::uniform_fan_in(rng, {out, in, kt, kh, kw}, in * kt * kh * kw))),
        b_(param("bias", init::uniform_fan_in(rng, {out}, in * kt * kh * kw))) {}

  ad::Var forward(ad::Tape& t, ad::Var x) {
    return ad::conv3d(t, x, pvar(t, w_), pvar(t, b_));
  }

  ParamTensor& weight() { return w_; }
  ParamTensor& bias() { return b_; }

 private:
  ParamTensor& w_;
  ParamTensor& b_;
};

class ConvTranspose2d : public Module {
 public:
  ConvTranspose2d(int in, int out, int k, int stride, int pad, Rng& rng)
      : stride_(stride),
        pad_(pad),
        w_(param("weight", init::uniform_fan_in(rng, {in, out, k, k}, in * k * k))),
        b_(param("bias", init::uniform_fan_in(rng, {out}, in * k * k))) {}

  ad::Var forward(ad::Tape& t, ad::Var x) {
    return ad::tconv2d(t, x, pvar(t, w_), pvar(t, b_), stride_, pad_);
  }

 private:
  int stride_, pad_;
  ParamTensor& w_;
  ParamTensor& b_;
};

}  // namespace artic::nn
