#pragma once

#include "artic/nn/layers.hpp"

namespace artic::nn {

/// Per-layer attention matrices captured during a forward pass, one (n, n)
/// tensor per head.
struct AttentionTrace {
  std::vector<Tensor> head_attn;
};

class MultiHeadAttention : public Module {
 public:
  MultiHeadAttention(int dim, int heads, Rng& rng)
      : dim_(dim),
        heads_(heads),
        dk_(dim / heads),
        wq_(dim, dim, rng),
        wk_(dim, dim, rng),
        wv_(dim, dim, rng),
        wo_(dim, dim, rng) {
    if (dim % heads != 0) throw ConfigError("attention: dim not divisible by heads");
    child("wq", wq_);
    child("wk", wk_);
    child("wv", wv_);
    child("wo", wo_);
  }

  ad::Var forward(ad::Tape& t, ad::Var x, AttentionTrace* trace = nullptr) {
    ad::Var q = wq_.forward(t, x);
    ad::Var k = wk_.forward(t, x);
    ad::Var v = wv_.forward(t, x);
    const real scale = real(1) / std::sqrt(static_cast<real>(dk_));
    std::vector<ad::Var> heads;
    heads.reserve(static_cast<std::size_t>(heads_));
    for (int h = 0; h < heads_; ++h) {
      const int c0 = h * dk_, c1 = (h + 1) * dk_;
      ad::Var qh = ad::slice_cols(t, q, c0, c1);
      ad::Var kh = ad::slice_cols(t, k, c0, c1);
      ad::Var vh = ad::slice_cols(t, v, c0, c1);
      ad::Var scores = ad::affine(t, ad::matmul(t, qh, kh, false, true), scale, 0);
      ad::Var attn = ad::softmax_rows(t, scores);
      if (trace) trace->head_attn.push_back(t.val(attn).clone());
      heads.push_back(ad::matmul(t, attn, vh));
    }
    return wo_.forward(t, ad::concat_cols(t, heads));
  }

 private:
  int dim_, heads_, dk_;
  Linear wq_, wk_, wv_, wo_;
};

}  // namespace artic::nn
