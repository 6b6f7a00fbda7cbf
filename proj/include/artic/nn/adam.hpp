#pragma once

#include <cmath>
#include <vector>

#include "artic/nn/module.hpp"

namespace artic::nn {

struct AdamConfig {
  real lr = 1e-4;
  real beta1 = 0.9;
  real beta2 = 0.999;
  real eps = 1e-8;
  bool clip = true;       // clip gradient at global norm
  real clip_norm = 1.0;
};

/// Adam over a fixed parameter list. Gradients are pulled from the tape via
/// the shared-leaf keys; parameters absent from the tape are skipped.
class Adam {
 public:
  Adam(std::vector<ParamTensor*> params, AdamConfig cfg)
      : params_(std::move(params)), cfg_(cfg) {}

  /// Applies one update from the gradients on `t`. Returns the (pre-clip)
  /// global gradient norm.
  real step(ad::Tape& t) {
    ++steps_;
    real sq = 0;
    std::vector<Tensor> grads(params_.size());
    for (std::size_t i = 0; i < params_.size(); ++i) {
      ad::Var v = t.find_shared(params_[i]);
      if (!v.valid() || !t.has_grad(v)) continue;
      grads[i] = t.grad(v);
      sq += grads[i].vec().squaredNorm();
    }
    const real norm = std::sqrt(sq);
    const real scale =
        (cfg_.clip && norm > cfg_.clip_norm) ? cfg_.clip_norm / norm : real(1);
    const real bc1 = 1 - std::pow(cfg_.beta1, static_cast<real>(steps_));
    const real bc2 = 1 - std::pow(cfg_.beta2, static_cast<real>(steps_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      if (!grads[i].defined()) continue;
      ParamTensor& p = *params_[i];
      if (!p.adam_m.defined()) {
        p.adam_m = Tensor(p.value.shape());
        p.adam_v = Tensor(p.value.shape());
      }
      real* m = p.adam_m.data();
      real* v = p.adam_v.data();
      real* w = p.value.data();
      const real* g = grads[i].data();
      for (std::int64_t j = 0; j < p.value.numel(); ++j) {
        const real gj = g[j] * scale;
        m[j] = cfg_.beta1 * m[j] + (1 - cfg_.beta1) * gj;
        v[j] = cfg_.beta2 * v[j] + (1 - cfg_.beta2) * gj * gj;
        const real mhat = m[j] / bc1;
        const real vhat = v[j] / bc2;
        w[j] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
      }
    }
    return norm;
  }

  std::int64_t steps() const { return steps_; }

 private:
  std::vector<ParamTensor*> params_;
  AdamConfig cfg_;
  std::int64_t steps_ = 0;
};

}  // namespace artic::nn
