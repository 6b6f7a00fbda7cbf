#pragma once

// Central finite-difference gradient checking used across the test suites.
// The oracle is independent of the backward pass under test: it only calls
// the forward path at perturbed inputs.

#include <functional>
#include <vector>

#include "artic/ad/ops.hpp"
#include "artic/core/random.hpp"
#include "artic/nn/module.hpp"

namespace gradcheck {

using artic::Rng;
using artic::Tensor;
using artic::real;
namespace ad = artic::ad;

struct Result {
  real max_rel_err = 0;
  int checked = 0;
};

/// Scalar loss builder over a fixed set of differentiable leaf tensors.
/// `build(tape, vars)` must return a scalar Var.
using LossFn =
    std::function<ad::Var(ad::Tape&, const std::vector<ad::Var>&)>;

inline real eval_loss(const std::vector<Tensor>& inputs, const LossFn& build,
                      bool training, Rng* rng) {
  ad::Tape t(training, rng, /*grad_enabled=*/false);
  std::vector<ad::Var> vars;
  vars.reserve(inputs.size());
  for (const Tensor& in : inputs) vars.push_back(t.leaf(in, false));
  return t.val(build(t, vars))[0];
}

/// Checks analytic gradients of every input against central differences on
/// up to `probes_per_input` randomly chosen entries of each input.
inline Result check(std::vector<Tensor> inputs, const LossFn& build, Rng& rng,
                    int probes_per_input = 6, real h = 1e-5,
                    bool training = false, Rng* fwd_rng = nullptr) {
  std::vector<Tensor> analytic;
  {
    ad::Tape t(training, fwd_rng, /*grad_enabled=*/true);
    std::vector<ad::Var> vars;
    for (const Tensor& in : inputs) vars.push_back(t.leaf(in, true));
    ad::Var loss = build(t, vars);
    t.backward(loss);
    for (ad::Var v : vars)
      analytic.push_back(t.has_grad(v) ? t.grad(v).clone()
                                       : Tensor(t.val(v).shape()));
  }
  Result r;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    Tensor& x = inputs[i];
    const int probes = static_cast<int>(
        std::min<std::int64_t>(probes_per_input, x.numel()));
    for (int p = 0; p < probes; ++p) {
      const std::int64_t j =
          x.numel() == 1 ? 0 : rng.uniform_int(static_cast<int>(x.numel()));
      const real orig = x[j];
      x[j] = orig + h;
      const real lp = eval_loss(inputs, build, training, fwd_rng);
      x[j] = orig - h;
      const real lm = eval_loss(inputs, build, training, fwd_rng);
      x[j] = orig;
      const real fd = (lp - lm) / (2 * h);
      const real an = analytic[i][j];
      const real rel =
          std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), real(1e-4)});
      r.max_rel_err = std::max(r.max_rel_err, rel);
      ++r.checked;
    }
  }
  return r;
}

/// Same oracle for module parameters: analytic gradients from one tape,
/// central differences by perturbing parameter storage in place.
inline Result check_params(const std::vector<artic::nn::ParamTensor*>& params,
                           const std::function<ad::Var(ad::Tape&)>& build,
                           Rng& rng, int probes_per_param = 3, real h = 1e-5,
                           bool training = false) {
  std::vector<Tensor> analytic(params.size());
  {
    ad::Tape t(training, nullptr, /*grad_enabled=*/true);
    ad::Var loss = build(t);
    t.backward(loss);
    for (std::size_t i = 0; i < params.size(); ++i) {
      ad::Var v = t.find_shared(params[i]);
      analytic[i] = (v.valid() && t.has_grad(v)) ? t.grad(v).clone()
                                                 : Tensor(params[i]->value.shape());
    }
  }
  auto eval = [&]() {
    ad::Tape t(training, nullptr, /*grad_enabled=*/false);
    return t.val(build(t))[0];
  };
  Result r;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& x = params[i]->value;
    const int probes =
        static_cast<int>(std::min<std::int64_t>(probes_per_param, x.numel()));
    for (int p = 0; p < probes; ++p) {
      const std::int64_t j =
          x.numel() == 1 ? 0 : rng.uniform_int(static_cast<int>(x.numel()));
      const real orig = x[j];
      x[j] = orig + h;
      const real lp = eval();
      x[j] = orig - h;
      const real lm = eval();
      x[j] = orig;
      const real fd = (lp - lm) / (2 * h);
      const real an = analytic[i][j];
      const real rel =
          std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), real(1e-4)});
      r.max_rel_err = std::max(r.max_rel_err, rel);
      ++r.checked;
    }
  }
  return r;
}

}  // namespace gradcheck
