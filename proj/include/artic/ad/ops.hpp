#pragma once

#include <cmath>
#include <utility>
#include <vector>

#include "artic/ad/tape.hpp"

namespace artic::ad {

namespace detail {

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b))
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_str() +
                     " vs " + b.shape_str());
}

// Id the node being built will get. Ops compute this before Tape::make so the
// backward closure can read its own output gradient.
inline Var next_var(const Tape& t) { return Var{static_cast<int>(t.size())}; }

}  // namespace detail

inline Var add(Tape& t, Var a, Var b) {
  const Tensor& xa = t.val(a);
  const Tensor& xb = t.val(b);
  detail::check_same_shape(xa, xb, "add");
  Tensor y(xa.shape());
  y.vec() = xa.vec() + xb.vec();
  const Var out = detail::next_var(t);
  return t.make(std::move(y), {a, b}, [a, b, out](Tape& tp) {
    const Tensor& g = tp.grad(out);
    if (tp.needs_grad(a)) tp.grad(a).vec() += g.vec();
    if (tp.needs_grad(b)) tp.grad(b).vec() += g.vec();
  });
}

/// y = alpha * x + beta (elementwise scalar affine).
inline Var affine(Tape& t, Var x, real alpha, real beta) {
  const Tensor& xv = t.val(x);
  Tensor y(xv.shape());
  y.vec() = alpha * xv.vec().array() + beta;
  const Var out = detail::next_var(t);
  return t.make(std::move(y), {x}, [x, out, alpha](Tape& tp) {
    if (tp.needs_grad(x)) tp.grad(x).vec() += alpha * tp.grad(out).vec();
  });
}

inline Var mul(Tape& t, Var a, Var b) {
  const Tensor& xa = t.val(a);
  const Tensor& xb = t.val(b);
  detail::check_same_shape(xa, xb, "mul");
  Tensor y(xa.shape());
  y.vec().array() = xa.vec().array() * xb.vec().array();
  const Var out = detail::next_var(t);
  return t.make(std::move(y), {a, b}, [a, b, out](Tape& tp) {
    const Tensor& g = tp.grad(out);
    if (tp.needs_grad(a))
      tp.grad(a).vec().array() += g.vec().array() * tp.val(b).vec().array();
    if (tp.needs_grad(b))
      tp.grad(b).vec().array() += g.vec().array() * tp.val(a).vec().array();
  });
}

/// x: (rows, cols), bias: (cols); broadcast add over rows.
inline Var add_bias_rows(Tape& t, Var x, Var bias) {
  const Tensor& xv = t.val(x);
  const Tensor& bv = t.val(bias);
  const int cols = bv.dim(0);
  if (xv.numel() % cols != 0)
    throw ShapeError("add_bias_rows: column mismatch");
  const int rows = static_cast<int>(xv.numel() / cols);
  Tensor y(xv.shape());
  y.mat(rows, cols) = xv.mat(rows, cols).rowwise() + bv.vec().transpose();
  const Var out = detail::next_var(t);
  return t.make(std::move(y), {x, bias}, [x, bias, out, rows, cols](Tape& tp) {
    const Tensor& g = tp.grad(out);
    if (tp.needs_grad(x)) tp.grad(x).vec() += g.vec();
    if (tp.needs_grad(bias))
      tp.grad(bias).vec() += g.mat(rows, cols).colwise().sum().transpose();
  });
}

/// 2-d matrix product with optional transposes.
inline Var matmul(Tape& t, Var a, Var b, bool trans_a = false, bool trans_b = false) {
  const Tensor& xa = t.val(a);
  const Tensor& xb = t.val(b);
  if (xa.ndim() != 2 || xb.ndim() != 2) throw ShapeError("matmul: need 2-d inputs");
  const int am = trans_a ? xa.dim(1) : xa.dim(0);
  const int ak = trans_a ? xa.dim(0) : xa.dim(1);
  const int bk = trans_b ? xb.dim(1) : xb.dim(0);
  const int bn = trans_b ? xb.dim(0) : xb.dim(1);
  if (ak != bk)
    throw ShapeError("matmul: inner dimension mismatch " + xa.shape_str() + " vs " +
                     xb.shape_str());
  Tensor y({am, bn});
  {
    auto A = xa.mat(xa.dim(0), xa.dim(1));
    auto B = xb.mat(xb.dim(0), xb.dim(1));
    auto C = y.mat(am, bn);
    if (!trans_a && !trans_b) C.noalias() = A * B;
    else if (trans_a && !trans_b) C.noalias() = A.transpose() * B;
    else if (!trans_a && trans_b) C.noalias() = A * B.transpose();
    else C.noalias() = A.transpose() * B.transpose();
  }
  const Var out = detail::next_var(t);
  return t.make(std::move(y), {a, b}, [a, b, out, trans_a, trans_b, am, bn](Tape& tp) {
    auto G = tp.grad(out).mat(am, bn);
    const Tensor& xa2 = tp.val(a);
    const Tensor& xb2 = tp.val(b);
    auto A = xa2.mat(xa2.dim(0), xa2.dim(1));
    auto B = xb2.mat(xb2.dim(0), xb2.dim(1));
    if (tp.needs_grad(a)) {
      auto GA = tp.grad(a).mat(xa2.dim(0), xa2.dim(1));
      if (!trans_a && !trans_b) GA.noalias() += G * B.transpose();
      else if (trans_a && !trans_b) GA.noalias() += B * G.transpose();
      else if (!trans_a && trans_b) GA.noalias() += G * B;
      else GA.noalias() += B.transpose() * G.transpose();
    }
    if (tp.needs_grad(b)) {
      auto GB = tp.grad(b).mat(xb2.dim(0), xb2.dim(1));
      if (!trans_a && !trans_b) GB.noalias() += A.transpose() * G;
      else if (trans_a && !trans_b) GB.noalias() += A * G;
      else if (!trans_a && trans_b) GB.noalias() += G.transpose() * A;
      else GB.noalias() += G.transpose() * A.transpose();
    }
  });
}

inline Var relu(Tape& t, Var x) {
  const Tensor& xv = t.val(x);
  Tensor y(xv.shape());
  y.vec().array() = xv.vec().array().max(real(0));
  const Var out = detail::next_var(t);
  return t.make(std::move(y), {x}, [x, out](Tape& tp) {
    if (!tp.needs_grad(x)) return;
    const Tensor& g = tp.grad(out);
    const Tensor& xv2 = tp.val(x);
    real* gx = tp.grad(x).data();
    const real* gp = g.data();
    const real* xp = xv2.data();
    for (std::int64_t i = 0; i < g.numel(); ++i)
      if (xp[i] > 0) gx[i] += gp[i];
  });
}

inline Var sigmoid(Tape& t, Var x) {
  const Tensor& xv = t.val(x);
  Tensor y(xv.shape());
  {
    const real* xp = xv.data();
    real* yp = y.data();
    for (std::int64_t i = 0; i < xv.numel(); ++i)
      yp[i] = real(1) / (real(1) + std::exp(-xp[i]));
  }
  const Var out = detail::next_var(t);
  Tensor yk = y;  // shares storage with node value
  return t.make(std::move(y), {x}, [x, out, yk](Tape& tp) {
    if (!tp.needs_grad(x)) return;
    const Tensor& g = tp.grad(out);
    real* gx = tp.grad(x).data();
    const real* gp = g.data();
    const real* yp = yk.data();
    for (std::int64_t i = 0; i < g.numel(); ++i)
      gx[i] += gp[i] * yp[i] * (real(1) - yp[i]);
  });
}

inline Var exp_(Tape& t, Var x) {
  const Tensor& xv = t.val(x);
  Tensor y(xv.shape());
  y.vec().array() = xv.vec().array().exp();
  const Var out = detail::next_var(t);
  Tensor yk = y;
  return t.make(std::move(y), {x}, [x, out, yk](Tape& tp) {
    if (tp.needs_grad(x))
      tp.grad(x).vec().array() += tp.grad(out).vec().array() * yk.vec().array();
  });
}

/// Row-wise softmax of a 2-d tensor, numerically stabilized.
inline Var softmax_rows(Tape& t, Var x) {
  const Tensor& xv = t.val(x);
  if (xv.ndim() != 2) throw ShapeError("softmax_rows: need 2-d input");
  const int r = xv.dim(0), c = xv.dim(1);
  Tensor y({r, c});
  for (int i = 0; i < r; ++i) {
    const real* xp = xv.data() + static_cast<std::int64_t>(i) * c;
    real* yp = y.data() + static_cast<std::int64_t>(i) * c;
    real mx = xp[0];
    for (int j = 1; j < c; ++j) mx = std::max(mx, xp[j]);
    real s = 0;
    for (int j = 0; j < c; ++j) {
      yp[j] = std::exp(xp[j] - mx);
      s += yp[j];
    }
    for (int j = 0; j < c; ++j) yp[j] /= s;
  }
  const Var out = detail::next_var(t);
  Tensor yk = y;
  return t.make(std::move(y), {x}, [x, out, yk, r, c](Tape& tp) {
    if (!tp.needs_grad(x)) return;
    const Tensor& g = tp.grad(out);
    Tensor& gx = tp.grad(x);
    for (int i = 0; i < r; ++i) {
      const real* gp = g.data() + static_cast<std::int64_t>(i) * c;
      const real* yp = yk.data() + static_cast<std::int64_t>(i) * c;
      real* gxp = gx.data() + static_cast<std::int64_t>(i) * c;
      real dot = 0;
      for (int j = 0; j < c; ++j) dot += gp[j] * yp[j];
      for (int j = 0; j < c; ++j) gxp[j] += (gp[j] - dot) * yp[j];
    }
  });
}

inline Var sum_all(Tape& t, Var x) {
  Tensor y = Tensor::scalar(t.val(x).vec().sum());
  const Var out = detail::next_var(t);
  return t.make(std::move(y), {x}, [x, out](Tape& tp) {
    if (tp.needs_grad(x))
      tp.grad(x).vec().array() += tp.grad(out)[0];
  });
}

inline Var mean_all(Tape& t, Var x) {
  const real inv = real(1) / static_cast<real>(t.val(x).numel());
  return affine(t, sum_all(t, x), inv, 0);
}

/// Mean squared error against a fixed target (not differentiated).
inline Var mse_loss(Tape& t, Var pred, const Tensor& target) {
  const Tensor& p = t.val(pred);
  detail::check_same_shape(p, target, "mse_loss");
  const std::int64_t n = p.numel();
  const real inv = real(1) / static_cast<real>(n);
  real acc = 0;
  {
    const real* pp = p.data();
    const real* tp_ = target.data();
    for (std::int64_t i = 0; i < n; ++i) {
      const real d = pp[i] - tp_[i];
      acc += d * d;
    }
  }
  Tensor y = Tensor::scalar(acc * inv);
  const Var out = detail::next_var(t);
  return t.make(std::move(y), {pred}, [pred, out, target, inv](Tape& tp) {
    if (!tp.needs_grad(pred)) return;
    const real g = tp.grad(out)[0];
    real* gp = tp.grad(pred).data();
    const real* pp = tp.val(pred).data();
    const real* tt = target.data();
    for (std::int64_t i = 0; i < tp.val(pred).numel(); ++i)
      gp[i] += g * 2 * inv * (pp[i] - tt[i]);
  });
}

inline Var reshape(Tape& t, Var x, std::vector<int> shape) {
  Tensor y = t.val(x).reshaped(std::move(shape));
  const Var out = detail::next_var(t);
  std::vector<int> xshape = t.val(x).shape();
  return t.make(std::move(y), {x}, [x, out, xshape](Tape& tp) {
    if (tp.needs_grad(x)) tp.grad(x).vec() += tp.grad(out).vec();
  });
}

/// Columns [c0, c1) of a 2-d tensor, as a copy.
inline Var slice_cols(Tape& t, Var x, int c0, int c1) {
  const Tensor& xv = t.val(x);
  if (xv.ndim() != 2) throw ShapeError("slice_cols: need 2-d input");
  const int r = xv.dim(0), c = xv.dim(1);
  if (c0 < 0 || c1 > c || c0 >= c1) throw ShapeError("slice_cols: bad range");
  Tensor y({r, c1 - c0});
  y.mat(r, c1 - c0) = xv.mat(r, c).middleCols(c0, c1 - c0);
  const Var out = detail::next_var(t);
  return t.make(std::move(y), {x}, [x, out, r, c, c0, c1](Tape& tp) {
    if (tp.needs_grad(x))
      tp.grad(x).mat(r, c).middleCols(c0, c1 - c0) += tp.grad(out).mat(r, c1 - c0);
  });
}

/// Horizontal concatenation of 2-d tensors with equal row counts.
inline Var concat_cols(Tape& t, const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: empty");
  const int r = t.val(parts[0]).dim(0);
  int c = 0;
  for (Var p : parts) {
    if (t.val(p).ndim() != 2 || t.val(p).dim(0) != r)
      throw ShapeError("concat_cols: row mismatch");
    c += t.val(p).dim(1);
  }
  Tensor y({r, c});
  int off = 0;
  for (Var p : parts) {
    const int pc = t.val(p).dim(1);
    y.mat(r, c).middleCols(off, pc) = t.val(p).mat(r, pc);
    off += pc;
  }
  const Var out = detail::next_var(t);
  return t.make(std::move(y), parts, [parts, out, r, c](Tape& tp) {
    int o = 0;
    for (Var p : parts) {
      const int pc = tp.val(p).dim(1);
      if (tp.needs_grad(p))
        tp.grad(p).mat(r, pc) += tp.grad(out).mat(r, c).middleCols(o, pc);
      o += pc;
    }
  });
}

/// Concatenate two (A, C, H, W) tensors along the channel axis.
inline Var concat_chan(Tape& t, Var a, Var b) {
  const Tensor& xa = t.val(a);
  const Tensor& xb = t.val(b);
  if (xa.ndim() != 4 || xb.ndim() != 4 || xa.dim(0) != xb.dim(0) ||
      xa.dim(2) != xb.dim(2) || xa.dim(3) != xb.dim(3))
    throw ShapeError("concat_chan: incompatible shapes " + xa.shape_str() + " vs " +
                     xb.shape_str());
  const int A = xa.dim(0), Ca = xa.dim(1), Cb = xb.dim(1);
  const int HW = xa.dim(2) * xa.dim(3);
  Tensor y({A, Ca + Cb, xa.dim(2), xa.dim(3)});
  for (int i = 0; i < A; ++i) {
    std::copy_n(xa.data() + static_cast<std::int64_t>(i) * Ca * HW, Ca * HW,
                y.data() + static_cast<std::int64_t>(i) * (Ca + Cb) * HW);
    std::copy_n(xb.data() + static_cast<std::int64_t>(i) * Cb * HW, Cb * HW,
                y.data() + static_cast<std::int64_t>(i) * (Ca + Cb) * HW + Ca * HW);
  }
  const Var out = detail::next_var(t);
  return t.make(std::move(y), {a, b}, [a, b, out, A, Ca, Cb, HW](Tape& tp) {
    const Tensor& g = tp.grad(out);
    for (int i = 0; i < A; ++i) {
      const real* gp = g.data() + static_cast<std::int64_t>(i) * (Ca + Cb) * HW;
      if (tp.needs_grad(a)) {
        real* ga = tp.grad(a).data() + static_cast<std::int64_t>(i) * Ca * HW;
        for (int j = 0; j < Ca * HW; ++j) ga[j] += gp[j];
      }
      if (tp.needs_grad(b)) {
        real* gb = tp.grad(b).data() + static_cast<std::int64_t>(i) * Cb * HW;
        for (int j = 0; j < Cb * HW; ++j) gb[j] += gp[Ca * HW + j];
      }
    }
  });
}

/// Inverted dropout; identity when the tape is not in training mode.
inline Var dropout(Tape& t, Var x, real p) {
  if (!t.training() || p <= 0) return x;
  const Tensor& xv = t.val(x);
  Tensor mask(xv.shape());
  {
    Rng& rng = t.rng();
    const real keep = real(1) - p;
    real* mp = mask.data();
    for (std::int64_t i = 0; i < mask.numel(); ++i)
      mp[i] = rng.uniform() < p ? real(0) : real(1) / keep;
  }
  Tensor y(xv.shape());
  y.vec().array() = xv.vec().array() * mask.vec().array();
  const Var out = detail::next_var(t);
  return t.make(std::move(y), {x}, [x, out, mask](Tape& tp) {
    if (tp.needs_grad(x))
      tp.grad(x).vec().array() += tp.grad(out).vec().array() * mask.vec().array();
  });
}

/// Row gather: out[i] = W[ids[i]]. Ids must be in [0, W.rows).
inline Var embedding(Tape& t, const std::vector<int>& ids, Var weight) {
  const Tensor& w = t.val(weight);
  if (w.ndim() != 2) throw ShapeError("embedding: weight must be 2-d");
  const int vocab = w.dim(0), d = w.dim(1);
  for (int id : ids)
    if (id < 0 || id >= vocab)
      throw Error("embedding: phoneme id " + std::to_string(id) +
                  " out of range [0," + std::to_string(vocab) + ")");
  const int n = static_cast<int>(ids.size());
  Tensor y({n, d});
  for (int i = 0; i < n; ++i)
    std::copy_n(w.data() + static_cast<std::int64_t>(ids[i]) * d, d,
                y.data() + static_cast<std::int64_t>(i) * d);
  const Var out = detail::next_var(t);
  return t.make(std::move(y), {weight}, [weight, out, ids, d](Tape& tp) {
    if (!tp.needs_grad(weight)) return;
    const Tensor& g = tp.grad(out);
    Tensor& gw = tp.grad(weight);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      const real* gp = g.data() + static_cast<std::int64_t>(i) * d;
      real* wp = gw.data() + static_cast<std::int64_t>(ids[i]) * d;
      for (int j = 0; j < d; ++j) wp[j] += gp[j];
    }
  });
}

/// Layer normalization over the last dimension with affine parameters.
inline Var layer_norm(Tape& t, Var x, Var gamma, Var beta, real eps = 1e-5) {
  const Tensor& xv = t.val(x);
  const int d = xv.dim(xv.ndim() - 1);
  if (t.val(gamma).numel() != d || t.val(beta).numel() != d)
    throw ShapeError("layer_norm: affine size mismatch");
  const int rows = static_cast<int>(xv.numel() / d);
  Tensor xhat(xv.shape());
  Tensor inv_std({rows});
  Tensor y(xv.shape());
  const real* gam = t.val(gamma).data();
  const real* bet = t.val(beta).data();
  for (int i = 0; i < rows; ++i) {
    const real* xp = xv.data() + static_cast<std::int64_t>(i) * d;
    real* hp = xhat.data() + static_cast<std::int64_t>(i) * d;
    real* yp = y.data() + static_cast<std::int64_t>(i) * d;
    real mu = 0;
    for (int j = 0; j < d; ++j) mu += xp[j];
    mu /= d;
    real var = 0;
    for (int j = 0; j < d; ++j) {
      const real c = xp[j] - mu;
      var += c * c;
    }
    var /= d;
    const real is = real(1) / std::sqrt(var + eps);
    inv_std[i] = is;
    for (int j = 0; j < d; ++j) {
      hp[j] = (xp[j] - mu) * is;
      yp[j] = gam[j] * hp[j] + bet[j];
    }
  }
  const Var out = detail::next_var(t);
  return t.make(std::move(y), {x, gamma, beta},
                [x, gamma, beta, out, xhat, inv_std, rows, d](Tape& tp) {
    const Tensor& g = tp.grad(out);
    const real* gam = tp.val(gamma).data();
    if (tp.needs_grad(gamma) || tp.needs_grad(beta)) {
      Tensor& gg = tp.grad(gamma);
      Tensor& gb = tp.grad(beta);
      for (int i = 0; i < rows; ++i) {
        const real* gp = g.data() + static_cast<std::int64_t>(i) * d;
        const real* hp = xhat.data() + static_cast<std::int64_t>(i) * d;
        for (int j = 0; j < d; ++j) {
          gg[j] += gp[j] * hp[j];
          gb[j] += gp[j];
        }
      }
    }
    if (tp.needs_grad(x)) {
      Tensor& gx = tp.grad(x);
      for (int i = 0; i < rows; ++i) {
        const real* gp = g.data() + static_cast<std::int64_t>(i) * d;
        const real* hp = xhat.data() + static_cast<std::int64_t>(i) * d;
        real* gxp = gx.data() + static_cast<std::int64_t>(i) * d;
        real m1 = 0, m2 = 0;
        for (int j = 0; j < d; ++j) {
          const real dh = gp[j] * gam[j];
          m1 += dh;
          m2 += dh * hp[j];
        }
        m1 /= d;
        m2 /= d;
        const real is = inv_std[i];
        for (int j = 0; j < d; ++j) {
          const real dh = gp[j] * gam[j];
          gxp[j] += (dh - m1 - hp[j] * m2) * is;
        }
      }
    }
  });
}

/// Batch normalization over axis 1 of an (A, C, H, W) tensor: per-channel
/// statistics pooled over A, H, W. Running buffers are updated in training
/// mode and used for normalization in eval mode.
inline Var batch_norm_c1(Tape& t, Var x, Var gamma, Var beta, Tensor& run_mean,
                         Tensor& run_var, real momentum = 0.1, real eps = 1e-5) {
  const Tensor& xv = t.val(x);
  if (xv.ndim() != 4) throw ShapeError("batch_norm_c1: need 4-d input");
  const int A = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
  const std::int64_t HW = static_cast<std::int64_t>(H) * W;
  const std::int64_t m = static_cast<std::int64_t>(A) * HW;
  Tensor mean({C}), inv_std({C});
  const bool training = t.training();
  if (training) {
    for (int c = 0; c < C; ++c) {
      real mu = 0;
      for (int a = 0; a < A; ++a) {
        const real* xp = xv.data() + ((static_cast<std::int64_t>(a) * C + c) * HW);
        for (std::int64_t i = 0; i < HW; ++i) mu += xp[i];
      }
      mu /= static_cast<real>(m);
      real var = 0;
      for (int a = 0; a < A; ++a) {
        const real* xp = xv.data() + ((static_cast<std::int64_t>(a) * C + c) * HW);
        for (std::int64_t i = 0; i < HW; ++i) {
          const real d = xp[i] - mu;
          var += d * d;
        }
      }
      var /= static_cast<real>(m);
      mean[c] = mu;
      inv_std[c] = real(1) / std::sqrt(var + eps);
      const real unbiased = m > 1 ? var * static_cast<real>(m) / static_cast<real>(m - 1) : var;
      run_mean[c] = (1 - momentum) * run_mean[c] + momentum * mu;
      run_var[c] = (1 - momentum) * run_var[c] + momentum * unbiased;
    }
  } else {
    for (int c = 0; c < C; ++c) {
      mean[c] = run_mean[c];
      inv_std[c] = real(1) / std::sqrt(run_var[c] + eps);
    }
  }
  Tensor y(xv.shape());
  Tensor xhat(xv.shape());
  const real* gam = t.val(gamma).data();
  const real* bet = t.val(beta).data();
  for (int a = 0; a < A; ++a)
    for (int c = 0; c < C; ++c) {
      const std::int64_t base = (static_cast<std::int64_t>(a) * C + c) * HW;
      const real mu = mean[c], is = inv_std[c], gc = gam[c], bc = bet[c];
      const real* xp = xv.data() + base;
      real* hp = xhat.data() + base;
      real* yp = y.data() + base;
      for (std::int64_t i = 0; i < HW; ++i) {
        hp[i] = (xp[i] - mu) * is;
        yp[i] = gc * hp[i] + bc;
      }
    }
  const Var out = detail::next_var(t);
  return t.make(std::move(y), {x, gamma, beta},
                [x, gamma, beta, out, xhat, inv_std, A, C, HW, m, training](Tape& tp) {
    const Tensor& g = tp.grad(out);
    const real* gam = tp.val(gamma).data();
    Tensor dgamma({C}), dbeta({C});
    for (int a = 0; a < A; ++a)
      for (int c = 0; c < C; ++c) {
        const std::int64_t base = (static_cast<std::int64_t>(a) * C + c) * HW;
        const real* gp = g.data() + base;
        const real* hp = xhat.data() + base;
        real sg = 0, sb = 0;
        for (std::int64_t i = 0; i < HW; ++i) {
          sg += gp[i] * hp[i];
          sb += gp[i];
        }
        dgamma[c] += sg;
        dbeta[c] += sb;
      }
    if (tp.needs_grad(gamma)) tp.grad(gamma).vec() += dgamma.vec();
    if (tp.needs_grad(beta)) tp.grad(beta).vec() += dbeta.vec();
    if (!tp.needs_grad(x)) return;
    Tensor& gx = tp.grad(x);
    const real invm = real(1) / static_cast<real>(m);
    for (int a = 0; a < A; ++a)
      for (int c = 0; c < C; ++c) {
        const std::int64_t base = (static_cast<std::int64_t>(a) * C + c) * HW;
        const real* gp = g.data() + base;
        const real* hp = xhat.data() + base;
        real* gxp = gx.data() + base;
        const real is = inv_std[c], gc = gam[c];
        if (training) {
          const real m1 = dbeta[c] * invm;   // mean of dy over the channel
          const real m2 = dgamma[c] * invm;  // mean of dy*xhat
          for (std::int64_t i = 0; i < HW; ++i)
            gxp[i] += gc * is * (gp[i] - m1 - hp[i] * m2);
        } else {
          for (std::int64_t i = 0; i < HW; ++i) gxp[i] += gc * is * gp[i];
        }
      }
  });
}

/// Pixelwise cross-entropy of (N, C, H, W) logits against integer labels
/// given as an (N, H, W) tensor of class indices; mean over N*H*W.
inline Var softmax_xent_chan(Tape& t, Var logits, const Tensor& labels) {
  const Tensor& z = t.val(logits);
  if (z.ndim() != 4) throw ShapeError("softmax_xent_chan: need 4-d logits");
  const int N = z.dim(0), C = z.dim(1), H = z.dim(2), W = z.dim(3);
  if (labels.ndim() != 3 || labels.dim(0) != N || labels.dim(1) != H || labels.dim(2) != W)
    throw ShapeError("softmax_xent_chan: label shape mismatch");
  const std::int64_t HW = static_cast<std::int64_t>(H) * W;
  const std::int64_t M = static_cast<std::int64_t>(N) * HW;
  Tensor probs(z.shape());
  real loss = 0;
  for (int n = 0; n < N; ++n)
    for (std::int64_t i = 0; i < HW; ++i) {
      real mx = -1e300;
      for (int c = 0; c < C; ++c)
        mx = std::max(mx, z.data()[(static_cast<std::int64_t>(n) * C + c) * HW + i]);
      real s = 0;
      for (int c = 0; c < C; ++c) {
        const std::int64_t k = (static_cast<std::int64_t>(n) * C + c) * HW + i;
        probs.data()[k] = std::exp(z.data()[k] - mx);
        s += probs.data()[k];
      }
      const int lab = static_cast<int>(labels.data()[static_cast<std::int64_t>(n) * HW + i]);
      if (lab < 0 || lab >= C) throw Error("softmax_xent_chan: label out of range");
      for (int c = 0; c < C; ++c)
        probs.data()[(static_cast<std::int64_t>(n) * C + c) * HW + i] /= s;
      loss -= std::log(std::max(
          probs.data()[(static_cast<std::int64_t>(n) * C + lab) * HW + i], real(1e-300)));
    }
  Tensor y = Tensor::scalar(loss / static_cast<real>(M));
  const Var out = detail::next_var(t);
  return t.make(std::move(y), {logits},
                [logits, out, probs, labels, N, C, HW, M](Tape& tp) {
    if (!tp.needs_grad(logits)) return;
    const real g = tp.grad(out)[0] / static_cast<real>(M);
    Tensor& gx = tp.grad(logits);
    for (int n = 0; n < N; ++n)
      for (std::int64_t i = 0; i < HW; ++i) {
        const int lab = static_cast<int>(labels.data()[static_cast<std::int64_t>(n) * HW + i]);
        for (int c = 0; c < C; ++c) {
          const std::int64_t k = (static_cast<std::int64_t>(n) * C + c) * HW + i;
          gx.data()[k] += g * (probs.data()[k] - (c == lab ? real(1) : real(0)));
        }
      }
  });
}

}  // namespace artic::ad
