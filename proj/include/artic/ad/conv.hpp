#pragma once

#include <memory>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "artic/ad/ops.hpp"

namespace artic::ad {

namespace detail {

inline int nthreads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

/// One distinct buffer per thread (Tensor copies share storage, so the
/// fill-constructor form would alias them).
inline std::vector<Tensor> make_scratch(int n, const std::vector<int>& shape) {
  std::vector<Tensor> v;
  v.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) v.emplace_back(shape);
  return v;
}

/// cols: (C*k*k, Ho*Wo) patch matrix of one (C, H, W) image.
inline void im2col_2d(const real* x, int C, int H, int W, int k, int stride,
                      int pad, int Ho, int Wo, real* cols) {
  const std::int64_t HW = static_cast<std::int64_t>(H) * W;
  const std::int64_t out_hw = static_cast<std::int64_t>(Ho) * Wo;
  std::int64_t r = 0;
  for (int c = 0; c < C; ++c)
    for (int kh = 0; kh < k; ++kh)
      for (int kw = 0; kw < k; ++kw, ++r) {
        real* dst = cols + r * out_hw;
        const real* src = x + c * HW;
        for (int oh = 0; oh < Ho; ++oh) {
          const int ih = oh * stride + kh - pad;
          for (int ow = 0; ow < Wo; ++ow) {
            const int iw = ow * stride + kw - pad;
            dst[static_cast<std::int64_t>(oh) * Wo + ow] =
                (ih >= 0 && ih < H && iw >= 0 && iw < W)
                    ? src[static_cast<std::int64_t>(ih) * W + iw]
                    : real(0);
          }
        }
      }
}

/// Scatter-add of a cols matrix back into a (C, H, W) image.
inline void col2im_2d(const real* cols, int C, int H, int W, int k, int stride,
                      int pad, int Ho, int Wo, real* x) {
  const std::int64_t HW = static_cast<std::int64_t>(H) * W;
  const std::int64_t out_hw = static_cast<std::int64_t>(Ho) * Wo;
  std::int64_t r = 0;
  for (int c = 0; c < C; ++c)
    for (int kh = 0; kh < k; ++kh)
      for (int kw = 0; kw < k; ++kw, ++r) {
        const real* src = cols + r * out_hw;
        real* dst = x + c * HW;
        for (int oh = 0; oh < Ho; ++oh) {
          const int ih = oh * stride + kh - pad;
          if (ih < 0 || ih >= H) continue;
          for (int ow = 0; ow < Wo; ++ow) {
            const int iw = ow * stride + kw - pad;
            if (iw >= 0 && iw < W)
              dst[static_cast<std::int64_t>(ih) * W + iw] +=
                  src[static_cast<std::int64_t>(oh) * Wo + ow];
          }
        }
      }
}

/// cols: (C*kt*kh*kw, Ho*Wo) patch matrix for output frame t of an
/// (T, C, H, W) sequence; temporal taps outside [0, T) read as zero.
inline void im2col_3d(const Tensor& x, int t, int kt, int khs, int kws, int pt,
                      int ph, int pw, int Ho, int Wo, real* cols) {
  const int T = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::int64_t HW = static_cast<std::int64_t>(H) * W;
  const std::int64_t out_hw = static_cast<std::int64_t>(Ho) * Wo;
  std::int64_t r = 0;
  for (int c = 0; c < C; ++c)
    for (int dt = 0; dt < kt; ++dt) {
      const int it = t + dt - pt;
      const bool in_t = it >= 0 && it < T;
      const real* plane =
          in_t ? x.data() + (static_cast<std::int64_t>(it) * C + c) * HW : nullptr;
      for (int dh = 0; dh < khs; ++dh)
        for (int dw = 0; dw < kws; ++dw, ++r) {
          real* dst = cols + r * out_hw;
          if (!in_t) {
            std::fill_n(dst, out_hw, real(0));
            continue;
          }
          for (int oh = 0; oh < Ho; ++oh) {
            const int ih = oh + dh - ph;
            for (int ow = 0; ow < Wo; ++ow) {
              const int iw = ow + dw - pw;
              dst[static_cast<std::int64_t>(oh) * Wo + ow] =
                  (ih >= 0 && ih < H && iw >= 0 && iw < W)
                      ? plane[static_cast<std::int64_t>(ih) * W + iw]
                      : real(0);
            }
          }
        }
    }
}

inline void col2im_3d(const real* cols, Tensor& gx, int t, int kt, int khs,
                      int kws, int pt, int ph, int pw, int Ho, int Wo) {
  const int T = gx.dim(0), C = gx.dim(1), H = gx.dim(2), W = gx.dim(3);
  const std::int64_t HW = static_cast<std::int64_t>(H) * W;
  const std::int64_t out_hw = static_cast<std::int64_t>(Ho) * Wo;
  std::int64_t r = 0;
  for (int c = 0; c < C; ++c)
    for (int dt = 0; dt < kt; ++dt) {
      const int it = t + dt - pt;
      const bool in_t = it >= 0 && it < T;
      real* plane =
          in_t ? gx.data() + (static_cast<std::int64_t>(it) * C + c) * HW : nullptr;
      for (int dh = 0; dh < khs; ++dh)
        for (int dw = 0; dw < kws; ++dw, ++r) {
          if (!in_t) continue;
          const real* src = cols + r * out_hw;
          for (int oh = 0; oh < Ho; ++oh) {
            const int ih = oh + dh - ph;
            if (ih < 0 || ih >= H) continue;
            for (int ow = 0; ow < Wo; ++ow) {
              const int iw = ow + dw - pw;
              if (iw >= 0 && iw < W)
                plane[static_cast<std::int64_t>(ih) * W + iw] +=
                    src[static_cast<std::int64_t>(oh) * Wo + ow];
            }
          }
        }
    }
}

}  // namespace detail

/// 2-d convolution over (N, C, H, W); frames are independent samples.
/// weight (Co, Ci, k, k), bias (Co). Output (N, Co, Ho, Wo).
inline Var conv2d(Tape& t, Var x, Var weight, Var bias, int stride, int pad) {
  const Tensor& xv = t.val(x);
  const Tensor& wv = t.val(weight);
  if (xv.ndim() != 4 || wv.ndim() != 4) throw ShapeError("conv2d: need 4-d input/weight");
  const int N = xv.dim(0), Ci = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
  const int Co = wv.dim(0), k = wv.dim(2);
  if (wv.dim(1) != Ci) throw ShapeError("conv2d: channel mismatch");
  if ((H + 2 * pad - k) % stride != 0)
    throw ShapeError("conv2d: geometry does not divide evenly");
  const int Ho = (H + 2 * pad - k) / stride + 1;
  const int Wo = (W + 2 * pad - k) / stride + 1;
  const int R = Ci * k * k;
  const std::int64_t out_hw = static_cast<std::int64_t>(Ho) * Wo;

  Tensor y({N, Co, Ho, Wo});
  {
    const int nt = detail::nthreads();
    std::vector<Tensor> scratch = detail::make_scratch(nt, {R, Ho, Wo});
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int n = 0; n < N; ++n) {
#ifdef _OPENMP
      Tensor& cols = scratch[static_cast<std::size_t>(omp_get_thread_num())];
#else
      Tensor& cols = scratch[0];
#endif
      detail::im2col_2d(xv.data() + static_cast<std::int64_t>(n) * Ci * H * W, Ci, H,
                        W, k, stride, pad, Ho, Wo, cols.data());
      MatMap ym(y.data() + static_cast<std::int64_t>(n) * Co * out_hw, Co, out_hw);
      ym.noalias() = wv.mat(Co, R) * cols.mat(R, static_cast<int>(out_hw));
      ym.colwise() += t.val(bias).vec();
    }
  }
  const Var out = detail::next_var(t);
  return t.make(std::move(y), {x, weight, bias},
                [x, weight, bias, out, N, Ci, H, W, Co, k, stride, pad, Ho, Wo,
                 R, out_hw](Tape& tp) {
    const Tensor& g = tp.grad(out);
    const Tensor& xv2 = tp.val(x);
    const Tensor& wv2 = tp.val(weight);
    const int nt = detail::nthreads();
    std::vector<Tensor> scratch = detail::make_scratch(nt, {R, Ho, Wo});
    if (tp.needs_grad(weight) || tp.needs_grad(bias)) {
      // Per-sample partials, then an ordered reduction: bit-stable result
      // independent of the thread count.
      Tensor wslab({N, Co * R});
      Tensor bslab({N, Co});
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
      for (int n = 0; n < N; ++n) {
#ifdef _OPENMP
        Tensor& cols = scratch[static_cast<std::size_t>(omp_get_thread_num())];
#else
        Tensor& cols = scratch[0];
#endif
        detail::im2col_2d(xv2.data() + static_cast<std::int64_t>(n) * Ci * H * W, Ci,
                          H, W, k, stride, pad, Ho, Wo, cols.data());
        ConstMatMap gm(g.data() + static_cast<std::int64_t>(n) * Co * out_hw, Co, out_hw);
        MatMap(wslab.data() + static_cast<std::int64_t>(n) * Co * R, Co, R).noalias() =
            gm * cols.mat(R, static_cast<int>(out_hw)).transpose();
        VecMap(bslab.data() + static_cast<std::int64_t>(n) * Co, Co) = gm.rowwise().sum();
      }
      if (tp.needs_grad(weight)) {
        auto gw = tp.grad(weight).vec();
        for (int n = 0; n < N; ++n)
          gw += ConstVecMap(wslab.data() + static_cast<std::int64_t>(n) * Co * R, Co * R);
      }
      if (tp.needs_grad(bias)) {
        auto gb = tp.grad(bias).vec();
        for (int n = 0; n < N; ++n)
          gb += ConstVecMap(bslab.data() + static_cast<std::int64_t>(n) * Co, Co);
      }
    }
    if (tp.needs_grad(x)) {
      Tensor& gx = tp.grad(x);
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
      for (int n = 0; n < N; ++n) {
#ifdef _OPENMP
        Tensor& cols = scratch[static_cast<std::size_t>(omp_get_thread_num())];
#else
        Tensor& cols = scratch[0];
#endif
        ConstMatMap gm(g.data() + static_cast<std::int64_t>(n) * Co * out_hw, Co, out_hw);
        cols.mat(R, static_cast<int>(out_hw)).noalias() = wv2.mat(Co, R).transpose() * gm;
        detail::col2im_2d(cols.data(), Ci, H, W, k, stride, pad, Ho, Wo,
                          gx.data() + static_cast<std::int64_t>(n) * Ci * H * W);
      }
    }
  });
}

/// 3-d convolution over an (T, C, H, W) frame sequence, stride 1, padding
/// kt/2 temporally and kh/2, kw/2 spatially (shape-preserving for odd kernels).
/// weight (Co, Ci, kt, kh, kw), bias (Co).
inline Var conv3d(Tape& t, Var x, Var weight, Var bias) {
  const Tensor& xv = t.val(x);
  const Tensor& wv = t.val(weight);
  if (xv.ndim() != 4 || wv.ndim() != 5) throw ShapeError("conv3d: bad ranks");
  const int T = xv.dim(0), Ci = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
  const int Co = wv.dim(0), kt = wv.dim(2), kh = wv.dim(3), kw = wv.dim(4);
  if (wv.dim(1) != Ci) throw ShapeError("conv3d: channel mismatch");
  const int pt = kt / 2, ph = kh / 2, pw = kw / 2;
  const int Ho = H + 2 * ph - kh + 1, Wo = W + 2 * pw - kw + 1;
  const int R = Ci * kt * kh * kw;
  const std::int64_t out_hw = static_cast<std::int64_t>(Ho) * Wo;

  Tensor y({T, Co, Ho, Wo});
  {
    const int nt = detail::nthreads();
    std::vector<Tensor> scratch = detail::make_scratch(nt, {R, Ho, Wo});
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int f = 0; f < T; ++f) {
#ifdef _OPENMP
      Tensor& cols = scratch[static_cast<std::size_t>(omp_get_thread_num())];
#else
      Tensor& cols = scratch[0];
#endif
      detail::im2col_3d(xv, f, kt, kh, kw, pt, ph, pw, Ho, Wo, cols.data());
      MatMap ym(y.data() + static_cast<std::int64_t>(f) * Co * out_hw, Co, out_hw);
      ym.noalias() = wv.mat(Co, R) * cols.mat(R, static_cast<int>(out_hw));
      ym.colwise() += t.val(bias).vec();
    }
  }
  const Var out = detail::next_var(t);
  return t.make(std::move(y), {x, weight, bias},
                [x, weight, bias, out, T, Ci, H, W, Co, kt, kh, kw, R,
                 out_hw](Tape& tp) {
    const int pt = kt / 2, ph = kh / 2, pw = kw / 2;
    const int Ho = H + 2 * ph - kh + 1, Wo = W + 2 * pw - kw + 1;
    const Tensor& g = tp.grad(out);
    const Tensor& xv2 = tp.val(x);
    const Tensor& wv2 = tp.val(weight);
    const int nt = detail::nthreads();
    std::vector<Tensor> scratch = detail::make_scratch(nt, {R, Ho, Wo});
    if (tp.needs_grad(weight) || tp.needs_grad(bias)) {
      Tensor wslab({T, Co * R});
      Tensor bslab({T, Co});
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
      for (int f = 0; f < T; ++f) {
#ifdef _OPENMP
        Tensor& cols = scratch[static_cast<std::size_t>(omp_get_thread_num())];
#else
        Tensor& cols = scratch[0];
#endif
        detail::im2col_3d(xv2, f, kt, kh, kw, pt, ph, pw, Ho, Wo, cols.data());
        ConstMatMap gm(g.data() + static_cast<std::int64_t>(f) * Co * out_hw, Co, out_hw);
        MatMap(wslab.data() + static_cast<std::int64_t>(f) * Co * R, Co, R).noalias() =
            gm * cols.mat(R, static_cast<int>(out_hw)).transpose();
        VecMap(bslab.data() + static_cast<std::int64_t>(f) * Co, Co) = gm.rowwise().sum();
      }
      if (tp.needs_grad(weight)) {
        auto gw = tp.grad(weight).vec();
        for (int f = 0; f < T; ++f)
          gw += ConstVecMap(wslab.data() + static_cast<std::int64_t>(f) * Co * R, Co * R);
      }
      if (tp.needs_grad(bias)) {
        auto gb = tp.grad(bias).vec();
        for (int f = 0; f < T; ++f)
          gb += ConstVecMap(bslab.data() + static_cast<std::int64_t>(f) * Co, Co);
      }
    }
    if (tp.needs_grad(x)) {
      Tensor& gx = tp.grad(x);
      // Frames striped by t mod kt write disjoint slices of gx, and stripes
      // run one after the other, so accumulation order is fixed.
      for (int phase = 0; phase < kt; ++phase) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
        for (int f = phase; f < T; f += kt) {
#ifdef _OPENMP
          Tensor& cols = scratch[static_cast<std::size_t>(omp_get_thread_num())];
#else
          Tensor& cols = scratch[0];
#endif
          ConstMatMap gm(g.data() + static_cast<std::int64_t>(f) * Co * out_hw, Co, out_hw);
          cols.mat(R, static_cast<int>(out_hw)).noalias() =
              wv2.mat(Co, R).transpose() * gm;
          detail::col2im_3d(cols.data(), gx, f, kt, kh, kw, pt, ph, pw, Ho, Wo);
        }
      }
    }
  });
}

/// Transposed 2-d convolution over (N, C, H, W); frames independent.
/// weight (Ci, Co, k, k), bias (Co). Output (N, Co, (H-1)s - 2p + k, ...).
inline Var tconv2d(Tape& t, Var x, Var weight, Var bias, int stride, int pad) {
  const Tensor& xv = t.val(x);
  const Tensor& wv = t.val(weight);
  if (xv.ndim() != 4 || wv.ndim() != 4) throw ShapeError("tconv2d: need 4-d input/weight");
  const int N = xv.dim(0), Ci = xv.dim(1), Hi = xv.dim(2), Wi = xv.dim(3);
  const int Co = wv.dim(1), k = wv.dim(2);
  if (wv.dim(0) != Ci) throw ShapeError("tconv2d: channel mismatch");
  const int Ho = (Hi - 1) * stride - 2 * pad + k;
  const int Wo = (Wi - 1) * stride - 2 * pad + k;
  if (Ho <= 0 || Wo <= 0) throw ShapeError("tconv2d: non-positive output size");
  const int R = Co * k * k;
  const std::int64_t in_hw = static_cast<std::int64_t>(Hi) * Wi;
  const std::int64_t hw_out = static_cast<std::int64_t>(Ho) * Wo;

  Tensor y({N, Co, Ho, Wo});
  {
    const int nt = detail::nthreads();
    std::vector<Tensor> scratch = detail::make_scratch(nt, {R, Hi, Wi});
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int n = 0; n < N; ++n) {
#ifdef _OPENMP
      Tensor& cols = scratch[static_cast<std::size_t>(omp_get_thread_num())];
#else
      Tensor& cols = scratch[0];
#endif
      ConstMatMap xm(xv.data() + static_cast<std::int64_t>(n) * Ci * in_hw, Ci, in_hw);
      cols.mat(R, static_cast<int>(in_hw)).noalias() = wv.mat(Ci, R).transpose() * xm;
      real* yn = y.data() + static_cast<std::int64_t>(n) * Co * hw_out;
      std::fill_n(yn, Co * hw_out, real(0));
      // Output plays the conv "input" role: scatter with conv geometry.
      detail::col2im_2d(cols.data(), Co, Ho, Wo, k, stride, pad, Hi, Wi, yn);
      MatMap ym(yn, Co, hw_out);
      ym.colwise() += t.val(bias).vec();
    }
  }
  const Var out = detail::next_var(t);
  return t.make(std::move(y), {x, weight, bias},
                [x, weight, bias, out, N, Ci, Hi, Wi, Co, k, stride, pad, Ho, Wo, R,
                 in_hw, hw_out](Tape& tp) {
    const Tensor& g = tp.grad(out);
    const Tensor& xv2 = tp.val(x);
    const Tensor& wv2 = tp.val(weight);
    const int nt = detail::nthreads();
    std::vector<Tensor> scratch = detail::make_scratch(nt, {R, Hi, Wi});
    if (tp.needs_grad(weight) || tp.needs_grad(bias)) {
      Tensor wslab({N, Ci * R});
      Tensor bslab({N, Co});
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
      for (int n = 0; n < N; ++n) {
#ifdef _OPENMP
        Tensor& cols = scratch[static_cast<std::size_t>(omp_get_thread_num())];
#else
        Tensor& cols = scratch[0];
#endif
        const real* gn = g.data() + static_cast<std::int64_t>(n) * Co * hw_out;
        detail::im2col_2d(gn, Co, Ho, Wo, k, stride, pad, Hi, Wi, cols.data());
        ConstMatMap xm(xv2.data() + static_cast<std::int64_t>(n) * Ci * in_hw, Ci, in_hw);
        MatMap(wslab.data() + static_cast<std::int64_t>(n) * Ci * R, Ci, R).noalias() =
            xm * cols.mat(R, static_cast<int>(in_hw)).transpose();
        VecMap(bslab.data() + static_cast<std::int64_t>(n) * Co, Co) =
            ConstMatMap(gn, Co, hw_out).rowwise().sum();
      }
      if (tp.needs_grad(weight)) {
        auto gw = tp.grad(weight).vec();
        for (int n = 0; n < N; ++n)
          gw += ConstVecMap(wslab.data() + static_cast<std::int64_t>(n) * Ci * R, Ci * R);
      }
      if (tp.needs_grad(bias)) {
        auto gb = tp.grad(bias).vec();
        for (int n = 0; n < N; ++n)
          gb += ConstVecMap(bslab.data() + static_cast<std::int64_t>(n) * Co, Co);
      }
    }
    if (tp.needs_grad(x)) {
      Tensor& gx = tp.grad(x);
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
      for (int n = 0; n < N; ++n) {
#ifdef _OPENMP
        Tensor& cols = scratch[static_cast<std::size_t>(omp_get_thread_num())];
#else
        Tensor& cols = scratch[0];
#endif
        const real* gn = g.data() + static_cast<std::int64_t>(n) * Co * hw_out;
        detail::im2col_2d(gn, Co, Ho, Wo, k, stride, pad, Hi, Wi, cols.data());
        MatMap gxm(gx.data() + static_cast<std::int64_t>(n) * Ci * in_hw, Ci, in_hw);
        gxm.noalias() += wv2.mat(Ci, R) * cols.mat(R, static_cast<int>(in_hw));
      }
    }
  });
}

struct PoolResult {
  Var out;
  std::shared_ptr<std::vector<std::int32_t>> indices;  // argmax within input plane
};

/// 2x2 max pooling with stride 2 over (N, C, H, W), recording argmax indices
/// for unpooling. H and W must be even.
inline PoolResult maxpool2d(Tape& t, Var x) {
  const Tensor& xv = t.val(x);
  if (xv.ndim() != 4) throw ShapeError("maxpool2d: need 4-d input");
  const int N = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
  if (H % 2 || W % 2) throw ShapeError("maxpool2d: odd spatial size");
  const int Ho = H / 2, Wo = W / 2;
  Tensor y({N, C, Ho, Wo});
  auto idx = std::make_shared<std::vector<std::int32_t>>(
      static_cast<std::size_t>(y.numel()));
  const std::int64_t HW = static_cast<std::int64_t>(H) * W;
  const std::int64_t out_hw = static_cast<std::int64_t>(Ho) * Wo;
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const real* xp = xv.data() + (static_cast<std::int64_t>(n) * C + c) * HW;
      real* yp = y.data() + (static_cast<std::int64_t>(n) * C + c) * out_hw;
      std::int32_t* ip = idx->data() + (static_cast<std::int64_t>(n) * C + c) * out_hw;
      for (int oh = 0; oh < Ho; ++oh)
        for (int ow = 0; ow < Wo; ++ow) {
          std::int32_t best = static_cast<std::int32_t>((2 * oh) * W + 2 * ow);
          real bv = xp[best];
          const int cand[3] = {(2 * oh) * W + 2 * ow + 1, (2 * oh + 1) * W + 2 * ow,
                               (2 * oh + 1) * W + 2 * ow + 1};
          for (int q : cand)
            if (xp[q] > bv) {
              bv = xp[q];
              best = static_cast<std::int32_t>(q);
            }
          yp[static_cast<std::int64_t>(oh) * Wo + ow] = bv;
          ip[static_cast<std::int64_t>(oh) * Wo + ow] = best;
        }
    }
  const Var out = detail::next_var(t);
  Var o = t.make(std::move(y), {x}, [x, out, idx, N, C, HW, out_hw](Tape& tp) {
    if (!tp.needs_grad(x)) return;
    const Tensor& g = tp.grad(out);
    Tensor& gx = tp.grad(x);
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int n = 0; n < N; ++n)
      for (int c = 0; c < C; ++c) {
        const real* gp = g.data() + (static_cast<std::int64_t>(n) * C + c) * out_hw;
        real* gxp = gx.data() + (static_cast<std::int64_t>(n) * C + c) * HW;
        const std::int32_t* ip =
            idx->data() + (static_cast<std::int64_t>(n) * C + c) * out_hw;
        for (std::int64_t i = 0; i < out_hw; ++i) gxp[ip[i]] += gp[i];
      }
  });
  return {o, idx};
}

/// Inverse of maxpool2d: places values at the recorded argmax positions.
inline Var maxunpool2d(Tape& t, Var x,
                       const std::shared_ptr<std::vector<std::int32_t>>& idx) {
  const Tensor& xv = t.val(x);
  if (xv.ndim() != 4) throw ShapeError("maxunpool2d: need 4-d input");
  const int N = xv.dim(0), C = xv.dim(1), Hi = xv.dim(2), Wi = xv.dim(3);
  const int H = Hi * 2, W = Wi * 2;
  const std::int64_t in_hw = static_cast<std::int64_t>(Hi) * Wi;
  const std::int64_t HW = static_cast<std::int64_t>(H) * W;
  if (static_cast<std::int64_t>(idx->size()) != xv.numel())
    throw ShapeError("maxunpool2d: index count mismatch");
  Tensor y({N, C, H, W});
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const real* xp = xv.data() + (static_cast<std::int64_t>(n) * C + c) * in_hw;
      real* yp = y.data() + (static_cast<std::int64_t>(n) * C + c) * HW;
      const std::int32_t* ip = idx->data() + (static_cast<std::int64_t>(n) * C + c) * in_hw;
      for (std::int64_t i = 0; i < in_hw; ++i) yp[ip[i]] = xp[i];
    }
  const Var out = detail::next_var(t);
  return t.make(std::move(y), {x}, [x, out, idx, N, C, in_hw, HW](Tape& tp) {
    if (!tp.needs_grad(x)) return;
    const Tensor& g = tp.grad(out);
    Tensor& gx = tp.grad(x);
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int n = 0; n < N; ++n)
      for (int c = 0; c < C; ++c) {
        real* gxp = gx.data() + (static_cast<std::int64_t>(n) * C + c) * in_hw;
        const real* gp = g.data() + (static_cast<std::int64_t>(n) * C + c) * HW;
        const std::int32_t* ip =
            idx->data() + (static_cast<std::int64_t>(n) * C + c) * in_hw;
        for (std::int64_t i = 0; i < in_hw; ++i) gxp[i] += gp[ip[i]];
      }
  });
}

}  // namespace artic::ad
