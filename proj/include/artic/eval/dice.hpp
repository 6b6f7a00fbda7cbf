#pragma once

#include <cmath>
#include <vector>

#include "artic/core/error.hpp"
#include "artic/core/tensor.hpp"

namespace artic::eval {

/// Dice similarity 2|A ∩ B| / (|A| + |B|) of two same-shape binary masks.
/// Two entirely empty masks agree perfectly and score 1.
inline real dice(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b))
    throw ShapeError("dice: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
  std::int64_t inter = 0, total = 0;
  const real* pa = a.data();
  const real* pb = b.data();
  for (std::int64_t i = 0; i < a.numel(); ++i) {
    const bool xa = pa[i] > 0.5, xb = pb[i] > 0.5;
    inter += xa && xb;
    total += xa + xb;
  }
  if (total == 0) return 1.0;
  return 2.0 * static_cast<real>(inter) / static_cast<real>(total);
}

struct DiceStats {
  real mean = 0;
  real stddev = 0;  // population standard deviation
  int n = 0;
};

inline DiceStats aggregate(const std::vector<real>& values) {
  DiceStats s;
  s.n = static_cast<int>(values.size());
  if (s.n == 0) return s;
  real sum = 0;
  for (real v : values) sum += v;
  s.mean = sum / s.n;
  real sq = 0;
  for (real v : values) sq += (v - s.mean) * (v - s.mean);
  s.stddev = std::sqrt(sq / s.n);
  return s;
}

/// Copy of frame i of an (n, H, W) stack.
inline Tensor frame_of(const Tensor& stack, int i) {
  if (stack.ndim() != 3) throw ShapeError("frame_of: need (n, H, W)");
  Tensor out({stack.dim(1), stack.dim(2)});
  std::copy_n(stack.data() + static_cast<std::int64_t>(i) * out.numel(), out.numel(),
              out.data());
  return out;
}

}  // namespace artic::eval
