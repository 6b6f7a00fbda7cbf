#pragma once

#include <algorithm>
#include <cassert>
#include <cstdint>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <vector>

// Threading happens at the layer loops, never inside Eigen, so results do not
// depend on the thread count.
#ifndef EIGEN_DONT_PARALLELIZE
#define EIGEN_DONT_PARALLELIZE
#endif
#include <Eigen/Core>

namespace artic {

using real = double;

using MatrixRM =
    Eigen::Matrix<real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<MatrixRM>;
using ConstMatMap = Eigen::Map<const MatrixRM>;
using VecMap = Eigen::Map<Eigen::Matrix<real, Eigen::Dynamic, 1>>;
using ConstVecMap = Eigen::Map<const Eigen::Matrix<real, Eigen::Dynamic, 1>>;

/// Dense row-major n-d array of `real`. Copies share storage; use clone()
/// for a deep copy. Always contiguous.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<int> shape)
      : shape_(std::move(shape)),
        buf_(std::make_shared<std::vector<real>>(count_(shape_), real(0))) {}

  Tensor(std::initializer_list<int> shape)
      : Tensor(std::vector<int>(shape)) {}

  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }

  static Tensor full(std::vector<int> shape, real v) {
    Tensor t(std::move(shape));
    std::fill(t.buf_->begin(), t.buf_->end(), v);
    return t;
  }

  static Tensor scalar(real v) { return full({1}, v); }

  static Tensor from(std::vector<int> shape, std::vector<real> values) {
    Tensor t;
    t.shape_ = std::move(shape);
    if (static_cast<std::int64_t>(values.size()) != count_(t.shape_))
      throw std::invalid_argument("Tensor::from: value count does not match shape");
    t.buf_ = std::make_shared<std::vector<real>>(std::move(values));
    return t;
  }

  bool defined() const { return buf_ != nullptr; }
  const std::vector<int>& shape() const { return shape_; }
  int dim(int i) const { return shape_.at(static_cast<std::size_t>(i)); }
  int ndim() const { return static_cast<int>(shape_.size()); }
  std::int64_t numel() const { return buf_ ? static_cast<std::int64_t>(buf_->size()) : 0; }

  real* data() { return buf_->data(); }
  const real* data() const { return buf_->data(); }

  real& operator[](std::int64_t i) { return (*buf_)[static_cast<std::size_t>(i)]; }
  real operator[](std::int64_t i) const { return (*buf_)[static_cast<std::size_t>(i)]; }

  real& at(int i) { return (*buf_)[idx_(i)]; }
  real& at(int i, int j) { return (*buf_)[idx_(i, j)]; }
  real& at(int i, int j, int k) { return (*buf_)[idx_(i, j, k)]; }
  real& at(int i, int j, int k, int l) { return (*buf_)[idx_(i, j, k, l)]; }
  real at(int i) const { return (*buf_)[idx_(i)]; }
  real at(int i, int j) const { return (*buf_)[idx_(i, j)]; }
  real at(int i, int j, int k) const { return (*buf_)[idx_(i, j, k)]; }
  real at(int i, int j, int k, int l) const { return (*buf_)[idx_(i, j, k, l)]; }

  void fill(real v) { std::fill(buf_->begin(), buf_->end(), v); }

  Tensor clone() const {
    Tensor t;
    t.shape_ = shape_;
    t.buf_ = std::make_shared<std::vector<real>>(*buf_);
    return t;
  }

  /// Same storage, new shape (element count must match).
  Tensor reshaped(std::vector<int> shape) const {
    if (count_(shape) != numel())
      throw std::invalid_argument("Tensor::reshaped: element count mismatch");
    Tensor t;
    t.shape_ = std::move(shape);
    t.buf_ = buf_;
    return t;
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  /// 2-d Eigen view; tensor is interpreted as (rows, numel/rows).
  MatMap mat(int rows, int cols) {
    assert(static_cast<std::int64_t>(rows) * cols == numel());
    return MatMap(data(), rows, cols);
  }
  ConstMatMap mat(int rows, int cols) const {
    assert(static_cast<std::int64_t>(rows) * cols == numel());
    return ConstMatMap(data(), rows, cols);
  }
  VecMap vec() { return VecMap(data(), numel()); }
  ConstVecMap vec() const { return ConstVecMap(data(), numel()); }

  std::string shape_str() const {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < shape_.size(); ++i)
      os << shape_[i] << (i + 1 < shape_.size() ? "," : "");
    os << ')';
    return os.str();
  }

 private:
  static std::int64_t count_(const std::vector<int>& s) {
    std::int64_t n = 1;
    for (int d : s) {
      if (d < 0) throw std::invalid_argument("negative tensor dimension");
      n *= d;
    }
    return n;
  }

  std::size_t idx_(int i) const {
    assert(ndim() == 1);
    return static_cast<std::size_t>(i);
  }
  std::size_t idx_(int i, int j) const {
    assert(ndim() == 2);
    return static_cast<std::size_t>(i) * shape_[1] + j;
  }
  std::size_t idx_(int i, int j, int k) const {
    assert(ndim() == 3);
    return (static_cast<std::size_t>(i) * shape_[1] + j) * shape_[2] + k;
  }
  std::size_t idx_(int i, int j, int k, int l) const {
    assert(ndim() == 4);
    return ((static_cast<std::size_t>(i) * shape_[1] + j) * shape_[2] + k) * shape_[3] + l;
  }

  std::vector<int> shape_;
  std::shared_ptr<std::vector<real>> buf_;
};

}  // namespace artic
