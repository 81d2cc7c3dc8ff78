#ifndef MLKP_TENSOR_HPP
#define MLKP_TENSOR_HPP

#include <array>
#include <cstring>
#include <initializer_list>
#include <ostream>

#include "mlkp/core.hpp"

namespace mlkp {

// Dense rank-4 feature map, (batch n, channels c, height h, width w),
// row-major in that order. All library operations preserve finiteness of
// finite inputs; verify with allFinite() where it matters.
template <typename Scalar>
class Tensor {
 public:
  using Storage = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

  Tensor() : n_(0), c_(0), h_(0), w_(0) {}

  Tensor(Index n, Index c, Index h, Index w) : n_(n), c_(c), h_(h), w_(w) {
    MLKP_CHECK(n >= 1 && c >= 1 && h >= 1 && w >= 1,
               "tensor dims must be >= 1, got (" << n << ", " << c << ", " << h
                                                 << ", " << w << ")");
    data_ = Storage::Zero(n * c * h * w);
  }

  static Tensor zeros(Index n, Index c, Index h, Index w) {
    return Tensor(n, c, h, w);
  }

  static Tensor full(Index n, Index c, Index h, Index w, Scalar value) {
    Tensor t(n, c, h, w);
    t.data_.setConstant(value);
    return t;
  }

  static Tensor from(Index n, Index c, Index h, Index w,
                     std::initializer_list<Scalar> values) {
    Tensor t(n, c, h, w);
    MLKP_CHECK(static_cast<Index>(values.size()) == t.size(),
               "initializer has " << values.size() << " values, tensor needs "
                                  << t.size());
    Index i = 0;
    for (Scalar v : values) t.data_[i++] = v;
    return t;
  }

  Index n() const { return n_; }
  Index c() const { return c_; }
  Index h() const { return h_; }
  Index w() const { return w_; }
  Index size() const { return data_.size(); }
  bool empty() const { return data_.size() == 0; }
  std::array<Index, 4> shape() const { return {n_, c_, h_, w_}; }

  Scalar& operator()(Index n, Index c, Index h, Index w) {
    return data_[((n * c_ + c) * h_ + h) * w_ + w];
  }
  Scalar operator()(Index n, Index c, Index h, Index w) const {
    return data_[((n * c_ + c) * h_ + h) * w_ + w];
  }

  Scalar& at(Index n, Index c, Index h, Index w) {
    MLKP_CHECK(n >= 0 && n < n_ && c >= 0 && c < c_ && h >= 0 && h < h_ &&
                   w >= 0 && w < w_,
               "index (" << n << ", " << c << ", " << h << ", " << w
                         << ") out of range for " << shapeString());
    return (*this)(n, c, h, w);
  }

  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }
  Storage& array() { return data_; }
  const Storage& array() const { return data_; }

  // (c, h*w) matrix view of one batch item.
  MatrixMap<Scalar> batchMatrix(Index n) {
    return MatrixMap<Scalar>(data_.data() + n * c_ * h_ * w_, c_, h_ * w_);
  }
  ConstMatrixMap<Scalar> batchMatrix(Index n) const {
    return ConstMatrixMap<Scalar>(data_.data() + n * c_ * h_ * w_, c_, h_ * w_);
  }

  // (h*w)-long view of one channel of one batch item.
  Eigen::Map<Vector<Scalar>> channel(Index n, Index c) {
    return Eigen::Map<Vector<Scalar>>(data_.data() + (n * c_ + c) * h_ * w_,
                                      h_ * w_);
  }
  Eigen::Map<const Vector<Scalar>> channel(Index n, Index c) const {
    return Eigen::Map<const Vector<Scalar>>(
        data_.data() + (n * c_ + c) * h_ * w_, h_ * w_);
  }

  bool sameShape(const Tensor& other) const {
    return n_ == other.n_ && c_ == other.c_ && h_ == other.h_ &&
           w_ == other.w_;
  }

  bool allFinite() const { return data_.isFinite().all(); }

  std::string shapeString() const {
    std::ostringstream oss;
    oss << "(" << n_ << ", " << c_ << ", " << h_ << ", " << w_ << ")";
    return oss.str();
  }

  void setZero() { data_.setZero(); }

  void fillNormal(Rng& rng, Scalar stddev = Scalar(1)) {
    for (Index i = 0; i < data_.size(); ++i)
      data_[i] = static_cast<Scalar>(rng.normal()) * stddev;
  }

  void fillUniform(Rng& rng, Scalar lo, Scalar hi) {
    for (Index i = 0; i < data_.size(); ++i)
      data_[i] = static_cast<Scalar>(rng.uniform(lo, hi));
  }

 private:
  Index n_, c_, h_, w_;
  Storage data_;
};

template <typename Scalar>
bool bitwiseEqual(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  if (!a.sameShape(b)) return false;
  return std::memcmp(a.data(), b.data(),
                     sizeof(Scalar) * static_cast<size_t>(a.size())) == 0;
}

template <typename Scalar>
Scalar maxAbsDiff(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  MLKP_CHECK(a.sameShape(b), "maxAbsDiff: shape mismatch " << a.shapeString()
                                                           << " vs "
                                                           << b.shapeString());
  return (a.array() - b.array()).abs().maxCoeff();
}

// |a - b| / max(1, |a|, |b|), the relative-error convention used throughout
// the verification suites.
template <typename Scalar>
Scalar relError(Scalar a, Scalar b) {
  const Scalar denom =
      std::max(Scalar(1), std::max(std::abs(a), std::abs(b)));
  return std::abs(a - b) / denom;
}

template <typename Scalar>
Scalar maxRelError(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  MLKP_CHECK(a.sameShape(b), "maxRelError: shape mismatch " << a.shapeString()
                                                            << " vs "
                                                            << b.shapeString());
  Scalar worst = 0;
  for (Index i = 0; i < a.size(); ++i)
    worst = std::max(worst, relError(a.data()[i], b.data()[i]));
  return worst;
}

using TensorD = Tensor<double>;
using TensorF = Tensor<float>;

}  // namespace mlkp

#endif  // MLKP_TENSOR_HPP
