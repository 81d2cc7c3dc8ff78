#ifndef MLKP_CONV_HPP
#define MLKP_CONV_HPP

#include "mlkp/tensor.hpp"

namespace mlkp {

// Convolution / transposed-convolution parameters. Weights are
// (c_out, c_in, k_h, k_w); bias has length c_out. Convolution is
// cross-correlation (no kernel flip), the deep-learning convention.
template <typename Scalar>
struct ConvParams {
  Tensor<Scalar> w;   // (c_out, c_in, k_h, k_w)
  Vector<Scalar> b;   // c_out
  int stride = 1;
  int padding = 0;

  Index cOut() const { return w.n(); }
  Index cIn() const { return w.c(); }
  Index kh() const { return w.h(); }
  Index kw() const { return w.w(); }
};

// Gradient buffers mirroring ConvParams.
template <typename Scalar>
struct ConvGrads {
  Tensor<Scalar> w;
  Vector<Scalar> b;

  static ConvGrads zerosLike(const ConvParams<Scalar>& p) {
    ConvGrads g;
    if (!p.w.empty())
      g.w = Tensor<Scalar>::zeros(p.w.n(), p.w.c(), p.w.h(), p.w.w());
    g.b = Vector<Scalar>::Zero(p.b.size());
    return g;
  }

  void setZero() {
    w.setZero();
    b.setZero();
  }
};

template <typename Scalar>
ConvParams<Scalar> makeConv(Index c_out, Index c_in, Index k, int stride = 1,
                            int padding = 0) {
  ConvParams<Scalar> p;
  p.w = Tensor<Scalar>::zeros(c_out, c_in, k, k);
  p.b = Vector<Scalar>::Zero(c_out);
  p.stride = stride;
  p.padding = padding;
  return p;
}

// Xavier/Glorot uniform over fan_in + fan_out; bias stays zero.
template <typename Scalar>
void xavierInit(ConvParams<Scalar>& p, Rng& rng) {
  const double fan_in = static_cast<double>(p.cIn() * p.kh() * p.kw());
  const double fan_out = static_cast<double>(p.cOut() * p.kh() * p.kw());
  const double limit = std::sqrt(6.0 / (fan_in + fan_out));
  p.w.fillUniform(rng, static_cast<Scalar>(-limit), static_cast<Scalar>(limit));
  p.b.setZero();
}

// Output extent with floor division, the standard framework convention:
// trailing rows/cols that do not fit a full stride step are dropped. This is
// what lets a 1x1 stride-2 convolution halve an even-sized map, which the
// fusion path relies on. Rejects kernels larger than the padded input.
inline Index convOutDim(Index in, Index k, int stride, int padding) {
  MLKP_CHECK(stride >= 1, "stride must be >= 1, got " << stride);
  MLKP_CHECK(padding >= 0, "padding must be >= 0, got " << padding);
  MLKP_CHECK(in + 2 * padding >= k,
             "kernel " << k << " does not fit input extent " << in
                       << " with padding " << padding);
  return (in + 2 * padding - k) / stride + 1;
}

inline Index deconvOutDim(Index in, Index k, int stride, int padding) {
  MLKP_CHECK(stride >= 1, "stride must be >= 1, got " << stride);
  MLKP_CHECK(padding >= 0, "padding must be >= 0, got " << padding);
  const Index out = (in - 1) * stride + k - 2 * padding;
  MLKP_CHECK(out >= 1, "deconv output extent " << out << " is not positive");
  return out;
}

namespace detail {

// cols is (c_in*kh*kw, oh*ow); row index (c*kh + ki)*kw + kj matches the
// row-major weight layout so the forward pass is a single GEMM per item.
template <typename Scalar>
void im2col(const Scalar* img, Index c_in, Index h, Index w, Index kh,
            Index kw, int stride, int pad, Index oh, Index ow, Scalar* cols) {
  const Index plane = h * w;
  for (Index c = 0; c < c_in; ++c) {
    for (Index ki = 0; ki < kh; ++ki) {
      for (Index kj = 0; kj < kw; ++kj) {
        Scalar* dst = cols + ((c * kh + ki) * kw + kj) * oh * ow;
        for (Index oi = 0; oi < oh; ++oi) {
          const Index ii = oi * stride + ki - pad;
          if (ii < 0 || ii >= h) {
            std::fill(dst, dst + ow, Scalar(0));
            dst += ow;
            continue;
          }
          const Scalar* src = img + c * plane + ii * w;
          for (Index oj = 0; oj < ow; ++oj) {
            const Index jj = oj * stride + kj - pad;
            *dst++ = (jj >= 0 && jj < w) ? src[jj] : Scalar(0);
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatter-adds columns back into the image.
template <typename Scalar>
void col2im(const Scalar* cols, Index c_in, Index h, Index w, Index kh,
            Index kw, int stride, int pad, Index oh, Index ow, Scalar* img) {
  const Index plane = h * w;
  for (Index c = 0; c < c_in; ++c) {
    for (Index ki = 0; ki < kh; ++ki) {
      for (Index kj = 0; kj < kw; ++kj) {
        const Scalar* src = cols + ((c * kh + ki) * kw + kj) * oh * ow;
        for (Index oi = 0; oi < oh; ++oi, src += ow) {
          const Index ii = oi * stride + ki - pad;
          if (ii < 0 || ii >= h) continue;
          Scalar* dst = img + c * plane + ii * w;
          for (Index oj = 0; oj < ow; ++oj) {
            const Index jj = oj * stride + kj - pad;
            if (jj >= 0 && jj < w) dst[jj] += src[oj];
          }
        }
      }
    }
  }
}

// Weights (c_out, c_in, kh, kw) repacked as a (c_in, c_out*kh*kw) row-major
// matrix, the layout the transposed convolution GEMMs want.
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>
packWeightsByInput(const Tensor<Scalar>& w) {
  const Index co = w.n(), ci = w.c(), kh = w.h(), kw = w.w();
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> out(
      ci, co * kh * kw);
  for (Index o = 0; o < co; ++o)
    for (Index c = 0; c < ci; ++c)
      for (Index ki = 0; ki < kh; ++ki)
        for (Index kj = 0; kj < kw; ++kj)
          out(c, (o * kh + ki) * kw + kj) = w(o, c, ki, kj);
  return out;
}

}  // namespace detail

// Cross-correlation forward pass.
template <typename Scalar>
Tensor<Scalar> conv2d(const Tensor<Scalar>& input, const ConvParams<Scalar>& p) {
  MLKP_CHECK(p.cIn() == input.c(),
             "conv2d: weights expect " << p.cIn() << " input channels, input is "
                                       << input.shapeString());
  MLKP_CHECK(p.b.size() == p.cOut(),
             "conv2d: bias length " << p.b.size() << " != c_out " << p.cOut());
  const Index oh = convOutDim(input.h(), p.kh(), p.stride, p.padding);
  const Index ow = convOutDim(input.w(), p.kw(), p.stride, p.padding);
  Tensor<Scalar> out(input.n(), p.cOut(), oh, ow);

  ConstMatrixMap<Scalar> wmat(p.w.data(), p.cOut(), p.cIn() * p.kh() * p.kw());
  const bool unit = (p.kh() == 1 && p.kw() == 1 && p.stride == 1 && p.padding == 0);

  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> cols;
  if (!unit) cols.resize(p.cIn() * p.kh() * p.kw(), oh * ow);

  for (Index n = 0; n < input.n(); ++n) {
    auto dst = out.batchMatrix(n);
    if (unit) {
      dst.noalias() = wmat * input.batchMatrix(n);
    } else {
      detail::im2col(input.data() + n * input.c() * input.h() * input.w(),
                     input.c(), input.h(), input.w(), p.kh(), p.kw(), p.stride,
                     p.padding, oh, ow, cols.data());
      dst.noalias() = wmat * cols;
    }
    dst.colwise() += p.b.matrix();
  }
  return out;
}

template <typename Scalar>
struct ConvBackward {
  Tensor<Scalar> input;   // grad wrt input
  ConvGrads<Scalar> params;  // grads wrt weights and bias
};

// Exact adjoint of conv2d's linearization; `input` must be the tensor the
// forward pass saw.
template <typename Scalar>
ConvBackward<Scalar> conv2dBackward(const Tensor<Scalar>& input,
                                    const ConvParams<Scalar>& p,
                                    const Tensor<Scalar>& grad_out) {
  const Index oh = convOutDim(input.h(), p.kh(), p.stride, p.padding);
  const Index ow = convOutDim(input.w(), p.kw(), p.stride, p.padding);
  MLKP_CHECK(grad_out.n() == input.n() && grad_out.c() == p.cOut() &&
                 grad_out.h() == oh && grad_out.w() == ow,
             "conv2dBackward: grad shape " << grad_out.shapeString()
                                           << " does not match forward output ("
                                           << input.n() << ", " << p.cOut()
                                           << ", " << oh << ", " << ow << ")");

  ConvBackward<Scalar> result;
  result.input = Tensor<Scalar>::zeros(input.n(), input.c(), input.h(), input.w());
  result.params = ConvGrads<Scalar>::zerosLike(p);

  ConstMatrixMap<Scalar> wmat(p.w.data(), p.cOut(), p.cIn() * p.kh() * p.kw());
  MatrixMap<Scalar> dwmat(result.params.w.data(), p.cOut(),
                          p.cIn() * p.kh() * p.kw());
  const bool unit = (p.kh() == 1 && p.kw() == 1 && p.stride == 1 && p.padding == 0);

  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> cols,
      dcols;
  if (!unit) {
    cols.resize(p.cIn() * p.kh() * p.kw(), oh * ow);
    dcols.resize(p.cIn() * p.kh() * p.kw(), oh * ow);
  }

  for (Index n = 0; n < input.n(); ++n) {
    auto g = grad_out.batchMatrix(n);
    result.params.b.matrix() += g.rowwise().sum();
    if (unit) {
      dwmat.noalias() += g * input.batchMatrix(n).transpose();
      result.input.batchMatrix(n).noalias() += wmat.transpose() * g;
    } else {
      detail::im2col(input.data() + n * input.c() * input.h() * input.w(),
                     input.c(), input.h(), input.w(), p.kh(), p.kw(), p.stride,
                     p.padding, oh, ow, cols.data());
      dwmat.noalias() += g * cols.transpose();
      dcols.noalias() = wmat.transpose() * g;
      detail::col2im(dcols.data(), input.c(), input.h(), input.w(), p.kh(),
                     p.kw(), p.stride, p.padding, oh, ow,
                     result.input.data() +
                         n * input.c() * input.h() * input.w());
    }
  }
  return result;
}

// Transposed convolution: every input pixel scatters through the kernel,
// out[n, o, i*s + ki - pad, j*s + kj - pad] += in[n, c, i, j] * w[o, c, ki, kj].
// With k=2, stride=2, pad=0 this is an exact 2x upsampler.
template <typename Scalar>
Tensor<Scalar> deconv2d(const Tensor<Scalar>& input, const ConvParams<Scalar>& p) {
  MLKP_CHECK(p.cIn() == input.c(),
             "deconv2d: weights expect " << p.cIn()
                                         << " input channels, input is "
                                         << input.shapeString());
  MLKP_CHECK(p.b.size() == p.cOut(),
             "deconv2d: bias length " << p.b.size() << " != c_out " << p.cOut());
  const Index oh = deconvOutDim(input.h(), p.kh(), p.stride, p.padding);
  const Index ow = deconvOutDim(input.w(), p.kw(), p.stride, p.padding);
  Tensor<Scalar> out(input.n(), p.cOut(), oh, ow);

  const auto wpack = detail::packWeightsByInput(p.w);  // (c_in, c_out*kh*kw)
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> cols(
      p.cOut() * p.kh() * p.kw(), input.h() * input.w());

  for (Index n = 0; n < input.n(); ++n) {
    cols.noalias() = wpack.transpose() * input.batchMatrix(n);
    detail::col2im(cols.data(), p.cOut(), oh, ow, p.kh(), p.kw(), p.stride,
                   p.padding, input.h(), input.w(),
                   out.data() + n * p.cOut() * oh * ow);
    out.batchMatrix(n).colwise() += p.b.matrix();
  }
  return out;
}

template <typename Scalar>
ConvBackward<Scalar> deconv2dBackward(const Tensor<Scalar>& input,
                                      const ConvParams<Scalar>& p,
                                      const Tensor<Scalar>& grad_out) {
  const Index oh = deconvOutDim(input.h(), p.kh(), p.stride, p.padding);
  const Index ow = deconvOutDim(input.w(), p.kw(), p.stride, p.padding);
  MLKP_CHECK(grad_out.n() == input.n() && grad_out.c() == p.cOut() &&
                 grad_out.h() == oh && grad_out.w() == ow,
             "deconv2dBackward: grad shape "
                 << grad_out.shapeString() << " does not match forward output ("
                 << input.n() << ", " << p.cOut() << ", " << oh << ", " << ow
                 << ")");

  ConvBackward<Scalar> result;
  result.input = Tensor<Scalar>::zeros(input.n(), input.c(), input.h(), input.w());
  result.params = ConvGrads<Scalar>::zerosLike(p);

  const auto wpack = detail::packWeightsByInput(p.w);
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> cols(
      p.cOut() * p.kh() * p.kw(), input.h() * input.w());
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> dwpack =
      Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic,
                    Eigen::RowMajor>::Zero(input.c(),
                                           p.cOut() * p.kh() * p.kw());

  for (Index n = 0; n < input.n(); ++n) {
    auto g = grad_out.batchMatrix(n);
    result.params.b.matrix() += g.rowwise().sum();
    // Gathering grad_out through the kernel is a plain im2col on grad_out.
    detail::im2col(grad_out.data() + n * p.cOut() * oh * ow, p.cOut(), oh, ow,
                   p.kh(), p.kw(), p.stride, p.padding, input.h(), input.w(),
                   cols.data());
    result.input.batchMatrix(n).noalias() = wpack * cols;
    dwpack.noalias() += input.batchMatrix(n) * cols.transpose();
  }

  for (Index o = 0; o < p.cOut(); ++o)
    for (Index c = 0; c < input.c(); ++c)
      for (Index ki = 0; ki < p.kh(); ++ki)
        for (Index kj = 0; kj < p.kw(); ++kj)
          result.params.w(o, c, ki, kj) =
              dwpack(c, (o * p.kh() + ki) * p.kw() + kj);
  return result;
}

}  // namespace mlkp

#endif  // MLKP_CONV_HPP
