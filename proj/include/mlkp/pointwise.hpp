#ifndef MLKP_POINTWISE_HPP
#define MLKP_POINTWISE_HPP

#include <vector>

#include "mlkp/tensor.hpp"

namespace mlkp {

enum class PointwiseOp { product, sum, relu };

namespace detail {

// b may either match a's shape or be a single-channel (n, 1, h, w) map that
// broadcasts across a's channels.
template <typename Scalar>
bool broadcastCompatible(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  return b.c() == 1 && a.n() == b.n() && a.h() == b.h() && a.w() == b.w();
}

template <typename Scalar>
void checkBinaryShapes(const char* op, const Tensor<Scalar>& a,
                       const Tensor<Scalar>& b) {
  MLKP_CHECK(a.sameShape(b) || broadcastCompatible(a, b),
             op << ": incompatible shapes " << a.shapeString() << " and "
                << b.shapeString());
}

}  // namespace detail

template <typename Scalar>
Tensor<Scalar> product(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  detail::checkBinaryShapes("product", a, b);
  Tensor<Scalar> out(a.n(), a.c(), a.h(), a.w());
  if (a.sameShape(b)) {
    out.array() = a.array() * b.array();
  } else {
    for (Index n = 0; n < a.n(); ++n)
      for (Index c = 0; c < a.c(); ++c)
        out.channel(n, c) = a.channel(n, c) * b.channel(n, 0);
  }
  return out;
}

template <typename Scalar>
Tensor<Scalar> add(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  detail::checkBinaryShapes("sum", a, b);
  Tensor<Scalar> out(a.n(), a.c(), a.h(), a.w());
  if (a.sameShape(b)) {
    out.array() = a.array() + b.array();
  } else {
    for (Index n = 0; n < a.n(); ++n)
      for (Index c = 0; c < a.c(); ++c)
        out.channel(n, c) = a.channel(n, c) + b.channel(n, 0);
  }
  return out;
}

template <typename Scalar>
Tensor<Scalar> relu(const Tensor<Scalar>& a) {
  Tensor<Scalar> out(a.n(), a.c(), a.h(), a.w());
  out.array() = a.array().max(Scalar(0));
  return out;
}

template <typename Scalar>
Tensor<Scalar> sigmoid(const Tensor<Scalar>& a) {
  Tensor<Scalar> out(a.n(), a.c(), a.h(), a.w());
  out.array() = Scalar(1) / (Scalar(1) + (-a.array()).exp());
  return out;
}

// The spec-level dispatch surface; b is ignored for relu.
template <typename Scalar>
Tensor<Scalar> pointwise(PointwiseOp op, const Tensor<Scalar>& a,
                         const Tensor<Scalar>* b = nullptr) {
  switch (op) {
    case PointwiseOp::relu:
      return relu(a);
    case PointwiseOp::product:
      MLKP_CHECK(b != nullptr, "product requires a second operand");
      return product(a, *b);
    case PointwiseOp::sum:
      MLKP_CHECK(b != nullptr, "sum requires a second operand");
      return add(a, *b);
  }
  MLKP_CHECK(false, "unknown pointwise op");
  return a;
}

template <typename Scalar>
struct BinaryBackward {
  Tensor<Scalar> a;
  Tensor<Scalar> b;
};

// Product rule; when b was broadcast, its gradient reduces over channels.
template <typename Scalar>
BinaryBackward<Scalar> productBackward(const Tensor<Scalar>& grad_out,
                                       const Tensor<Scalar>& a,
                                       const Tensor<Scalar>& b) {
  detail::checkBinaryShapes("productBackward", a, b);
  MLKP_CHECK(grad_out.sameShape(a), "productBackward: grad shape "
                                        << grad_out.shapeString()
                                        << " != output shape "
                                        << a.shapeString());
  BinaryBackward<Scalar> g;
  g.a = product(grad_out, b);
  if (a.sameShape(b)) {
    g.b = product(grad_out, a);
  } else {
    g.b = Tensor<Scalar>::zeros(b.n(), 1, b.h(), b.w());
    for (Index n = 0; n < a.n(); ++n)
      for (Index c = 0; c < a.c(); ++c)
        g.b.channel(n, 0) += grad_out.channel(n, c) * a.channel(n, c);
  }
  return g;
}

template <typename Scalar>
BinaryBackward<Scalar> addBackward(const Tensor<Scalar>& grad_out,
                                   const Tensor<Scalar>& a,
                                   const Tensor<Scalar>& b) {
  detail::checkBinaryShapes("addBackward", a, b);
  BinaryBackward<Scalar> g;
  g.a = grad_out;
  if (a.sameShape(b)) {
    g.b = grad_out;
  } else {
    g.b = Tensor<Scalar>::zeros(b.n(), 1, b.h(), b.w());
    for (Index n = 0; n < a.n(); ++n)
      for (Index c = 0; c < a.c(); ++c) g.b.channel(n, 0) += grad_out.channel(n, c);
  }
  return g;
}

template <typename Scalar>
Tensor<Scalar> reluBackward(const Tensor<Scalar>& grad_out,
                            const Tensor<Scalar>& input) {
  MLKP_CHECK(grad_out.sameShape(input), "reluBackward: shape mismatch "
                                            << grad_out.shapeString() << " vs "
                                            << input.shapeString());
  Tensor<Scalar> g(input.n(), input.c(), input.h(), input.w());
  g.array() =
      grad_out.array() * (input.array() > Scalar(0)).template cast<Scalar>();
  return g;
}

// dL/dx = g * y * (1 - y), taking the forward output y.
template <typename Scalar>
Tensor<Scalar> sigmoidBackward(const Tensor<Scalar>& grad_out,
                               const Tensor<Scalar>& output) {
  MLKP_CHECK(grad_out.sameShape(output), "sigmoidBackward: shape mismatch "
                                             << grad_out.shapeString() << " vs "
                                             << output.shapeString());
  Tensor<Scalar> g(output.n(), output.c(), output.h(), output.w());
  g.array() =
      grad_out.array() * output.array() * (Scalar(1) - output.array());
  return g;
}

// Materialized form of the 1-to-many channel remap. The broadcast paths above
// are the production route; this exists so tests can compare against an
// explicit duplicated tensor.
template <typename Scalar>
Tensor<Scalar> broadcastChannels(const Tensor<Scalar>& m, Index channels) {
  MLKP_CHECK(m.c() == 1, "broadcastChannels expects a single-channel map, got "
                             << m.shapeString());
  Tensor<Scalar> out(m.n(), channels, m.h(), m.w());
  for (Index n = 0; n < m.n(); ++n)
    for (Index c = 0; c < channels; ++c) out.channel(n, c) = m.channel(n, 0);
  return out;
}

template <typename Scalar>
Tensor<Scalar> concatChannels(const std::vector<Tensor<Scalar>>& parts) {
  MLKP_CHECK(!parts.empty(), "concatChannels: empty part list");
  const Tensor<Scalar>& first = parts.front();
  Index channels = 0;
  for (const auto& p : parts) {
    MLKP_CHECK(p.n() == first.n() && p.h() == first.h() && p.w() == first.w(),
               "concatChannels: part shape " << p.shapeString()
                                             << " does not align with "
                                             << first.shapeString());
    channels += p.c();
  }
  Tensor<Scalar> out(first.n(), channels, first.h(), first.w());
  for (Index n = 0; n < first.n(); ++n) {
    Index at = 0;
    for (const auto& p : parts) {
      for (Index c = 0; c < p.c(); ++c) out.channel(n, at++) = p.channel(n, c);
    }
  }
  return out;
}

// Inverse of concatChannels for one part: channels [from, from + count).
template <typename Scalar>
Tensor<Scalar> sliceChannels(const Tensor<Scalar>& t, Index from, Index count) {
  MLKP_CHECK(from >= 0 && count >= 1 && from + count <= t.c(),
             "sliceChannels: range [" << from << ", " << from + count
                                      << ") out of " << t.c() << " channels");
  Tensor<Scalar> out(t.n(), count, t.h(), t.w());
  for (Index n = 0; n < t.n(); ++n)
    for (Index c = 0; c < count; ++c) out.channel(n, c) = t.channel(n, from + c);
  return out;
}

}  // namespace mlkp

#endif  // MLKP_POINTWISE_HPP
