#ifndef MLKP_HEAD_HPP
#define MLKP_HEAD_HPP

#include <array>
#include <vector>

#include "mlkp/conv.hpp"

namespace mlkp {

// (n, c, h, w) -> (n, c*h*w, 1, 1). A relabeling of the same row-major
// buffer, so it costs one copy and its adjoint is the inverse relabeling.
template <typename Scalar>
Tensor<Scalar> flattenChannels(const Tensor<Scalar>& t) {
  Tensor<Scalar> out(t.n(), t.c() * t.h() * t.w(), 1, 1);
  out.array() = t.array();
  return out;
}

template <typename Scalar>
Tensor<Scalar> unflattenChannels(const Tensor<Scalar>& flat, Index c, Index h,
                                 Index w) {
  MLKP_CHECK(flat.c() == c * h * w && flat.h() == 1 && flat.w() == 1,
             "unflattenChannels: " << flat.shapeString() << " cannot become ("
                                   << flat.n() << ", " << c << ", " << h << ", "
                                   << w << ")");
  Tensor<Scalar> out(flat.n(), c, h, w);
  out.array() = flat.array();
  return out;
}

// Classification + box-regression head over flattened pooled features.
// Both maps are 1x1 convolutions on (|rois|, feature_dim, 1, 1), i.e. plain
// linear layers; their weight rows absorb the linear predictor.
template <typename Scalar>
struct HeadParams {
  ConvParams<Scalar> cls;  // feature_dim -> n_classes + 1 (incl. background)
  ConvParams<Scalar> box;  // feature_dim -> 4 * n_classes

  static HeadParams init(Index feature_dim, Index n_classes, Rng& rng) {
    MLKP_CHECK(n_classes >= 1, "need at least one foreground class");
    HeadParams p;
    p.cls = makeConv<Scalar>(n_classes + 1, feature_dim, 1);
    p.box = makeConv<Scalar>(4 * n_classes, feature_dim, 1);
    xavierInit(p.cls, rng);
    xavierInit(p.box, rng);
    return p;
  }

  Index featureDim() const { return cls.cIn(); }
  Index numClasses() const { return cls.cOut() - 1; }
};

template <typename Scalar>
struct HeadGrads {
  ConvGrads<Scalar> cls, box;

  static HeadGrads zerosLike(const HeadParams<Scalar>& p) {
    HeadGrads g;
    g.cls = ConvGrads<Scalar>::zerosLike(p.cls);
    g.box = ConvGrads<Scalar>::zerosLike(p.box);
    return g;
  }

  void setZero() {
    cls.setZero();
    box.setZero();
  }
};

template <typename Scalar>
struct HeadOutput {
  Tensor<Scalar> logits;  // (|rois|, n_classes + 1, 1, 1)
  Tensor<Scalar> deltas;  // (|rois|, 4 * n_classes, 1, 1)
};

template <typename Scalar>
HeadOutput<Scalar> headForward(const Tensor<Scalar>& pooled_flat,
                               const HeadParams<Scalar>& p) {
  MLKP_CHECK(pooled_flat.c() == p.featureDim() && pooled_flat.h() == 1 &&
                 pooled_flat.w() == 1,
             "headForward: features " << pooled_flat.shapeString()
                                      << " do not match head input dim "
                                      << p.featureDim());
  return HeadOutput<Scalar>{conv2d(pooled_flat, p.cls),
                            conv2d(pooled_flat, p.box)};
}

template <typename Scalar>
struct HeadBackward {
  Tensor<Scalar> features;  // grad wrt pooled_flat
  HeadGrads<Scalar> grads;
};

template <typename Scalar>
HeadBackward<Scalar> headBackward(const Tensor<Scalar>& pooled_flat,
                                  const HeadParams<Scalar>& p,
                                  const Tensor<Scalar>& grad_logits,
                                  const Tensor<Scalar>& grad_deltas) {
  HeadBackward<Scalar> result;
  auto back_cls = conv2dBackward(pooled_flat, p.cls, grad_logits);
  auto back_box = conv2dBackward(pooled_flat, p.box, grad_deltas);
  result.grads.cls = std::move(back_cls.params);
  result.grads.box = std::move(back_box.params);
  result.features = std::move(back_cls.input);
  result.features.array() += back_box.input.array();
  return result;
}

// Per-RoI training target: label 0 is background; positives carry box
// regression targets in the parameterized-delta space.
struct RoiTarget {
  int label = 0;
  std::array<double, 4> deltas{0, 0, 0, 0};
};

template <typename Scalar>
struct LossResult {
  Scalar loss = 0;
  Scalar cls_loss = 0;
  Scalar box_loss = 0;
  Tensor<Scalar> grad_logits;
  Tensor<Scalar> grad_deltas;
};

// Fast R-CNN multi-task loss: mean softmax cross-entropy over all RoIs plus
// lambda * smooth-L1 over the positives' own-class deltas, normalized by the
// RoI count. Background RoIs contribute no regression term.
template <typename Scalar>
LossResult<Scalar> detectionLoss(const Tensor<Scalar>& logits,
                                 const Tensor<Scalar>& deltas,
                                 const std::vector<RoiTarget>& targets,
                                 Scalar lambda = 1) {
  const Index R = logits.n();
  const Index K1 = logits.c();
  MLKP_CHECK(R >= 1, "detectionLoss: no RoIs");
  MLKP_CHECK(static_cast<Index>(targets.size()) == R,
             "detectionLoss: " << targets.size() << " targets for " << R
                               << " RoIs");
  MLKP_CHECK(deltas.n() == R && deltas.c() == 4 * (K1 - 1),
             "detectionLoss: deltas " << deltas.shapeString()
                                      << " inconsistent with logits "
                                      << logits.shapeString());

  LossResult<Scalar> result;
  result.grad_logits = Tensor<Scalar>::zeros(R, K1, 1, 1);
  result.grad_deltas = Tensor<Scalar>::zeros(R, deltas.c(), 1, 1);
  const Scalar inv_n = Scalar(1) / static_cast<Scalar>(R);

  for (Index i = 0; i < R; ++i) {
    const int label = targets[i].label;
    MLKP_CHECK(label >= 0 && label < K1,
               "target label " << label << " outside [0, " << K1 - 1 << "]");

    // softmax cross-entropy with max subtraction
    Scalar max_logit = logits(i, 0, 0, 0);
    for (Index k = 1; k < K1; ++k)
      max_logit = std::max(max_logit, logits(i, k, 0, 0));
    Scalar z = 0;
    for (Index k = 0; k < K1; ++k)
      z += std::exp(logits(i, k, 0, 0) - max_logit);
    const Scalar log_z = std::log(z) + max_logit;
    result.cls_loss += inv_n * (log_z - logits(i, label, 0, 0));
    for (Index k = 0; k < K1; ++k) {
      const Scalar p = std::exp(logits(i, k, 0, 0) - log_z);
      result.grad_logits(i, k, 0, 0) =
          inv_n * (p - (k == label ? Scalar(1) : Scalar(0)));
    }

    if (label > 0) {
      const Index base = 4 * (label - 1);
      for (Index d = 0; d < 4; ++d) {
        const Scalar diff = deltas(i, base + d, 0, 0) -
                            static_cast<Scalar>(targets[i].deltas[d]);
        const Scalar a = std::abs(diff);
        result.box_loss +=
            inv_n * lambda * (a < 1 ? Scalar(0.5) * diff * diff : a - Scalar(0.5));
        result.grad_deltas(i, base + d, 0, 0) =
            inv_n * lambda * std::clamp(diff, Scalar(-1), Scalar(1));
      }
    }
  }
  result.loss = result.cls_loss + result.box_loss;
  return result;
}

}  // namespace mlkp

#endif  // MLKP_HEAD_HPP
