#ifndef MLKP_FUSION_HPP
#define MLKP_FUSION_HPP

#include <vector>

#include "mlkp/conv.hpp"
#include "mlkp/pointwise.hpp"

namespace mlkp {

// Multi-scale fusion of two backbone blocks: concatenate the chosen layers
// inside each block, adapt both to a common width with 1x1 convolutions,
// upsample the coarser block 2x by transposed convolution, sum elementwise,
// and recover the coarse resolution with a 1x1 stride-2 convolution.
template <typename Scalar>
struct FusionParams {
  ConvParams<Scalar> earlier_adapter;  // 1x1: concat(earlier layers) -> F
  ConvParams<Scalar> later_adapter;    // 1x1: concat(later layers) -> F
  ConvParams<Scalar> upsample;         // deconv k=2 s=2: F -> F
  ConvParams<Scalar> recover;          // 1x1 stride 2: F -> F

  static FusionParams init(Index earlier_channels, Index later_channels,
                           Index width, Rng& rng) {
    MLKP_CHECK(width >= 1, "fusion width must be >= 1, got " << width);
    FusionParams p;
    p.earlier_adapter = makeConv<Scalar>(width, earlier_channels, 1);
    p.later_adapter = makeConv<Scalar>(width, later_channels, 1);
    p.upsample = makeConv<Scalar>(width, width, 2, 2, 0);
    p.recover = makeConv<Scalar>(width, width, 1, 2, 0);
    xavierInit(p.earlier_adapter, rng);
    xavierInit(p.later_adapter, rng);
    xavierInit(p.upsample, rng);
    xavierInit(p.recover, rng);
    return p;
  }

  Index width() const { return recover.cOut(); }
};

template <typename Scalar>
struct FusionGrads {
  ConvGrads<Scalar> earlier_adapter, later_adapter, upsample, recover;

  static FusionGrads zerosLike(const FusionParams<Scalar>& p) {
    FusionGrads g;
    g.earlier_adapter = ConvGrads<Scalar>::zerosLike(p.earlier_adapter);
    g.later_adapter = ConvGrads<Scalar>::zerosLike(p.later_adapter);
    g.upsample = ConvGrads<Scalar>::zerosLike(p.upsample);
    g.recover = ConvGrads<Scalar>::zerosLike(p.recover);
    return g;
  }

  void setZero() {
    earlier_adapter.setZero();
    later_adapter.setZero();
    upsample.setZero();
    recover.setZero();
  }
};

template <typename Scalar>
struct FusionCache {
  bool valid = false;
  std::vector<std::array<Index, 4>> earlier_shapes, later_shapes;
  Tensor<Scalar> earlier_concat, later_concat;
  Tensor<Scalar> earlier_adapted, later_adapted;
  Tensor<Scalar> summed;
};

// Channel concatenation of same-block layers followed by the 1x1 adapter.
template <typename Scalar>
Tensor<Scalar> intraBlockConcat(const std::vector<Tensor<Scalar>>& layers,
                                const ConvParams<Scalar>& adapter,
                                Tensor<Scalar>* concat_out = nullptr) {
  Tensor<Scalar> cat = concatChannels(layers);
  MLKP_CHECK(adapter.kh() == 1 && adapter.kw() == 1 && adapter.stride == 1 &&
                 adapter.padding == 0,
             "intra-block adapter must be a 1x1, stride-1 convolution");
  Tensor<Scalar> out = conv2d(cat, adapter);
  if (concat_out) *concat_out = std::move(cat);
  return out;
}

// deconv(later) + earlier, then the stride-2 1x1 recovery convolution.
// Output spatial dims equal the later (coarser) block's.
template <typename Scalar>
Tensor<Scalar> crossBlockFuse(const Tensor<Scalar>& earlier,
                              const Tensor<Scalar>& later,
                              const FusionParams<Scalar>& params,
                              FusionCache<Scalar>* cache = nullptr) {
  MLKP_CHECK(earlier.c() == later.c(),
             "cross-block fuse expects both inputs adapted to one width, got "
                 << earlier.shapeString() << " and " << later.shapeString());
  MLKP_CHECK(earlier.h() == 2 * later.h() && earlier.w() == 2 * later.w(),
             "later block must be exactly half the earlier block's size, got "
                 << earlier.shapeString() << " and " << later.shapeString());
  Tensor<Scalar> up = deconv2d(later, params.upsample);
  Tensor<Scalar> summed = add(earlier, up);
  Tensor<Scalar> out = conv2d(summed, params.recover);
  if (cache) {
    cache->earlier_adapted = earlier;
    cache->later_adapted = later;
    cache->summed = std::move(summed);
  }
  return out;
}

template <typename Scalar>
Tensor<Scalar> fusionForward(const std::vector<Tensor<Scalar>>& earlier_layers,
                             const std::vector<Tensor<Scalar>>& later_layers,
                             const FusionParams<Scalar>& params,
                             FusionCache<Scalar>* cache = nullptr) {
  if (cache) {
    *cache = FusionCache<Scalar>{};
    for (const auto& t : earlier_layers) cache->earlier_shapes.push_back(t.shape());
    for (const auto& t : later_layers) cache->later_shapes.push_back(t.shape());
  }
  Tensor<Scalar> earlier = intraBlockConcat(
      earlier_layers, params.earlier_adapter, cache ? &cache->earlier_concat : nullptr);
  Tensor<Scalar> later = intraBlockConcat(
      later_layers, params.later_adapter, cache ? &cache->later_concat : nullptr);
  Tensor<Scalar> out = crossBlockFuse(earlier, later, params, cache);
  if (cache) cache->valid = true;
  return out;
}

template <typename Scalar>
struct FusionBackward {
  std::vector<Tensor<Scalar>> earlier_layers;
  std::vector<Tensor<Scalar>> later_layers;
  FusionGrads<Scalar> grads;
};

namespace detail {

template <typename Scalar>
std::vector<Tensor<Scalar>> splitConcatGrad(
    const Tensor<Scalar>& grad_concat,
    const std::vector<std::array<Index, 4>>& shapes) {
  std::vector<Tensor<Scalar>> out;
  Index at = 0;
  for (const auto& s : shapes) {
    out.push_back(sliceChannels(grad_concat, at, s[1]));
    at += s[1];
  }
  return out;
}

}  // namespace detail

template <typename Scalar>
FusionBackward<Scalar> fusionBackward(const Tensor<Scalar>& grad_out,
                                      const FusionParams<Scalar>& params,
                                      const FusionCache<Scalar>& cache) {
  MLKP_CHECK(cache.valid, "fusionBackward called without a cached forward pass");
  FusionBackward<Scalar> result;
  result.grads = FusionGrads<Scalar>::zerosLike(params);

  auto back_recover = conv2dBackward(cache.summed, params.recover, grad_out);
  result.grads.recover = std::move(back_recover.params);

  // The sum fans the gradient out to both branches unchanged.
  const Tensor<Scalar>& grad_summed = back_recover.input;
  auto back_up = deconv2dBackward(cache.later_adapted, params.upsample, grad_summed);
  result.grads.upsample = std::move(back_up.params);

  auto back_earlier =
      conv2dBackward(cache.earlier_concat, params.earlier_adapter, grad_summed);
  result.grads.earlier_adapter = std::move(back_earlier.params);
  result.earlier_layers =
      detail::splitConcatGrad(back_earlier.input, cache.earlier_shapes);

  auto back_later =
      conv2dBackward(cache.later_concat, params.later_adapter, back_up.input);
  result.grads.later_adapter = std::move(back_later.params);
  result.later_layers =
      detail::splitConcatGrad(back_later.input, cache.later_shapes);

  return result;
}

}  // namespace mlkp

#endif  // MLKP_FUSION_HPP
