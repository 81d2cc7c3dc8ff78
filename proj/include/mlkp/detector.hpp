#ifndef MLKP_DETECTOR_HPP
#define MLKP_DETECTOR_HPP

#include "mlkp/config.hpp"
#include "mlkp/detection.hpp"
#include "mlkp/fusion.hpp"
#include "mlkp/head.hpp"
#include "mlkp/mlkp_block.hpp"
#include "mlkp/params.hpp"
#include "mlkp/roi.hpp"
#include "mlkp/synth.hpp"

namespace mlkp {

// Center-and-scale normalization applied to [0, 1] scene images before the
// backbone.
template <typename Scalar>
Tensor<Scalar> normalizeImage(const Tensor<Scalar>& image) {
  Tensor<Scalar> out(image.n(), image.c(), image.h(), image.w());
  out.array() = (image.array() - Scalar(0.4)) * Scalar(3);
  return out;
}

// The toy detector: a six-convolution backbone in three stride-2 blocks,
// two-layer-per-block multi-scale fusion, the kernel representation block,
// max RoI pooling and the linear head. Total feature stride is 8.
template <typename Scalar>
class Detector {
 public:
  struct Config {
    std::array<Index, 3> channels{8, 16, 32};
    Index fusion_width = 64;
    MLKPConfig mlkp;
    Index pool_size = 7;
    int classes = 3;

    static Config fromRun(const RunConfig& run) {
      run.validate();
      Config c;
      c.channels = {run.backbone_channels[0], run.backbone_channels[1],
                    run.backbone_channels[2]};
      c.fusion_width = run.fusion_width;
      c.mlkp = run.mlkpConfig();
      c.pool_size = run.pool_size;
      c.classes = run.classes;
      return c;
    }
  };

  Detector(const Config& cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.mlkp.validate();
    Rng rng(seed);
    const auto [c0, c1, c2] = cfg_.channels;

    stem1_ = makeConv<Scalar>(c0, 3, 3, 2, 1);
    stem2_ = makeConv<Scalar>(c0, c0, 3, 1, 1);
    b1a_ = makeConv<Scalar>(c1, c0, 3, 2, 1);
    b1b_ = makeConv<Scalar>(c1, c1, 3, 1, 1);
    b2a_ = makeConv<Scalar>(c2, c1, 3, 2, 1);
    b2b_ = makeConv<Scalar>(c2, c2, 3, 1, 1);
    for (auto* p : {&stem1_, &stem2_, &b1a_, &b1b_, &b2a_, &b2b_})
      xavierInit(*p, rng);

    fusion_ = FusionParams<Scalar>::init(2 * c1, 2 * c2, cfg_.fusion_width, rng);
    mlkp_ = MLKPParams<Scalar>::init(cfg_.mlkp, cfg_.fusion_width, rng);
    head_ = HeadParams<Scalar>::init(
        gChannels() * cfg_.pool_size * cfg_.pool_size, cfg_.classes, rng);

    g_stem1_ = ConvGrads<Scalar>::zerosLike(stem1_);
    g_stem2_ = ConvGrads<Scalar>::zerosLike(stem2_);
    g_b1a_ = ConvGrads<Scalar>::zerosLike(b1a_);
    g_b1b_ = ConvGrads<Scalar>::zerosLike(b1b_);
    g_b2a_ = ConvGrads<Scalar>::zerosLike(b2a_);
    g_b2b_ = ConvGrads<Scalar>::zerosLike(b2b_);
    g_fusion_ = FusionGrads<Scalar>::zerosLike(fusion_);
    g_mlkp_ = MLKPGrads<Scalar>::zerosLike(mlkp_);
    g_head_ = HeadGrads<Scalar>::zerosLike(head_);

    store_.addConv("backbone.stem1", stem1_, g_stem1_);
    store_.addConv("backbone.stem2", stem2_, g_stem2_);
    store_.addConv("backbone.b1a", b1a_, g_b1a_);
    store_.addConv("backbone.b1b", b1b_, g_b1b_);
    store_.addConv("backbone.b2a", b2a_, g_b2a_);
    store_.addConv("backbone.b2b", b2b_, g_b2b_);
    store_.addConv("fusion.earlier_adapter", fusion_.earlier_adapter,
                   g_fusion_.earlier_adapter);
    store_.addConv("fusion.later_adapter", fusion_.later_adapter,
                   g_fusion_.later_adapter);
    store_.addConv("fusion.upsample", fusion_.upsample, g_fusion_.upsample);
    store_.addConv("fusion.recover", fusion_.recover, g_fusion_.recover);
    for (int r = 2; r <= cfg_.mlkp.max_order; ++r)
      for (int s = 0; s < r; ++s)
        store_.addConv(
            "mlkp.order" + std::to_string(r) + ".slot" + std::to_string(s + 1),
            mlkp_.factor_convs[r - 2][s], g_mlkp_.factor_convs[r - 2][s]);
    if (cfg_.mlkp.max_order >= 2 && cfg_.mlkp.location_weight_enabled) {
      store_.addConv("mlkp.loc.reduce", mlkp_.loc_reduce, g_mlkp_.loc_reduce);
      store_.addConv("mlkp.loc.hidden", mlkp_.loc_hidden, g_mlkp_.loc_hidden);
      store_.addConv("mlkp.loc.project", mlkp_.loc_project, g_mlkp_.loc_project);
    }
    store_.addConv("head.cls", head_.cls, g_head_.cls);
    store_.addConv("head.box", head_.box, g_head_.box);
  }

  static constexpr int featureStride() { return 8; }

  Index gChannels() const { return cfg_.mlkp.outputChannels(cfg_.fusion_width); }
  const Config& config() const { return cfg_; }
  ParamStore<Scalar>& params() { return store_; }
  const ParamStore<Scalar>& params() const { return store_; }

  void zeroGrads() { store_.zeroGrads(); }

  // Backbone + fusion + kernel block; caches everything for backward.
  Tensor<Scalar> featureMap(const Tensor<Scalar>& image) {
    MLKP_CHECK(image.c() == 3, "detector expects 3-channel images, got "
                                   << image.shapeString());
    image_ = image;
    stem1_pre_ = conv2d(image, stem1_);
    stem1_act_ = relu(stem1_pre_);
    stem2_pre_ = conv2d(stem1_act_, stem2_);
    stem2_act_ = relu(stem2_pre_);
    b1a_pre_ = conv2d(stem2_act_, b1a_);
    b1a_act_ = relu(b1a_pre_);
    b1b_pre_ = conv2d(b1a_act_, b1b_);
    b1b_act_ = relu(b1b_pre_);
    b2a_pre_ = conv2d(b1b_act_, b2a_);
    b2a_act_ = relu(b2a_pre_);
    b2b_pre_ = conv2d(b2a_act_, b2b_);
    b2b_act_ = relu(b2b_pre_);

    fused_ = fusionForward<Scalar>({b1a_act_, b1b_act_}, {b2a_act_, b2b_act_},
                                   fusion_, &fusion_cache_);
    G_ = mlkpForward(fused_, cfg_.mlkp, mlkp_, &mlkp_cache_);
    return G_;
  }

  HeadOutput<Scalar> forward(const Tensor<Scalar>& image,
                             const std::vector<RoI>& rois) {
    featureMap(image);
    rois_ = rois;
    pooled_ = maxRoiPool(G_, rois, cfg_.pool_size, cfg_.pool_size, &argmax_);
    pooled_flat_ = flattenChannels(pooled_);
    forward_done_ = true;
    return headForward(pooled_flat_, head_);
  }

  // Accumulates into the registered gradient buffers.
  void backward(const Tensor<Scalar>& grad_logits,
                const Tensor<Scalar>& grad_deltas) {
    MLKP_CHECK(forward_done_, "backward called before forward");

    auto head_back = headBackward(pooled_flat_, head_, grad_logits, grad_deltas);
    accumulate(head_back.grads.cls, g_head_.cls);
    accumulate(head_back.grads.box, g_head_.box);

    Tensor<Scalar> grad_pooled = unflattenChannels(
        head_back.features, gChannels(), cfg_.pool_size, cfg_.pool_size);
    Tensor<Scalar> grad_G = maxRoiPoolBackward(grad_pooled, argmax_, G_.n(),
                                               G_.c(), G_.h(), G_.w());

    auto mlkp_back = mlkpBackward(grad_G, cfg_.mlkp, mlkp_, mlkp_cache_);
    accumulate(mlkp_back.grads, g_mlkp_);

    auto fusion_back = fusionBackward(mlkp_back.input, fusion_, fusion_cache_);
    accumulate(fusion_back.grads.earlier_adapter, g_fusion_.earlier_adapter);
    accumulate(fusion_back.grads.later_adapter, g_fusion_.later_adapter);
    accumulate(fusion_back.grads.upsample, g_fusion_.upsample);
    accumulate(fusion_back.grads.recover, g_fusion_.recover);

    // backbone chain, later block first
    Tensor<Scalar> g = reluBackward(fusion_back.later_layers[1], b2b_pre_);
    auto back_b2b = conv2dBackward(b2a_act_, b2b_, g);
    accumulate(back_b2b.params, g_b2b_);
    Tensor<Scalar> g_b2a_act = std::move(back_b2b.input);
    g_b2a_act.array() += fusion_back.later_layers[0].array();

    g = reluBackward(g_b2a_act, b2a_pre_);
    auto back_b2a = conv2dBackward(b1b_act_, b2a_, g);
    accumulate(back_b2a.params, g_b2a_);
    Tensor<Scalar> g_b1b_act = std::move(back_b2a.input);
    g_b1b_act.array() += fusion_back.earlier_layers[1].array();

    g = reluBackward(g_b1b_act, b1b_pre_);
    auto back_b1b = conv2dBackward(b1a_act_, b1b_, g);
    accumulate(back_b1b.params, g_b1b_);
    Tensor<Scalar> g_b1a_act = std::move(back_b1b.input);
    g_b1a_act.array() += fusion_back.earlier_layers[0].array();

    g = reluBackward(g_b1a_act, b1a_pre_);
    auto back_b1a = conv2dBackward(stem2_act_, b1a_, g);
    accumulate(back_b1a.params, g_b1a_);

    g = reluBackward(back_b1a.input, stem2_pre_);
    auto back_stem2 = conv2dBackward(stem1_act_, stem2_, g);
    accumulate(back_stem2.params, g_stem2_);

    g = reluBackward(back_stem2.input, stem1_pre_);
    auto back_stem1 = conv2dBackward(image_, stem1_, g);
    accumulate(back_stem1.params, g_stem1_);
  }

  // Inference over proposal boxes given in image coordinates.
  std::vector<Detection> detect(const Tensor<Scalar>& image,
                                const std::vector<Box>& proposals, int image_id,
                                double score_threshold = 0.05,
                                double nms_threshold = 0.3) {
    if (proposals.empty()) return {};
    const double stride = featureStride();
    std::vector<RoI> rois;
    for (const auto& b : proposals) {
      RoI r;
      r.batch_index = 0;
      r.x0 = b[0] / stride;
      r.y0 = b[1] / stride;
      r.x1 = b[2] / stride;
      r.y1 = b[3] / stride;
      rois.push_back(r);
    }
    auto out = forward(image, rois);

    const Index K = cfg_.classes;
    const double img_w = image.w(), img_h = image.h();
    std::vector<Detection> dets;
    for (size_t i = 0; i < proposals.size(); ++i) {
      const Index ii = static_cast<Index>(i);
      // softmax over K+1 logits
      Scalar max_logit = out.logits(ii, 0, 0, 0);
      for (Index k = 1; k <= K; ++k)
        max_logit = std::max(max_logit, out.logits(ii, k, 0, 0));
      Scalar z = 0;
      for (Index k = 0; k <= K; ++k)
        z += std::exp(out.logits(ii, k, 0, 0) - max_logit);
      for (Index k = 1; k <= K; ++k) {
        const double score =
            std::exp(out.logits(ii, k, 0, 0) - max_logit) / z;
        if (score < score_threshold) continue;
        std::array<double, 4> d;
        for (Index c = 0; c < 4; ++c)
          d[c] = out.deltas(ii, 4 * (k - 1) + c, 0, 0);
        Box box = applyDeltas(proposals[i], d);
        box[0] = std::clamp(box[0], 0.0, img_w);
        box[1] = std::clamp(box[1], 0.0, img_h);
        box[2] = std::clamp(box[2], box[0], img_w);
        box[3] = std::clamp(box[3], box[1], img_h);
        dets.push_back(Detection{image_id, static_cast<int>(k), score, box});
      }
    }
    return nms(dets, nms_threshold);
  }

 private:
  static void accumulate(const ConvGrads<Scalar>& from, ConvGrads<Scalar>& to) {
    to.w.array() += from.w.array();
    to.b += from.b;
  }

  static void accumulate(const MLKPGrads<Scalar>& from, MLKPGrads<Scalar>& to) {
    for (size_t i = 0; i < from.factor_convs.size(); ++i)
      for (size_t s = 0; s < from.factor_convs[i].size(); ++s)
        accumulate(from.factor_convs[i][s], to.factor_convs[i][s]);
    if (!from.loc_reduce.w.empty()) {
      accumulate(from.loc_reduce, to.loc_reduce);
      accumulate(from.loc_hidden, to.loc_hidden);
      accumulate(from.loc_project, to.loc_project);
    }
  }

  Config cfg_;

  ConvParams<Scalar> stem1_, stem2_, b1a_, b1b_, b2a_, b2b_;
  FusionParams<Scalar> fusion_;
  MLKPParams<Scalar> mlkp_;
  HeadParams<Scalar> head_;

  ConvGrads<Scalar> g_stem1_, g_stem2_, g_b1a_, g_b1b_, g_b2a_, g_b2b_;
  FusionGrads<Scalar> g_fusion_;
  MLKPGrads<Scalar> g_mlkp_;
  HeadGrads<Scalar> g_head_;

  ParamStore<Scalar> store_;

  // forward caches
  bool forward_done_ = false;
  Tensor<Scalar> image_;
  Tensor<Scalar> stem1_pre_, stem1_act_, stem2_pre_, stem2_act_;
  Tensor<Scalar> b1a_pre_, b1a_act_, b1b_pre_, b1b_act_;
  Tensor<Scalar> b2a_pre_, b2a_act_, b2b_pre_, b2b_act_;
  FusionCache<Scalar> fusion_cache_;
  MLKPCache<Scalar> mlkp_cache_;
  Tensor<Scalar> fused_, G_, pooled_, pooled_flat_;
  std::vector<RoI> rois_;
  std::vector<Index> argmax_;
};

}  // namespace mlkp

#endif  // MLKP_DETECTOR_HPP
