#ifndef MLKP_CHECK_SUITES_HPP
#define MLKP_CHECK_SUITES_HPP

#include <utility>

#include "mlkp/fusion.hpp"
#include "mlkp/gradcheck.hpp"
#include "mlkp/head.hpp"
#include "mlkp/mlkp_block.hpp"
#include "mlkp/oracle.hpp"

// Standard verification battery: finite-difference checks of the kernel
// block, the fusion module, the detection head and the multi-task loss, at
// fixed desk-scale sizes. Shared by the unit tests, the acceptance suite and
// the `gradcheck` CLI command.

namespace mlkp::checks {

namespace detail {

template <typename Scalar>
void copyGrads(const ConvGrads<Scalar>& from, ConvGrads<Scalar>& to) {
  to.w.array() = from.w.array();
  to.b = from.b;
}

inline void appendSigns(const TensorD& preact, std::vector<std::uint8_t>& signs) {
  for (Index i = 0; i < preact.size(); ++i)
    signs.push_back(preact.data()[i] > 0 ? 1 : 0);
}

}  // namespace detail

// Full kernel block (c=6, 3x3 spatial, R=3, D=8, location weight on),
// loss sum(G^2), checking grad_X, every factor convolution and the
// location-weight parameters.
inline GradReport mlkpBlockCheck(std::uint64_t seed, double eps = 1e-4,
                                 double tol = 1e-5) {
  Rng rng(seed);
  MLKPConfig cfg;
  cfg.max_order = 3;
  cfg.rank_per_order[2] = 8;
  cfg.rank_per_order[3] = 8;
  cfg.location_weight_enabled = true;

  auto params = MLKPParams<double>::init(cfg, 6, rng);
  auto grads = MLKPGrads<double>::zerosLike(params);
  TensorD X(1, 6, 3, 3);
  X.fillNormal(rng);
  TensorD grad_X(1, 6, 3, 3);

  ParamStore<double> store;
  store.add("input", X, grad_X);
  for (int r = 2; r <= cfg.max_order; ++r)
    for (int s = 0; s < r; ++s)
      store.addConv("order" + std::to_string(r) + ".slot" + std::to_string(s + 1),
                    params.factor_convs[r - 2][s], grads.factor_convs[r - 2][s]);
  store.addConv("loc.reduce", params.loc_reduce, grads.loc_reduce);
  store.addConv("loc.hidden", params.loc_hidden, grads.loc_hidden);
  store.addConv("loc.project", params.loc_project, grads.loc_project);

  auto probe = [&]() {
    MLKPCache<double> cache;
    TensorD G = mlkpForward(X, cfg, params, &cache);
    const double loss = G.array().square().sum();
    TensorD grad_G(G.n(), G.c(), G.h(), G.w());
    grad_G.array() = 2.0 * G.array();
    auto back = mlkpBackward(grad_G, cfg, params, cache);
    grad_X.array() = back.input.array();
    for (size_t oi = 0; oi < grads.factor_convs.size(); ++oi)
      for (size_t s = 0; s < grads.factor_convs[oi].size(); ++s)
        detail::copyGrads(back.grads.factor_convs[oi][s],
                          grads.factor_convs[oi][s]);
    detail::copyGrads(back.grads.loc_reduce, grads.loc_reduce);
    detail::copyGrads(back.grads.loc_hidden, grads.loc_hidden);
    detail::copyGrads(back.grads.loc_project, grads.loc_project);

    ProbeEval eval;
    eval.value = loss;
    detail::appendSigns(cache.loc_pre1, eval.kink_signs);
    detail::appendSigns(cache.loc_pre2, eval.kink_signs);
    return eval;
  };
  return finiteDiffCheck(store, probe, eps, tol);
}

// Fusion module: two layers per block, loss sum(out^2); gradient must flow
// to all four convolutions and to both branch inputs.
inline GradReport fusionCheck(std::uint64_t seed, double eps = 1e-4,
                              double tol = 1e-5) {
  Rng rng(seed);
  const Index F = 5;
  auto params = FusionParams<double>::init(3 + 2, 4 + 3, F, rng);
  auto grads = FusionGrads<double>::zerosLike(params);

  std::vector<TensorD> earlier = {TensorD(1, 3, 6, 6), TensorD(1, 2, 6, 6)};
  std::vector<TensorD> later = {TensorD(1, 4, 3, 3), TensorD(1, 3, 3, 3)};
  for (auto& t : earlier) t.fillNormal(rng);
  for (auto& t : later) t.fillNormal(rng);
  std::vector<TensorD> grad_earlier = {TensorD(1, 3, 6, 6), TensorD(1, 2, 6, 6)};
  std::vector<TensorD> grad_later = {TensorD(1, 4, 3, 3), TensorD(1, 3, 3, 3)};

  ParamStore<double> store;
  store.add("earlier.layer1", earlier[0], grad_earlier[0]);
  store.add("earlier.layer2", earlier[1], grad_earlier[1]);
  store.add("later.layer1", later[0], grad_later[0]);
  store.add("later.layer2", later[1], grad_later[1]);
  store.addConv("earlier.adapter", params.earlier_adapter, grads.earlier_adapter);
  store.addConv("later.adapter", params.later_adapter, grads.later_adapter);
  store.addConv("upsample", params.upsample, grads.upsample);
  store.addConv("recover", params.recover, grads.recover);

  auto probe = [&]() {
    FusionCache<double> cache;
    TensorD out = fusionForward(earlier, later, params, &cache);
    const double loss = out.array().square().sum();
    TensorD grad_out(out.n(), out.c(), out.h(), out.w());
    grad_out.array() = 2.0 * out.array();
    auto back = fusionBackward(grad_out, params, cache);
    for (int i = 0; i < 2; ++i) {
      grad_earlier[i].array() = back.earlier_layers[i].array();
      grad_later[i].array() = back.later_layers[i].array();
    }
    detail::copyGrads(back.grads.earlier_adapter, grads.earlier_adapter);
    detail::copyGrads(back.grads.later_adapter, grads.later_adapter);
    detail::copyGrads(back.grads.upsample, grads.upsample);
    detail::copyGrads(back.grads.recover, grads.recover);
    return ProbeEval{loss, {}};
  };
  return finiteDiffCheck(store, probe, eps, tol);
}

// Detection head: linear maps from pooled features to logits and deltas,
// loss sum(logits^2) + sum(deltas^2).
inline GradReport headCheck(std::uint64_t seed, double eps = 1e-4,
                            double tol = 1e-5) {
  Rng rng(seed);
  const Index feature_dim = 10, n_classes = 2;
  auto params = HeadParams<double>::init(feature_dim, n_classes, rng);
  auto grads = HeadGrads<double>::zerosLike(params);
  TensorD pooled(3, feature_dim, 1, 1);
  pooled.fillNormal(rng);
  TensorD grad_pooled(3, feature_dim, 1, 1);

  ParamStore<double> store;
  store.add("pooled", pooled, grad_pooled);
  store.addConv("head.cls", params.cls, grads.cls);
  store.addConv("head.box", params.box, grads.box);

  auto probe = [&]() {
    auto out = headForward(pooled, params);
    const double loss =
        out.logits.array().square().sum() + out.deltas.array().square().sum();
    TensorD gl(out.logits.n(), out.logits.c(), 1, 1);
    gl.array() = 2.0 * out.logits.array();
    TensorD gd(out.deltas.n(), out.deltas.c(), 1, 1);
    gd.array() = 2.0 * out.deltas.array();
    auto back = headBackward(pooled, params, gl, gd);
    grad_pooled.array() = back.features.array();
    detail::copyGrads(back.grads.cls, grads.cls);
    detail::copyGrads(back.grads.box, grads.box);
    return ProbeEval{loss, {}};
  };
  return finiteDiffCheck(store, probe, eps, tol);
}

// Multi-task detection loss wrt logits and deltas. Smooth-L1 has a curvature
// jump at |diff| = 1, so those transitions count as kinks.
inline GradReport lossCheck(std::uint64_t seed, double eps = 1e-4,
                            double tol = 1e-5) {
  Rng rng(seed);
  const Index R = 4, K = 3;
  TensorD logits(R, K + 1, 1, 1), deltas(R, 4 * K, 1, 1);
  logits.fillNormal(rng);
  deltas.fillNormal(rng);
  TensorD grad_logits(R, K + 1, 1, 1), grad_deltas(R, 4 * K, 1, 1);

  std::vector<RoiTarget> targets(R);
  for (Index i = 0; i < R; ++i) {
    targets[i].label = static_cast<int>(rng.uniformInt(0, K));
    for (int d = 0; d < 4; ++d) targets[i].deltas[d] = rng.normal() * 0.3;
  }

  ParamStore<double> store;
  store.add("logits", logits, grad_logits);
  store.add("deltas", deltas, grad_deltas);

  auto probe = [&]() {
    auto res = detectionLoss(logits, deltas, targets);
    grad_logits.array() = res.grad_logits.array();
    grad_deltas.array() = res.grad_deltas.array();
    ProbeEval eval;
    eval.value = res.loss;
    for (Index i = 0; i < R; ++i) {
      if (targets[i].label == 0) continue;
      const Index base = 4 * (targets[i].label - 1);
      for (Index d = 0; d < 4; ++d) {
        const double diff = deltas(i, base + d, 0, 0) - targets[i].deltas[d];
        eval.kink_signs.push_back(std::abs(diff) > 1.0 ? 1 : 0);
      }
    }
    return eval;
  };
  return finiteDiffCheck(store, probe, eps, tol);
}

// Worst relative deviation between the 1x1-convolution order maps and the
// brute-force kernel oracle, at the standard instance size (c=8, D=16, 4x4).
inline double kernelOracleMaxErr(std::uint64_t seed, int order, int trials) {
  Rng rng(seed);
  double worst = 0.0;
  for (int trial = 0; trial < trials; ++trial) {
    MLKPConfig cfg;
    cfg.max_order = order;
    for (int r = 2; r <= order; ++r) cfg.rank_per_order[r] = 16;
    auto params = MLKPParams<double>::init(cfg, 8, rng);
    TensorD X(2, 8, 4, 4);
    X.fillNormal(rng);
    worst = std::max(worst, maxRelError(computeOrderMaps(X, params, order),
                                        kernelOracle(X, params, order)));
  }
  return worst;
}

// Worst relative gap between the explicit order-r weight tensors and the
// factored predictor (c=5, R=3, D=4).
inline double predictorOracleMaxErr(std::uint64_t seed, int trials) {
  Rng rng(seed);
  const Index c = 5, D = 4;
  double worst = 0.0;
  for (int trial = 0; trial < trials; ++trial) {
    PredictorFactors f;
    f.w1 = Eigen::VectorXd::Zero(c);
    for (Index i = 0; i < c; ++i) f.w1[i] = rng.normal();
    for (int r = 2; r <= 3; ++r) {
      Eigen::VectorXd a(D);
      for (Index d = 0; d < D; ++d) a[d] = rng.normal();
      f.a.push_back(a);
      std::vector<Eigen::MatrixXd> us;
      for (int s = 0; s < r; ++s) {
        Eigen::MatrixXd u(c, D);
        for (Index i = 0; i < c; ++i)
          for (Index d = 0; d < D; ++d) u(i, d) = rng.normal();
        us.push_back(u);
      }
      f.u.push_back(us);
    }
    Eigen::VectorXd x(c);
    for (Index i = 0; i < c; ++i) x[i] = rng.normal();
    auto pair = predictorOracle(x, f);
    worst = std::max(worst, relError(pair.explicit_tensor, pair.factored));
  }
  return worst;
}

inline std::vector<std::pair<std::string, GradReport>> standardBattery(
    std::uint64_t seed, double eps = 1e-4, double tol = 1e-5) {
  auto retry = [&](auto&& fn) {
    return finiteDiffCheckWithRetry(
        [&](std::uint64_t s) { return fn(s, eps, tol); }, seed);
  };
  std::vector<std::pair<std::string, GradReport>> out;
  out.emplace_back("mlkp_block", retry([](std::uint64_t s, double e, double t) {
                     return mlkpBlockCheck(s, e, t);
                   }));
  out.emplace_back("fusion", retry([](std::uint64_t s, double e, double t) {
                     return fusionCheck(s, e, t);
                   }));
  out.emplace_back("head", retry([](std::uint64_t s, double e, double t) {
                     return headCheck(s, e, t);
                   }));
  out.emplace_back("detection_loss",
                   retry([](std::uint64_t s, double e, double t) {
                     return lossCheck(s, e, t);
                   }));
  return out;
}

}  // namespace mlkp::checks

#endif  // MLKP_CHECK_SUITES_HPP
