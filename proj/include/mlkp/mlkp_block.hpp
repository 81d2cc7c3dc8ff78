#ifndef MLKP_MLKP_BLOCK_HPP
#define MLKP_MLKP_BLOCK_HPP

#include <map>
#include <vector>

#include "mlkp/conv.hpp"
#include "mlkp/pointwise.hpp"

namespace mlkp {

// Configuration of the high-order kernel block: which orders to compute,
// the rank of each order's decomposition, and the location-weight network.
struct MLKPConfig {
  int max_order = 3;                 // R; 1 degenerates to pass-through
  std::map<int, Index> rank_per_order;  // r in {2..R} -> D^r
  bool location_weight_enabled = true;
  Index location_hidden_channels = 0;  // 0 = ceil(c_in / 4), min 1

  void validate() const {
    MLKP_CHECK(max_order >= 1 && max_order <= 3,
               "supported orders are 1..3, got " << max_order);
    for (int r = 2; r <= max_order; ++r) {
      auto it = rank_per_order.find(r);
      MLKP_CHECK(it != rank_per_order.end(),
                 "missing rank for order " << r);
      MLKP_CHECK(it->second >= 1, "rank for order " << r << " must be >= 1");
    }
  }

  Index rank(int r) const {
    auto it = rank_per_order.find(r);
    MLKP_CHECK(it != rank_per_order.end(), "no rank configured for order " << r);
    return it->second;
  }

  Index locationHidden(Index c_in) const {
    if (location_hidden_channels > 0) return location_hidden_channels;
    return std::max<Index>(1, (c_in + 3) / 4);
  }

  // channels(G) = channels(X) + sum of per-order ranks
  Index outputChannels(Index c_in) const {
    Index total = c_in;
    for (int r = 2; r <= max_order; ++r) total += rank(r);
    return total;
  }
};

// Learnable state: r factor convolutions (1x1, c_in -> D^r) per order r,
// and the three-layer location-weight network (1x1 reduce, 3x3 pad-1 hidden,
// 1x1 to one channel, sigmoid squash).
template <typename Scalar>
struct MLKPParams {
  std::vector<std::vector<ConvParams<Scalar>>> factor_convs;  // [r-2][s]
  ConvParams<Scalar> loc_reduce;
  ConvParams<Scalar> loc_hidden;
  ConvParams<Scalar> loc_project;

  static MLKPParams init(const MLKPConfig& cfg, Index c_in, Rng& rng) {
    cfg.validate();
    MLKPParams p;
    for (int r = 2; r <= cfg.max_order; ++r) {
      std::vector<ConvParams<Scalar>> slots;
      for (int s = 0; s < r; ++s) {
        auto conv = makeConv<Scalar>(cfg.rank(r), c_in, 1);
        xavierInit(conv, rng);
        slots.push_back(std::move(conv));
      }
      p.factor_convs.push_back(std::move(slots));
    }
    const Index hidden = cfg.locationHidden(c_in);
    p.loc_reduce = makeConv<Scalar>(hidden, c_in, 1);
    p.loc_hidden = makeConv<Scalar>(hidden, hidden, 3, 1, 1);
    p.loc_project = makeConv<Scalar>(1, hidden, 1);
    xavierInit(p.loc_reduce, rng);
    xavierInit(p.loc_hidden, rng);
    xavierInit(p.loc_project, rng);
    return p;
  }

  const std::vector<ConvParams<Scalar>>& factors(int r) const {
    MLKP_CHECK(r >= 2 && static_cast<size_t>(r - 2) < factor_convs.size(),
               "no factor convolutions for order " << r);
    MLKP_CHECK(factor_convs[r - 2].size() == static_cast<size_t>(r),
               "order " << r << " needs " << r << " factor convolutions, have "
                        << factor_convs[r - 2].size());
    return factor_convs[r - 2];
  }
};

template <typename Scalar>
struct MLKPGrads {
  std::vector<std::vector<ConvGrads<Scalar>>> factor_convs;
  ConvGrads<Scalar> loc_reduce;
  ConvGrads<Scalar> loc_hidden;
  ConvGrads<Scalar> loc_project;

  static MLKPGrads zerosLike(const MLKPParams<Scalar>& p) {
    MLKPGrads g;
    for (const auto& slots : p.factor_convs) {
      std::vector<ConvGrads<Scalar>> gs;
      for (const auto& conv : slots) gs.push_back(ConvGrads<Scalar>::zerosLike(conv));
      g.factor_convs.push_back(std::move(gs));
    }
    g.loc_reduce = ConvGrads<Scalar>::zerosLike(p.loc_reduce);
    g.loc_hidden = ConvGrads<Scalar>::zerosLike(p.loc_hidden);
    g.loc_project = ConvGrads<Scalar>::zerosLike(p.loc_project);
    return g;
  }

  void setZero() {
    for (auto& slots : factor_convs)
      for (auto& g : slots) g.setZero();
    loc_reduce.setZero();
    loc_hidden.setZero();
    loc_project.setZero();
  }
};

// Forward state retained for the analytic backward pass.
template <typename Scalar>
struct MLKPCache {
  bool valid = false;
  Tensor<Scalar> input;
  std::vector<std::vector<Tensor<Scalar>>> slot_maps;  // Z^r_s
  std::vector<Tensor<Scalar>> order_maps;              // Z^r
  // location-weight network intermediates
  Tensor<Scalar> loc_pre1, loc_act1, loc_pre2, loc_act2, loc_pre3, m;
};

// Z^r_s = conv_{1x1xD^r}(X) for each slot, Z^r = elementwise product of all
// slots. Value at (n, d, i, j) is the product over slots of <u_s, x_ij> + b_s.
template <typename Scalar>
Tensor<Scalar> computeOrderMaps(const Tensor<Scalar>& X,
                                const MLKPParams<Scalar>& params, int r,
                                std::vector<Tensor<Scalar>>* slots_out = nullptr) {
  MLKP_CHECK(r >= 2, "order maps are defined for r >= 2, got " << r);
  const auto& factors = params.factors(r);
  Tensor<Scalar> z;
  std::vector<Tensor<Scalar>> slots;
  slots.reserve(factors.size());
  for (size_t s = 0; s < factors.size(); ++s) {
    slots.push_back(conv2d(X, factors[s]));
    z = (s == 0) ? slots.back() : product(z, slots.back());
  }
  if (slots_out) *slots_out = std::move(slots);
  return z;
}

// m(X, Theta_m): 1x1 reduce -> relu -> 3x3 pad-1 -> relu -> 1x1 -> sigmoid,
// giving a (n, 1, h, w) map strictly inside (0, 1).
template <typename Scalar>
Tensor<Scalar> locationWeightForward(const Tensor<Scalar>& X,
                                     const MLKPParams<Scalar>& params,
                                     MLKPCache<Scalar>* cache = nullptr) {
  Tensor<Scalar> pre1 = conv2d(X, params.loc_reduce);
  Tensor<Scalar> act1 = relu(pre1);
  Tensor<Scalar> pre2 = conv2d(act1, params.loc_hidden);
  Tensor<Scalar> act2 = relu(pre2);
  Tensor<Scalar> pre3 = conv2d(act2, params.loc_project);
  MLKP_CHECK(pre3.c() == 1, "location weight must have exactly one channel");
  Tensor<Scalar> m = sigmoid(pre3);
  if (cache) {
    cache->loc_pre1 = std::move(pre1);
    cache->loc_act1 = std::move(act1);
    cache->loc_pre2 = std::move(pre2);
    cache->loc_act2 = std::move(act2);
    cache->loc_pre3 = std::move(pre3);
    cache->m = m;
  }
  return m;
}

// g^r = Z^r weighted per location by the shared single-channel map m
// (broadcast across channels).
template <typename Scalar>
Tensor<Scalar> applyLocationWeight(const Tensor<Scalar>& Zr,
                                   const Tensor<Scalar>& m) {
  MLKP_CHECK(m.c() == 1 && m.n() == Zr.n() && m.h() == Zr.h() && m.w() == Zr.w(),
             "location weight " << m.shapeString() << " does not match "
                                << Zr.shapeString());
  return product(Zr, m);
}

// G(X) = [X, g_2(X), ..., g_R(X)] along channels. One m is computed and
// shared by every order.
template <typename Scalar>
Tensor<Scalar> mlkpForward(const Tensor<Scalar>& X, const MLKPConfig& cfg,
                           const MLKPParams<Scalar>& params,
                           MLKPCache<Scalar>* cache = nullptr) {
  cfg.validate();
  if (cache) {
    *cache = MLKPCache<Scalar>{};
    cache->input = X;
  }
  if (cfg.max_order == 1) {
    if (cache) cache->valid = true;
    return X;
  }

  Tensor<Scalar> m;
  if (cfg.location_weight_enabled) m = locationWeightForward(X, params, cache);

  std::vector<Tensor<Scalar>> parts;
  parts.push_back(X);
  for (int r = 2; r <= cfg.max_order; ++r) {
    std::vector<Tensor<Scalar>> slots;
    Tensor<Scalar> z = computeOrderMaps(X, params, r, &slots);
    if (cache) {
      cache->slot_maps.push_back(std::move(slots));
      cache->order_maps.push_back(z);
    }
    parts.push_back(cfg.location_weight_enabled ? applyLocationWeight(z, m)
                                                : std::move(z));
  }
  if (cache) cache->valid = true;
  return concatChannels(parts);
}

template <typename Scalar>
struct MLKPBackward {
  Tensor<Scalar> input;  // dL/dX, all three contribution paths summed
  MLKPGrads<Scalar> grads;
};

// Backward through the location network layers; returns dL/dX of that path
// and accumulates parameter grads.
template <typename Scalar>
Tensor<Scalar> locationWeightBackward(const Tensor<Scalar>& grad_m,
                                      const MLKPParams<Scalar>& params,
                                      const MLKPCache<Scalar>& cache,
                                      MLKPGrads<Scalar>& grads) {
  Tensor<Scalar> g = sigmoidBackward(grad_m, cache.m);
  auto back3 = conv2dBackward(cache.loc_act2, params.loc_project, g);
  grads.loc_project.w.array() += back3.params.w.array();
  grads.loc_project.b += back3.params.b;
  g = reluBackward(back3.input, cache.loc_pre2);
  auto back2 = conv2dBackward(cache.loc_act1, params.loc_hidden, g);
  grads.loc_hidden.w.array() += back2.params.w.array();
  grads.loc_hidden.b += back2.params.b;
  g = reluBackward(back2.input, cache.loc_pre1);
  auto back1 = conv2dBackward(cache.input, params.loc_reduce, g);
  grads.loc_reduce.w.array() += back1.params.w.array();
  grads.loc_reduce.b += back1.params.b;
  return back1.input;
}

// Adjoint of mlkpForward. grad_X collects the identity path through the raw
// X prefix, the product-rule path through every slot of every order, and the
// location path through the shared m. Factor grads carry the m weighting;
// the location grads sum contributions from all orders.
template <typename Scalar>
MLKPBackward<Scalar> mlkpBackward(const Tensor<Scalar>& grad_G,
                                  const MLKPConfig& cfg,
                                  const MLKPParams<Scalar>& params,
                                  const MLKPCache<Scalar>& cache) {
  cfg.validate();
  MLKP_CHECK(cache.valid, "mlkpBackward called without a cached forward pass");
  const Tensor<Scalar>& X = cache.input;
  MLKP_CHECK(grad_G.c() == cfg.outputChannels(X.c()),
             "grad_G has " << grad_G.c() << " channels, expected "
                           << cfg.outputChannels(X.c()));

  MLKPBackward<Scalar> result;
  result.grads = MLKPGrads<Scalar>::zerosLike(params);
  result.input = sliceChannels(grad_G, 0, X.c());  // identity path
  if (cfg.max_order == 1) return result;

  Tensor<Scalar> grad_m;
  if (cfg.location_weight_enabled)
    grad_m = Tensor<Scalar>::zeros(X.n(), 1, X.h(), X.w());

  Index offset = X.c();
  for (int r = 2; r <= cfg.max_order; ++r) {
    const Index D = cfg.rank(r);
    const auto& slots = cache.slot_maps[r - 2];
    const Tensor<Scalar>& Zr = cache.order_maps[r - 2];
    Tensor<Scalar> grad_gr = sliceChannels(grad_G, offset, D);
    offset += D;

    Tensor<Scalar> grad_Zr;
    if (cfg.location_weight_enabled) {
      auto back = productBackward(grad_gr, Zr, cache.m);
      grad_Zr = std::move(back.a);
      grad_m.array() += back.b.array();
    } else {
      grad_Zr = std::move(grad_gr);
    }

    // Product rule across slots: dL/dZ^r_s = grad_Zr * prod_{t != s} Z^r_t.
    for (size_t s = 0; s < slots.size(); ++s) {
      Tensor<Scalar> grad_slot = grad_Zr;
      for (size_t t = 0; t < slots.size(); ++t)
        if (t != s) grad_slot = product(grad_slot, slots[t]);
      auto back = conv2dBackward(X, params.factors(r)[s], grad_slot);
      result.grads.factor_convs[r - 2][s].w.array() += back.params.w.array();
      result.grads.factor_convs[r - 2][s].b += back.params.b;
      result.input.array() += back.input.array();
    }
  }

  if (cfg.location_weight_enabled) {
    Tensor<Scalar> grad_X_loc =
        locationWeightBackward(grad_m, params, cache, result.grads);
    result.input.array() += grad_X_loc.array();
  }
  return result;
}

}  // namespace mlkp

#endif  // MLKP_MLKP_BLOCK_HPP
