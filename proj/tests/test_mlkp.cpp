#include "doctest.h"

#include "mlkp/check_suites.hpp"
#include "mlkp/mlkp_block.hpp"
#include "mlkp/oracle.hpp"
#include "test_util.hpp"

using namespace mlkp;
using namespace mlkp::testutil;

namespace {

MLKPConfig smallConfig(int R, Index D, bool location = true) {
  MLKPConfig cfg;
  cfg.max_order = R;
  for (int r = 2; r <= R; ++r) cfg.rank_per_order[r] = D;
  cfg.location_weight_enabled = location;
  return cfg;
}

}  // namespace

TEST_CASE("order maps: basis factors select and multiply channels") {
  auto X = TensorD::from(1, 2, 1, 1, {1, 2});
  MLKPParams<double> p;
  p.factor_convs.resize(1);
  auto u1 = makeConv<double>(1, 2, 1);
  u1.w(0, 0, 0, 0) = 1;
  auto u2 = makeConv<double>(1, 2, 1);
  u2.w(0, 1, 0, 0) = 1;
  p.factor_convs[0] = {u1, u2};
  auto z = computeOrderMaps(X, p, 2);
  CHECK(z(0, 0, 0, 0) == doctest::Approx(2.0).epsilon(1e-15));
}

TEST_CASE("order maps: third order cubes a scalar") {
  const double xv = -1.3;
  auto X = TensorD::from(1, 1, 1, 1, {xv});
  MLKPParams<double> p;
  p.factor_convs.resize(2);
  auto u = makeConv<double>(1, 1, 1);
  u.w(0, 0, 0, 0) = 1;
  p.factor_convs[0] = {u, u};
  p.factor_convs[1] = {u, u, u};
  auto z = computeOrderMaps(X, p, 3);
  CHECK(z(0, 0, 0, 0) == doctest::Approx(xv * xv * xv).epsilon(1e-14));
}

TEST_CASE("order maps reject missing slots and r < 2") {
  Rng rng(1);
  auto X = randTensor<double>(rng, 1, 4, 2, 2);
  MLKPParams<double> p;
  p.factor_convs.resize(1);
  p.factor_convs[0] = {randConv<double>(rng, 3, 4, 1)};  // only one slot for r=2
  CHECK_THROWS_AS(computeOrderMaps(X, p, 2), std::invalid_argument);
  CHECK_THROWS_AS(computeOrderMaps(X, p, 1), std::invalid_argument);
}

TEST_CASE("order maps match the kernel oracle on random instances") {
  Rng rng(42);
  for (int r : {2, 3}) {
    double worst = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
      auto cfg = smallConfig(r, 16);
      auto params = MLKPParams<double>::init(cfg, 8, rng);
      auto X = randTensor<double>(rng, 2, 8, 4, 4);
      auto z = computeOrderMaps(X, params, r);
      auto ref = kernelOracle(X, params, r);
      worst = std::max(worst, maxRelError(z, ref));
    }
    CAPTURE(r);
    CHECK(worst <= 1e-10);
  }
}

TEST_CASE("location weight: zero parameters give m = 0.5 everywhere") {
  Rng rng(3);
  auto cfg = smallConfig(2, 4);
  auto params = MLKPParams<double>::init(cfg, 6, rng);
  params.loc_reduce.w.setZero();
  params.loc_reduce.b.setZero();
  params.loc_hidden.w.setZero();
  params.loc_hidden.b.setZero();
  params.loc_project.w.setZero();
  params.loc_project.b.setZero();
  auto X = randTensor<double>(rng, 2, 6, 3, 4);
  auto m = locationWeightForward(X, params);
  CHECK(m.c() == 1);
  for (Index i = 0; i < m.size(); ++i) CHECK(m.data()[i] == 0.5);
}

TEST_CASE("location weight saturates with final-layer bias +-20") {
  Rng rng(5);
  auto cfg = smallConfig(2, 4);
  auto params = MLKPParams<double>::init(cfg, 4, rng);
  auto X = randTensor<double>(rng, 1, 4, 3, 3);

  params.loc_project.b[0] = 20.0;
  params.loc_project.w.setZero();  // isolate the bias
  auto hi = locationWeightForward(X, params);
  for (Index i = 0; i < hi.size(); ++i) CHECK(std::abs(hi.data()[i] - 1.0) <= 1e-8);

  params.loc_project.b[0] = -20.0;
  auto lo = locationWeightForward(X, params);
  for (Index i = 0; i < lo.size(); ++i) CHECK(std::abs(lo.data()[i]) <= 1e-8);
}

TEST_CASE("location weight stays strictly inside (0, 1) over 100 draws") {
  Rng rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    const Index c = rng.uniformInt(1, 8);
    auto cfg = smallConfig(2, 4);
    auto params = MLKPParams<double>::init(cfg, c, rng);
    auto X = randTensor<double>(rng, rng.uniformInt(1, 2), c,
                                rng.uniformInt(1, 5), rng.uniformInt(1, 5));
    auto m = locationWeightForward(X, params);
    CHECK(m.n() == X.n());
    CHECK(m.c() == 1);
    CHECK(m.h() == X.h());
    CHECK(m.w() == X.w());
    for (Index i = 0; i < m.size(); ++i) {
      CHECK(m.data()[i] > 0.0);
      CHECK(m.data()[i] < 1.0);
    }
  }
}

TEST_CASE("apply_location_weight: identity, annihilation, materialized oracle") {
  Rng rng(9);
  auto Z = randTensor<double>(rng, 2, 5, 3, 3);
  auto ones = TensorD::full(2, 1, 3, 3, 1.0);
  CHECK(bitwiseEqual(applyLocationWeight(Z, ones), Z));

  auto zeros = TensorD::zeros(2, 1, 3, 3);
  auto g0 = applyLocationWeight(Z, zeros);
  for (Index i = 0; i < g0.size(); ++i) CHECK(g0.data()[i] == 0.0);

  auto m = randTensor<double>(rng, 2, 1, 3, 3);
  auto via_broadcast = applyLocationWeight(Z, m);
  auto via_materialized = product(Z, broadcastChannels(m, Z.c()));
  CHECK(bitwiseEqual(via_broadcast, via_materialized));

  TensorD wrong(2, 1, 4, 3);
  CHECK_THROWS_AS(applyLocationWeight(Z, wrong), std::invalid_argument);
}

TEST_CASE("forward: R=1 passes X through bitwise") {
  Rng rng(11);
  auto cfg = smallConfig(1, 0);
  auto params = MLKPParams<double>::init(cfg, 5, rng);
  auto X = randTensor<double>(rng, 2, 5, 3, 3);
  MLKPCache<double> cache;
  auto G = mlkpForward(X, cfg, params, &cache);
  CHECK(bitwiseEqual(G, X));
  CHECK(cache.valid);
}

TEST_CASE("forward: output channel arithmetic") {
  Rng rng(13);
  {
    auto cfg = smallConfig(3, 128);
    CHECK(cfg.outputChannels(64) == 64 + 128 + 128);
  }
  {
    // paper default: R=3, D=4096 on a 512-channel map -> 8704 channels
    auto cfg = smallConfig(3, 4096);
    CHECK(cfg.outputChannels(512) == 8704);
  }
  // shape sweep over random configs
  for (int trial = 0; trial < 20; ++trial) {
    const int R = static_cast<int>(rng.uniformInt(1, 3));
    MLKPConfig cfg;
    cfg.max_order = R;
    Index expected = 0;
    for (int r = 2; r <= R; ++r) {
      cfg.rank_per_order[r] = rng.uniformInt(1, 12);
      expected += cfg.rank_per_order[r];
    }
    const Index c = rng.uniformInt(1, 6);
    auto params = MLKPParams<double>::init(cfg, c, rng);
    auto X = randTensor<double>(rng, 1, c, rng.uniformInt(1, 4),
                                rng.uniformInt(1, 4));
    auto G = mlkpForward(X, cfg, params);
    CHECK(G.c() == c + expected);
    CHECK(G.h() == X.h());
    CHECK(G.w() == X.w());
  }
}

TEST_CASE("forward: first channels(X) channels of G equal X bitwise") {
  Rng rng(17);
  auto cfg = smallConfig(3, 6);
  auto params = MLKPParams<double>::init(cfg, 4, rng);
  auto X = randTensor<double>(rng, 2, 4, 3, 5);
  auto G = mlkpForward(X, cfg, params);
  CHECK(bitwiseEqual(sliceChannels(G, 0, 4), X));
}

TEST_CASE("forward: one shared m distinguishes no order or channel") {
  Rng rng(19);
  auto cfg = smallConfig(3, 5);
  auto params = MLKPParams<double>::init(cfg, 4, rng);
  auto X = randTensor<double>(rng, 1, 4, 3, 3);
  MLKPCache<double> cache;
  auto G = mlkpForward(X, cfg, params, &cache);

  // wherever Z != 0, g/Z must equal m at that location, for all orders
  Index offset = X.c();
  for (int r = 2; r <= 3; ++r) {
    const auto& Z = cache.order_maps[r - 2];
    auto g = sliceChannels(G, offset, Z.c());
    offset += Z.c();
    for (Index d = 0; d < Z.c(); ++d)
      for (Index i = 0; i < 3; ++i)
        for (Index j = 0; j < 3; ++j) {
          if (Z(0, d, i, j) == 0.0) continue;
          const double ratio = g(0, d, i, j) / Z(0, d, i, j);
          CHECK(relError(ratio, cache.m(0, 0, i, j)) <= 1e-12);
        }
  }
}

TEST_CASE("receptive field: weight off confines changes to one location") {
  Rng rng(23);
  auto cfg = smallConfig(3, 6, /*location=*/false);
  auto params = MLKPParams<double>::init(cfg, 4, rng);
  auto X = randTensor<double>(rng, 1, 4, 5, 5);
  auto base = mlkpForward(X, cfg, params);
  for (int trial = 0; trial < 20; ++trial) {
    auto X2 = X;
    const Index pi = rng.uniformInt(0, 4), pj = rng.uniformInt(0, 4);
    X2(0, rng.uniformInt(0, 3), pi, pj) += rng.normal();
    auto bumped = mlkpForward(X2, cfg, params);
    for (Index c = 0; c < base.c(); ++c)
      for (Index i = 0; i < 5; ++i)
        for (Index j = 0; j < 5; ++j) {
          if (i == pi && j == pj) continue;
          CHECK(bumped(0, c, i, j) == base(0, c, i, j));
        }
  }
}

TEST_CASE("receptive field: weight on confines changes to 3x3 neighborhood") {
  Rng rng(29);
  auto cfg = smallConfig(2, 6, /*location=*/true);
  auto params = MLKPParams<double>::init(cfg, 4, rng);
  auto X = randTensor<double>(rng, 1, 4, 6, 6);
  auto base = mlkpForward(X, cfg, params);
  for (int trial = 0; trial < 20; ++trial) {
    auto X2 = X;
    const Index pi = rng.uniformInt(0, 5), pj = rng.uniformInt(0, 5);
    X2(0, rng.uniformInt(0, 3), pi, pj) += rng.normal();
    auto bumped = mlkpForward(X2, cfg, params);
    for (Index c = 0; c < base.c(); ++c)
      for (Index i = 0; i < 6; ++i)
        for (Index j = 0; j < 6; ++j) {
          if (std::abs(i - pi) <= 1 && std::abs(j - pj) <= 1) continue;
          CHECK(bumped(0, c, i, j) == base(0, c, i, j));
        }
  }
}

TEST_CASE("backward: R=1 passes the gradient through bitwise") {
  Rng rng(31);
  auto cfg = smallConfig(1, 0);
  auto params = MLKPParams<double>::init(cfg, 5, rng);
  auto X = randTensor<double>(rng, 1, 5, 2, 2);
  MLKPCache<double> cache;
  mlkpForward(X, cfg, params, &cache);
  auto grad_G = randTensor<double>(rng, 1, 5, 2, 2);
  auto back = mlkpBackward(grad_G, cfg, params, cache);
  CHECK(bitwiseEqual(back.input, grad_G));
  CHECK(back.grads.factor_convs.empty());
}

TEST_CASE("backward: scalar second-order closed form 2abx") {
  const double a = 1.7, b = -0.6, x = 0.9;
  MLKPConfig cfg = smallConfig(2, 1, /*location=*/false);
  MLKPParams<double> params;
  params.factor_convs.resize(1);
  auto u1 = makeConv<double>(1, 1, 1);
  u1.w(0, 0, 0, 0) = a;
  auto u2 = makeConv<double>(1, 1, 1);
  u2.w(0, 0, 0, 0) = b;
  params.factor_convs[0] = {u1, u2};

  auto X = TensorD::from(1, 1, 1, 1, {x});
  MLKPCache<double> cache;
  auto G = mlkpForward(X, cfg, params, &cache);
  CHECK(G(0, 1, 0, 0) == doctest::Approx(a * b * x * x).epsilon(1e-14));

  // seed only the Z^2 channel of grad_G
  auto grad_G = TensorD::from(1, 2, 1, 1, {0, 1});
  auto back = mlkpBackward(grad_G, cfg, params, cache);
  CHECK(back.input(0, 0, 0, 0) == doctest::Approx(2 * a * b * x).epsilon(1e-13));
}

TEST_CASE("backward: zero output gradient yields all-zero gradients") {
  Rng rng(37);
  auto cfg = smallConfig(3, 4);
  auto params = MLKPParams<double>::init(cfg, 3, rng);
  auto X = randTensor<double>(rng, 1, 3, 3, 3);
  MLKPCache<double> cache;
  auto G = mlkpForward(X, cfg, params, &cache);
  auto back = mlkpBackward(TensorD::zeros(1, G.c(), 3, 3), cfg, params, cache);
  CHECK(back.input.array().abs().maxCoeff() == 0.0);
  for (const auto& slots : back.grads.factor_convs)
    for (const auto& g : slots) {
      CHECK(g.w.array().abs().maxCoeff() == 0.0);
      CHECK(g.b.abs().maxCoeff() == 0.0);
    }
  CHECK(back.grads.loc_reduce.w.array().abs().maxCoeff() == 0.0);
  CHECK(back.grads.loc_project.w.array().abs().maxCoeff() == 0.0);
}

TEST_CASE("backward without a cached forward is rejected") {
  Rng rng(41);
  auto cfg = smallConfig(2, 4);
  auto params = MLKPParams<double>::init(cfg, 3, rng);
  MLKPCache<double> cache;  // never filled
  TensorD grad_G(1, 3 + 4, 2, 2);
  CHECK_THROWS_AS(mlkpBackward(grad_G, cfg, params, cache),
                  std::invalid_argument);
}

TEST_CASE("full block finite-difference check at 1e-5") {
  auto report = finiteDiffCheckWithRetry(
      [](std::uint64_t s) { return checks::mlkpBlockCheck(s); }, 2024);
  INFO(report.render());
  CHECK(report.pass);
  CHECK(report.skippedFraction() <= 0.05);
}

TEST_CASE("config validation") {
  MLKPConfig cfg;
  cfg.max_order = 4;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.max_order = 2;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);  // missing rank
  cfg.rank_per_order[2] = 8;
  CHECK_NOTHROW(cfg.validate());
}
