#include "doctest.h"

#include "mlkp/check_suites.hpp"
#include "mlkp/fusion.hpp"
#include "test_util.hpp"

using namespace mlkp;
using namespace mlkp::testutil;

TEST_CASE("intra-block concat with identity-padded adapter recovers parts") {
  Rng rng(1);
  auto a = randTensor<double>(rng, 1, 4, 2, 2);
  auto b = randTensor<double>(rng, 1, 4, 2, 2);
  auto adapter = makeConv<double>(8, 8, 1);
  for (Index o = 0; o < 8; ++o) adapter.w(o, o, 0, 0) = 1.0;  // identity
  auto out = intraBlockConcat<double>({a, b}, adapter);
  CHECK(out.c() == 8);
  CHECK(maxRelError(sliceChannels(out, 0, 4), a) <= 1e-15);
  CHECK(maxRelError(sliceChannels(out, 4, 4), b) <= 1e-15);
}

TEST_CASE("single layer with identity adapter is unchanged") {
  Rng rng(2);
  auto a = randTensor<double>(rng, 1, 3, 4, 4);
  auto adapter = makeConv<double>(3, 3, 1);
  for (Index o = 0; o < 3; ++o) adapter.w(o, o, 0, 0) = 1.0;
  auto out = intraBlockConcat<double>({a}, adapter);
  CHECK(maxRelError(out, a) <= 1e-15);
}

TEST_CASE("adapter forces the configured width regardless of input channels") {
  Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const Index F = rng.uniformInt(1, 9);
    const Index c1 = rng.uniformInt(1, 5), c2 = rng.uniformInt(1, 5);
    auto a = randTensor<double>(rng, 1, c1, 3, 3);
    auto b = randTensor<double>(rng, 1, c2, 3, 3);
    auto adapter = randConv<double>(rng, F, c1 + c2, 1);
    auto out = intraBlockConcat<double>({a, b}, adapter);
    CHECK(out.c() == F);
    CHECK(out.h() == 3);
  }
}

TEST_CASE("cross-block fuse: zero later branch reduces to conv of earlier") {
  Rng rng(5);
  const Index F = 4;
  auto params = FusionParams<double>::init(F, F, F, rng);
  params.upsample.b.setZero();  // keep the later branch exactly zero
  auto earlier = randTensor<double>(rng, 1, F, 6, 6);
  auto later = TensorD::zeros(1, F, 3, 3);
  auto fused = crossBlockFuse(earlier, later, params);
  auto direct = conv2d(earlier, params.recover);
  CHECK(bitwiseEqual(fused, direct));
}

TEST_CASE("cross-block fuse shape contract") {
  Rng rng(7);
  auto params = FusionParams<double>::init(1, 1, 1, rng);
  auto earlier = randTensor<double>(rng, 1, 1, 4, 4);
  auto later = randTensor<double>(rng, 1, 1, 2, 2);
  auto fused = crossBlockFuse(earlier, later, params);
  CHECK(fused.n() == 1);
  CHECK(fused.c() == 1);
  CHECK(fused.h() == 2);
  CHECK(fused.w() == 2);
}

TEST_CASE("cross-block fuse rejects a non-halved spatial relation") {
  Rng rng(9);
  auto params = FusionParams<double>::init(2, 2, 2, rng);
  auto earlier = randTensor<double>(rng, 1, 2, 6, 6);
  auto later = randTensor<double>(rng, 1, 2, 2, 2);
  CHECK_THROWS_AS(crossBlockFuse(earlier, later, params),
                  std::invalid_argument);
}

TEST_CASE("fused output equals the hand-composed deconv/sum/conv sequence") {
  Rng rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    const Index F = rng.uniformInt(1, 6);
    auto params = FusionParams<double>::init(F, F, F, rng);
    const Index h = rng.uniformInt(1, 4) * 2, w = rng.uniformInt(1, 4) * 2;
    auto earlier = randTensor<double>(rng, 1, F, h, w);
    auto later = randTensor<double>(rng, 1, F, h / 2, w / 2);
    auto fused = crossBlockFuse(earlier, later, params);
    auto composed =
        conv2d(add(earlier, deconv2d(later, params.upsample)), params.recover);
    CHECK(bitwiseEqual(fused, composed));
  }
}

TEST_CASE("fusion is linear in its inputs with zero biases") {
  Rng rng(13);
  const Index F = 3;
  auto params = FusionParams<double>::init(4, 4, F, rng);
  params.earlier_adapter.b.setZero();
  params.later_adapter.b.setZero();
  params.upsample.b.setZero();
  params.recover.b.setZero();

  std::vector<TensorD> e1 = {randTensor<double>(rng, 1, 2, 4, 4),
                             randTensor<double>(rng, 1, 2, 4, 4)};
  std::vector<TensorD> e2 = {randTensor<double>(rng, 1, 2, 4, 4),
                             randTensor<double>(rng, 1, 2, 4, 4)};
  std::vector<TensorD> l = {randTensor<double>(rng, 1, 2, 2, 2),
                            randTensor<double>(rng, 1, 2, 2, 2)};
  std::vector<TensorD> zero_l = {TensorD::zeros(1, 2, 2, 2),
                                 TensorD::zeros(1, 2, 2, 2)};
  std::vector<TensorD> e_sum = {add(e1[0], e2[0]), add(e1[1], e2[1])};

  auto f_sum = fusionForward(e_sum, l, params);
  auto f1 = fusionForward(e1, l, params);
  auto f2 = fusionForward(e2, zero_l, params);
  auto combined = add(f1, f2);
  CHECK(maxRelError(f_sum, combined) <= 1e-12);
}

TEST_CASE("gradient flows to both branches and all parameters") {
  auto report = finiteDiffCheckWithRetry(
      [](std::uint64_t s) { return checks::fusionCheck(s); }, 7);
  INFO(report.render());
  CHECK(report.pass);
}

TEST_CASE("fusion backward without cache is rejected") {
  Rng rng(17);
  auto params = FusionParams<double>::init(2, 2, 2, rng);
  FusionCache<double> cache;
  TensorD g(1, 2, 2, 2);
  CHECK_THROWS_AS(fusionBackward(g, params, cache), std::invalid_argument);
}
