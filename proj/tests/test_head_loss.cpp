#include "doctest.h"

#include "mlkp/check_suites.hpp"
#include "mlkp/head.hpp"
#include "test_util.hpp"

using namespace mlkp;
using namespace mlkp::testutil;

TEST_CASE("flatten/unflatten is a relabeling round trip") {
  Rng rng(1);
  auto t = randTensor<double>(rng, 3, 4, 2, 5);
  auto flat = flattenChannels(t);
  CHECK(flat.c() == 40);
  CHECK(bitwiseEqual(unflattenChannels(flat, 4, 2, 5), t));
}

TEST_CASE("zero head gives uniform logits and zero deltas") {
  Rng rng(2);
  auto pooled = randTensor<double>(rng, 2, 6, 1, 1);
  HeadParams<double> p;
  p.cls = makeConv<double>(3, 6, 1);
  p.box = makeConv<double>(8, 6, 1);
  auto out = headForward(pooled, p);
  for (Index i = 0; i < out.logits.size(); ++i)
    CHECK(out.logits.data()[i] == 0.0);
  for (Index i = 0; i < out.deltas.size(); ++i)
    CHECK(out.deltas.data()[i] == 0.0);
}

TEST_CASE("one-hot weight row copies the selected feature") {
  Rng rng(3);
  auto pooled = randTensor<double>(rng, 1, 5, 1, 1);
  HeadParams<double> p;
  p.cls = makeConv<double>(2, 5, 1);
  p.box = makeConv<double>(4, 5, 1);
  p.cls.w(1, 3, 0, 0) = 1.0;
  auto out = headForward(pooled, p);
  CHECK(out.logits(0, 1, 0, 0) == pooled(0, 3, 0, 0));
  CHECK(out.logits(0, 0, 0, 0) == 0.0);
}

TEST_CASE("head dimension mismatch is rejected") {
  Rng rng(4);
  auto p = HeadParams<double>::init(10, 2, rng);
  TensorD pooled(1, 9, 1, 1);
  CHECK_THROWS_AS(headForward(pooled, p), std::invalid_argument);
}

TEST_CASE("head gradcheck at 1e-5") {
  auto report = checks::headCheck(5);
  INFO(report.render());
  CHECK(report.pass);
}

TEST_CASE("loss goes to zero with perfect predictions at margin 20") {
  const Index R = 3, K = 2;
  TensorD logits(R, K + 1, 1, 1), deltas(R, 4 * K, 1, 1);
  std::vector<RoiTarget> targets(R);
  targets[0].label = 1;
  targets[1].label = 2;
  targets[2].label = 0;
  for (Index i = 0; i < R; ++i) {
    logits(i, targets[i].label, 0, 0) = 20.0;  // huge margin for the truth
    if (targets[i].label > 0) {
      for (int d = 0; d < 4; ++d) {
        targets[i].deltas[d] = 0.37 * (d + 1);
        deltas(i, 4 * (targets[i].label - 1) + d, 0, 0) = targets[i].deltas[d];
      }
    }
  }
  auto res = detectionLoss(logits, deltas, targets);
  CHECK(res.loss >= 0.0);
  CHECK(res.loss <= 1e-6);
}

TEST_CASE("uniform logits cost ln(K+1) per RoI") {
  const Index R = 5, K = 3;
  TensorD logits(R, K + 1, 1, 1), deltas(R, 4 * K, 1, 1);
  std::vector<RoiTarget> targets(R);  // all background
  auto res = detectionLoss(logits, deltas, targets);
  CHECK(res.box_loss == 0.0);
  CHECK(relError(res.cls_loss, std::log(4.0)) <= 1e-12);
}

TEST_CASE("background RoIs contribute no regression loss") {
  Rng rng(6);
  const Index R = 4, K = 2;
  auto logits = randTensor<double>(rng, R, K + 1, 1, 1);
  auto deltas = randTensor<double>(rng, R, 4 * K, 1, 1);
  std::vector<RoiTarget> targets(R);  // labels all 0
  auto res = detectionLoss(logits, deltas, targets);
  CHECK(res.box_loss == 0.0);
  for (Index i = 0; i < res.grad_deltas.size(); ++i)
    CHECK(res.grad_deltas.data()[i] == 0.0);
}

TEST_CASE("empty RoI batch is rejected") {
  TensorD logits(1, 3, 1, 1), deltas(1, 8, 1, 1);
  CHECK_THROWS_AS(detectionLoss(logits, deltas, std::vector<RoiTarget>{}),
                  std::invalid_argument);
}

TEST_CASE("loss gradcheck over random batches") {
  auto report = finiteDiffCheckWithRetry(
      [](std::uint64_t s) { return checks::lossCheck(s); }, 11);
  INFO(report.render());
  CHECK(report.pass);
}

TEST_CASE("loss is finite and non-negative on random batches") {
  Rng rng(13);
  for (int trial = 0; trial < 50; ++trial) {
    const Index R = rng.uniformInt(1, 6), K = rng.uniformInt(1, 4);
    auto logits = randTensor<double>(rng, R, K + 1, 1, 1, 3.0);
    auto deltas = randTensor<double>(rng, R, 4 * K, 1, 1, 2.0);
    std::vector<RoiTarget> targets(R);
    for (Index i = 0; i < R; ++i) {
      targets[i].label = static_cast<int>(rng.uniformInt(0, K));
      for (int d = 0; d < 4; ++d) targets[i].deltas[d] = rng.normal();
    }
    auto res = detectionLoss(logits, deltas, targets);
    CHECK(std::isfinite(res.loss));
    CHECK(res.loss >= 0.0);
  }
}
