#include "doctest.h"

#include <map>

#include "mlkp/roi.hpp"
#include "test_util.hpp"

using namespace mlkp;
using namespace mlkp::testutil;

namespace {

// Exhaustive per-cell reference: recomputes every pooled cell's window with
// the same quantization arithmetic but scans the whole window max directly.
double referenceCellMax(const TensorD& G, const RoI& roi, Index pool_h,
                        Index pool_w, Index c, Index i, Index j) {
  const RoI r = clipRoI(roi, G.h(), G.w());
  const Index ys = static_cast<Index>(std::floor(r.y0));
  const Index xs = static_cast<Index>(std::floor(r.x0));
  const Index H = std::max<Index>(static_cast<Index>(std::floor(r.y1)) - ys + 1, 1);
  const Index W = std::max<Index>(static_cast<Index>(std::floor(r.x1)) - xs + 1, 1);
  Index h0 = ys + (i * H) / pool_h;
  Index h1 = ys + ((i + 1) * H + pool_h - 1) / pool_h - 1;
  h0 = std::clamp<Index>(h0, 0, G.h() - 1);
  h1 = std::clamp<Index>(std::max(h1, h0), 0, G.h() - 1);
  Index w0 = xs + (j * W) / pool_w;
  Index w1 = xs + ((j + 1) * W + pool_w - 1) / pool_w - 1;
  w0 = std::clamp<Index>(w0, 0, G.w() - 1);
  w1 = std::clamp<Index>(std::max(w1, w0), 0, G.w() - 1);
  double best = -std::numeric_limits<double>::infinity();
  for (Index y = h0; y <= h1; ++y)
    for (Index x = w0; x <= w1; ++x)
      best = std::max(best, G(roi.batch_index, c, y, x));
  return best;
}

}  // namespace

TEST_CASE("single cell, full-cover RoI, 1x1 pool") {
  auto G = TensorD::from(1, 1, 1, 1, {3.25});
  std::vector<RoI> rois = {{0, 0, 0, 0, 0}};
  auto pooled = maxRoiPool(G, rois, 1, 1);
  CHECK(pooled(0, 0, 0, 0) == 3.25);
}

TEST_CASE("4x4 map, whole-map RoI, 2x2 pool gives quadrant maxima") {
  TensorD G(1, 1, 4, 4);
  for (Index i = 0; i < 16; ++i) G.data()[i] = static_cast<double>(i);
  std::vector<RoI> rois = {{0, 0, 0, 3, 3}};
  auto pooled = maxRoiPool(G, rois, 2, 2);
  CHECK(pooled(0, 0, 0, 0) == 5.0);
  CHECK(pooled(0, 0, 0, 1) == 7.0);
  CHECK(pooled(0, 0, 1, 0) == 13.0);
  CHECK(pooled(0, 0, 1, 1) == 15.0);
}

TEST_CASE("random maps and RoIs equal the exhaustive per-cell oracle") {
  Rng rng(99);
  for (int trial = 0; trial < 200; ++trial) {
    const Index n = rng.uniformInt(1, 2), c = rng.uniformInt(1, 4);
    const Index h = rng.uniformInt(1, 10), w = rng.uniformInt(1, 10);
    auto G = randTensor<double>(rng, n, c, h, w);
    RoI roi;
    roi.batch_index = rng.uniformInt(0, n - 1);
    roi.x0 = rng.uniform(-1.0, w * 1.0);
    roi.y0 = rng.uniform(-1.0, h * 1.0);
    roi.x1 = roi.x0 + rng.uniform(0.0, w * 1.0);
    roi.y1 = roi.y0 + rng.uniform(0.0, h * 1.0);
    const Index ph = rng.uniformInt(1, 5), pw = rng.uniformInt(1, 5);
    auto pooled = maxRoiPool(G, {roi}, ph, pw);
    for (Index cc = 0; cc < c; ++cc)
      for (Index i = 0; i < ph; ++i)
        for (Index j = 0; j < pw; ++j)
          CHECK(pooled(0, cc, i, j) ==
                referenceCellMax(G, roi, ph, pw, cc, i, j));
  }
}

TEST_CASE("degenerate zero-area RoI pools the single nearest cell") {
  Rng rng(7);
  auto G = randTensor<double>(rng, 1, 2, 5, 5);
  RoI roi{0, 2.7, 3.4, 2.7, 3.4};
  auto pooled = maxRoiPool(G, {roi}, 3, 3);
  for (Index c = 0; c < 2; ++c)
    for (Index i = 0; i < 3; ++i)
      for (Index j = 0; j < 3; ++j)
        CHECK(pooled(0, c, i, j) == G(0, c, 3, 2));
}

TEST_CASE("out-of-range batch index is rejected") {
  TensorD G(1, 1, 4, 4);
  std::vector<RoI> rois = {{2, 0, 0, 1, 1}};
  CHECK_THROWS_AS(maxRoiPool(G, rois, 2, 2), std::invalid_argument);
}

TEST_CASE("backward routes each gradient to exactly its argmax") {
  Rng rng(21);
  auto G = randTensor<double>(rng, 2, 3, 6, 6);
  std::vector<RoI> rois = {{0, 0.5, 1.0, 4.2, 5.0}, {1, 2.0, 0.0, 5.0, 3.5}};
  std::vector<Index> argmax;
  auto pooled = maxRoiPool(G, rois, 2, 2, &argmax);
  auto grad_pooled = randTensor<double>(rng, 2, 3, 2, 2);
  auto grad_G =
      maxRoiPoolBackward(grad_pooled, argmax, G.n(), G.c(), G.h(), G.w());

  // total mass is conserved
  CHECK(relError(grad_G.array().sum(), grad_pooled.array().sum()) <= 1e-12);
  // nonzero entries only at argmax locations
  std::vector<bool> is_argmax(G.size(), false);
  for (Index a : argmax) is_argmax[a] = true;
  for (Index i = 0; i < grad_G.size(); ++i)
    if (!is_argmax[i]) CHECK(grad_G.data()[i] == 0.0);
  // when argmaxes are distinct, each target holds exactly its routed grad
  std::map<Index, double> expect;
  for (Index i = 0; i < static_cast<Index>(argmax.size()); ++i)
    expect[argmax[i]] += grad_pooled.data()[i];
  for (const auto& [idx, v] : expect)
    CHECK(relError(grad_G.data()[idx], v) <= 1e-12);
}

TEST_CASE("location retention: values outside the RoI window cannot leak in") {
  Rng rng(33);
  for (int trial = 0; trial < 100; ++trial) {
    const Index h = 8, w = 8;
    auto G = randTensor<double>(rng, 1, 3, h, w);
    RoI roi;
    roi.batch_index = 0;
    roi.x0 = rng.uniformInt(0, 5);
    roi.y0 = rng.uniformInt(0, 5);
    roi.x1 = roi.x0 + rng.uniformInt(0, static_cast<std::int64_t>(7 - roi.x0));
    roi.y1 = roi.y0 + rng.uniformInt(0, static_cast<std::int64_t>(7 - roi.y0));
    auto pooled = maxRoiPool(G, {roi}, 2, 2);

    // perturb everything strictly outside the (clipped, floored) window
    auto G2 = G;
    for (Index c = 0; c < 3; ++c)
      for (Index y = 0; y < h; ++y)
        for (Index x = 0; x < w; ++x)
          if (y < static_cast<Index>(roi.y0) || y > static_cast<Index>(roi.y1) ||
              x < static_cast<Index>(roi.x0) || x > static_cast<Index>(roi.x1))
            G2(0, c, y, x) += rng.normal() * 10.0;
    auto pooled2 = maxRoiPool(G2, {roi}, 2, 2);
    CHECK(bitwiseEqual(pooled, pooled2));
  }
}
