#include "doctest.h"

#include "mlkp/oracle.hpp"
#include "test_util.hpp"

using namespace mlkp;
using namespace mlkp::testutil;

namespace {

MLKPParams<double> randParams(Rng& rng, const MLKPConfig& cfg, Index c_in) {
  return MLKPParams<double>::init(cfg, c_in, rng);
}

PredictorFactors randFactors(Rng& rng, Index c, int R, Index D) {
  PredictorFactors f;
  f.w1 = Eigen::VectorXd::Zero(c);
  for (Index i = 0; i < c; ++i) f.w1[i] = rng.normal();
  for (int r = 2; r <= R; ++r) {
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
  return f;
}

}  // namespace

TEST_CASE("kernel oracle: hand inner products") {
  // x = (1,2,3), u_1 = (1,1,1), u_2 = (1,0,-1) -> z = 6 * (-2) = -12
  auto X = TensorD::from(1, 3, 1, 1, {1, 2, 3});
  MLKPConfig cfg;
  cfg.max_order = 2;
  cfg.rank_per_order[2] = 1;
  MLKPParams<double> p;
  p.factor_convs.resize(1);
  auto u1 = makeConv<double>(1, 3, 1);
  u1.w(0, 0, 0, 0) = 1;
  u1.w(0, 1, 0, 0) = 1;
  u1.w(0, 2, 0, 0) = 1;
  auto u2 = makeConv<double>(1, 3, 1);
  u2.w(0, 0, 0, 0) = 1;
  u2.w(0, 1, 0, 0) = 0;
  u2.w(0, 2, 0, 0) = -1;
  p.factor_convs[0] = {u1, u2};
  auto z = kernelOracle(X, p, 2);
  CHECK(z(0, 0, 0, 0) == doctest::Approx(-12.0).epsilon(1e-14));
}

TEST_CASE("kernel oracle reproduces the basis-factor and cube cases") {
  {
    auto X = TensorD::from(1, 2, 1, 1, {1, 2});
    MLKPParams<double> p;
    p.factor_convs.resize(1);
    auto u1 = makeConv<double>(1, 2, 1);
    u1.w(0, 0, 0, 0) = 1;
    auto u2 = makeConv<double>(1, 2, 1);
    u2.w(0, 1, 0, 0) = 1;
    p.factor_convs[0] = {u1, u2};
    CHECK(kernelOracle(X, p, 2)(0, 0, 0, 0) == doctest::Approx(2.0));
  }
  {
    const double xv = 1.7;
    auto X = TensorD::from(1, 1, 1, 1, {xv});
    MLKPParams<double> p;
    p.factor_convs.resize(2);
    auto u = makeConv<double>(1, 1, 1);
    u.w(0, 0, 0, 0) = 1;
    p.factor_convs[0] = {u, u};
    p.factor_convs[1] = {u, u, u};
    CHECK(kernelOracle(X, p, 3)(0, 0, 0, 0) ==
          doctest::Approx(xv * xv * xv).epsilon(1e-14));
  }
}

TEST_CASE("kernel oracle rejects oversized instances") {
  Rng rng(2);
  MLKPConfig cfg;
  cfg.max_order = 2;
  cfg.rank_per_order[2] = 4;
  auto p = randParams(rng, cfg, 40);  // c too large
  auto X = randTensor<double>(rng, 1, 40, 2, 2);
  CHECK_THROWS_AS(kernelOracle(X, p, 2), std::invalid_argument);

  MLKPConfig big;
  big.max_order = 2;
  big.rank_per_order[2] = 128;  // D too large
  auto pb = randParams(rng, big, 4);
  auto Xb = randTensor<double>(rng, 1, 4, 2, 2);
  CHECK_THROWS_AS(kernelOracle(Xb, pb, 2), std::invalid_argument);
}

TEST_CASE("predictor oracle: c=1 scalar polynomial") {
  Rng rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    const double x = rng.normal();
    PredictorFactors f = randFactors(rng, 1, 3, 3);
    Eigen::VectorXd xv(1);
    xv[0] = x;
    auto pair = predictorOracle(xv, f);
    // both routes reduce to w1*x + sum_r sum_d a (u1...ur) x^r
    double expect = f.w1[0] * x;
    for (size_t oi = 0; oi < f.a.size(); ++oi) {
      const int r = static_cast<int>(oi) + 2;
      for (Index d = 0; d < f.a[oi].size(); ++d) {
        double term = f.a[oi][d];
        for (int s = 0; s < r; ++s) term *= f.u[oi][s](0, d);
        expect += term * std::pow(x, r);
      }
    }
    CHECK(relError(pair.explicit_tensor, expect) <= 1e-12);
    CHECK(relError(pair.factored, expect) <= 1e-12);
  }
}

TEST_CASE("predictor oracle: zero combination weights leave only <w1, x>") {
  Rng rng(11);
  auto f = randFactors(rng, 5, 3, 4);
  for (auto& a : f.a) a.setZero();
  Eigen::VectorXd x(5);
  for (Index i = 0; i < 5; ++i) x[i] = rng.normal();
  auto pair = predictorOracle(x, f);
  CHECK(relError(pair.explicit_tensor, f.w1.dot(x)) <= 1e-12);
  CHECK(relError(pair.factored, f.w1.dot(x)) <= 1e-12);
}

TEST_CASE("explicit tensor and factored form agree on 100 random draws") {
  Rng rng(13);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    auto f = randFactors(rng, 5, 3, 4);
    Eigen::VectorXd x(5);
    for (Index i = 0; i < 5; ++i) x[i] = rng.normal();
    auto pair = predictorOracle(x, f);
    worst = std::max(worst, relError(pair.explicit_tensor, pair.factored));
  }
  CHECK(worst <= 1e-10);
}

TEST_CASE("predictor oracle rejects descriptors above the size limit") {
  Rng rng(17);
  auto f = randFactors(rng, 9, 2, 2);
  Eigen::VectorXd x = Eigen::VectorXd::Ones(9);
  CHECK_THROWS_AS(predictorOracle(x, f), std::invalid_argument);
}
