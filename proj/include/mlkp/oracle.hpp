#ifndef MLKP_ORACLE_HPP
#define MLKP_ORACLE_HPP

#include "mlkp/mlkp_block.hpp"

// Brute-force reference evaluations. Everything here is written as explicit
// nested loops over tensor entries on purpose: these functions must not share
// any computation path with the im2col/GEMM convolution code they verify.

namespace mlkp {

// Direct per-pixel evaluation of z^{r,d} = prod_s (<u_s^{r,d}, x> + b_s^d).
// Desk-scale only; oversized instances are rejected rather than ground
// through.
template <typename Scalar>
Tensor<Scalar> kernelOracle(const Tensor<Scalar>& X,
                            const MLKPParams<Scalar>& params, int r) {
  MLKP_CHECK(r >= 2 && r <= 3, "kernelOracle supports orders 2..3, got " << r);
  const auto& factors = params.factors(r);
  const Index D = factors[0].cOut();
  MLKP_CHECK(X.c() <= 32 && D <= 64 && X.h() * X.w() <= 64,
             "kernelOracle instance too large: c=" << X.c() << " D=" << D
                                                   << " hw=" << X.h() * X.w());
  for (const auto& f : factors) {
    MLKP_CHECK(f.kh() == 1 && f.kw() == 1 && f.stride == 1 && f.padding == 0,
               "factor convolutions must be 1x1, stride 1, pad 0");
    MLKP_CHECK(f.cOut() == D, "factor ranks disagree across slots");
    MLKP_CHECK(f.cIn() == X.c(), "factor expects " << f.cIn()
                                                   << " channels, X has "
                                                   << X.c());
  }

  Tensor<Scalar> z(X.n(), D, X.h(), X.w());
  for (Index n = 0; n < X.n(); ++n)
    for (Index d = 0; d < D; ++d)
      for (Index i = 0; i < X.h(); ++i)
        for (Index j = 0; j < X.w(); ++j) {
          Scalar prod = 1;
          for (int s = 0; s < r; ++s) {
            Scalar dot = factors[s].b[d];
            for (Index c = 0; c < X.c(); ++c)
              dot += factors[s].w(d, c, 0, 0) * X(n, c, i, j);
            prod *= dot;
          }
          z(n, d, i, j) = prod;
        }
  return z;
}

// Rank-1 factor set of a polynomial predictor on one descriptor x: the
// first-order weight w1 plus, per order r = 2..R, the combination weights
// a^r and factor vectors u_s^{r,d} (columns of u[r-2][s]).
struct PredictorFactors {
  Eigen::VectorXd w1;                            // c
  std::vector<Eigen::VectorXd> a;                // [r-2] -> D_r
  std::vector<std::vector<Eigen::MatrixXd>> u;   // [r-2][s] -> (c, D_r)
};

struct PredictorPair {
  double explicit_tensor = 0.0;  // full order-r weight tensors, term by term
  double factored = 0.0;         // product-of-inner-products form
};

// Evaluates the same predictor two algebraically equal ways: once by
// materializing each order-r weight tensor W^r = sum_d a^{r,d} u_1 (x) ... (x) u_r
// and summing W^r_{k1..kr} x_{k1} ... x_{kr} over all multi-indices, and once
// through the factored form sum_d a^{r,d} prod_s <u_s^{r,d}, x>.
inline PredictorPair predictorOracle(const Eigen::VectorXd& x,
                                     const PredictorFactors& f) {
  const Index c = x.size();
  MLKP_CHECK(c >= 1 && c <= 8,
             "predictorOracle supports c <= 8 (explicit tensor is c^r), got "
                 << c);
  MLKP_CHECK(f.a.size() == f.u.size(), "factor set malformed");
  MLKP_CHECK(f.a.size() <= 2, "predictorOracle supports orders up to 3");
  MLKP_CHECK(f.w1.size() == c, "w1 length " << f.w1.size() << " != c " << c);

  PredictorPair out;
  out.explicit_tensor = f.w1.dot(x);
  out.factored = f.w1.dot(x);

  for (size_t oi = 0; oi < f.a.size(); ++oi) {
    const int r = static_cast<int>(oi) + 2;
    const Index D = f.a[oi].size();
    MLKP_CHECK(f.u[oi].size() == static_cast<size_t>(r),
               "order " << r << " needs " << r << " factor matrices");
    for (const auto& us : f.u[oi])
      MLKP_CHECK(us.rows() == c && us.cols() == D,
                 "factor matrix must be (c, D)");

    // Explicit route: materialize W^r over all c^r multi-indices.
    Index entries = 1;
    for (int s = 0; s < r; ++s) entries *= c;
    Eigen::VectorXd W = Eigen::VectorXd::Zero(entries);
    std::vector<Index> k(r, 0);
    for (Index flat = 0; flat < entries; ++flat) {
      double wv = 0.0;
      for (Index d = 0; d < D; ++d) {
        double term = f.a[oi][d];
        for (int s = 0; s < r; ++s) term *= f.u[oi][s](k[s], d);
        wv += term;
      }
      W[flat] = wv;
      for (int s = r - 1; s >= 0; --s) {  // odometer over (k_1, ..., k_r)
        if (++k[s] < c) break;
        k[s] = 0;
      }
    }
    std::fill(k.begin(), k.end(), 0);
    for (Index flat = 0; flat < entries; ++flat) {
      double xs = 1.0;
      for (int s = 0; s < r; ++s) xs *= x[k[s]];
      out.explicit_tensor += W[flat] * xs;
      for (int s = r - 1; s >= 0; --s) {
        if (++k[s] < c) break;
        k[s] = 0;
      }
    }

    // Factored route.
    for (Index d = 0; d < D; ++d) {
      double term = f.a[oi][d];
      for (int s = 0; s < r; ++s) term *= f.u[oi][s].col(d).dot(x);
      out.factored += term;
    }
  }
  return out;
}

}  // namespace mlkp

#endif  // MLKP_ORACLE_HPP
