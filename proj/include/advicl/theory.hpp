#pragma once

#include <cmath>
#include <tuple>

#include "advicl/errors.hpp"
#include "advicl/linalg.hpp"
#include "advicl/lsa.hpp"
#include "advicl/surrogate.hpp"

namespace advicl {

struct ClosedFormSolution {
  Mat product;
  double w22 = 0.0;
  Mat W11;
  RegimeConstants regime;

  RestrictedParams restricted() const { return {static_cast<int>(W11.rows()), w22, W11}; }
};

/// Converged surrogate-AT parameters: w22 W11 = A^-1 Lambda, split so that
/// w22 = ||W11||_F.
inline ClosedFormSolution closed_form_solution(const RegimeConstants& rc) {
  Eigen::SelfAdjointEigenSolver<Mat> es(rc.A);
  if (es.info() != Eigen::Success || !(es.eigenvalues().minCoeff() > 0.0))
    throw SingularRegime("Gamma Lambda + eps^2 psi I is not positive definite");
  const Mat& Q = es.eigenvectors();
  const Mat A_inv = Q * es.eigenvalues().cwiseInverse().asDiagonal() * Q.transpose();
  ClosedFormSolution s;
  s.regime = rc;
  s.product = A_inv * rc.lambda();
  s.product = 0.5 * (s.product + s.product.transpose());
  s.w22 = std::sqrt(s.product.norm());
  s.W11 = s.product / s.w22;
  return s;
}

inline void check_shared_regime(const RegimeConstants& a, const RegimeConstants& b) {
  if (a.N != b.N || a.d() != b.d() || (a.lambda() - b.lambda()).norm() != 0.0 || a.eps != b.eps)
    throw PreconditionViolated("train and test regimes must share N, eps and the covariance");
}

/// 2 Tr[L^3 A_test A_train^-2 + L].
inline double robust_bound(const RegimeConstants& rc_train, const RegimeConstants& rc_test) {
  check_shared_regime(rc_train, rc_test);
  const Mat& lam = rc_train.lambda();
  const Mat inv = rc_train.A.inverse();
  return 2.0 * (lam * lam * lam * rc_test.A * inv * inv + lam).trace();
}

/// Raw order terms (d, d^2/N, N^2 M_test^2 / M_train^4).
inline std::tuple<double, double, double> corollary_terms(const RegimeConstants& rc_train,
                                                          const RegimeConstants& rc_test) {
  check_shared_regime(rc_train, rc_test);
  if (rc_train.M == 0) throw DivisionByZero("corollary terms need M_train >= 1");
  const double d = rc_train.d();
  const double n = rc_train.N;
  const double mte = rc_test.M;
  const double mtr = rc_train.M;
  return {d, d * d / n, n * n * mte * mte / (mtr * mtr * mtr * mtr)};
}

/// True when the regime sits outside M <= 4N or eps in [0.5 sqrt(d), 2 sqrt(d)].
inline bool violates_length_assumption(int d, int N, int M, double eps) {
  const double sd = std::sqrt(static_cast<double>(d));
  return M > 4 * N || eps < 0.5 * sd || eps > 2.0 * sd;
}

}  // namespace advicl
