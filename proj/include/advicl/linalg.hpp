#pragma once

#include <cmath>
#include <functional>

#include <Eigen/Dense>

#include "advicl/errors.hpp"

namespace advicl {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

/// Applies a scalar function to the spectrum of a symmetric matrix,
/// returning Q f(D) Q^T. All results for the same input commute.
inline Mat sym_apply(const Mat& s, const std::function<double(double)>& f) {
  Eigen::SelfAdjointEigenSolver<Mat> es(s);
  if (es.info() != Eigen::Success) throw NotPositiveDefinite("eigendecomposition failed");
  Vec mapped = es.eigenvalues().unaryExpr(f);
  return es.eigenvectors() * mapped.asDiagonal() * es.eigenvectors().transpose();
}

/// Symmetric power S^p of a positive-definite matrix (p may be fractional or negative).
inline Mat sym_pow(const Mat& s, double p) {
  return sym_apply(s, [p](double x) {
    if (x <= 0.0) throw NotPositiveDefinite("sym_pow of a matrix with non-positive eigenvalue");
    return std::pow(x, p);
  });
}

inline double spectral_norm(const Mat& a) {
  if (a.size() == 0) return 0.0;
  Eigen::JacobiSVD<Mat> svd(a);
  return svd.singularValues()(0);
}

inline double relative_frobenius_error(const Mat& actual, const Mat& expected) {
  const double denom = expected.norm();
  return denom > 0.0 ? (actual - expected).norm() / denom : actual.norm();
}

}  // namespace advicl
