#pragma once

#include <cmath>
#include <string>

#include <json.hpp>

#include "advicl/errors.hpp"
#include "advicl/linalg.hpp"

namespace advicl {

/// Block views of a (d+1)x(d+1) matrix partitioned as [[W11, w12], [w21, w22]].
/// Every view writes through to the underlying matrix.
template <typename M>
struct Blocks {
  M& m;
  int d;
  auto W11() const { return m.topLeftCorner(d, d); }
  auto w12() const { return m.col(d).head(d); }
  auto w21() const { return m.row(d).head(d); }
  auto& w22() const { return m(d, d); }
};

struct LsaParams {
  int d = 0;
  Mat WV;
  Mat WKQ;

  LsaParams() = default;
  explicit LsaParams(int dim) : d(dim), WV(Mat::Zero(dim + 1, dim + 1)), WKQ(Mat::Zero(dim + 1, dim + 1)) {
    if (dim < 1) throw DimensionMismatch("d must be >= 1");
  }

  Blocks<Mat> V() { return {WV, d}; }
  Blocks<const Mat> V() const { return {WV, d}; }
  Blocks<Mat> KQ() { return {WKQ, d}; }
  Blocks<const Mat> KQ() const { return {WKQ, d}; }

  void check() const {
    if (WV.rows() != d + 1 || WV.cols() != d + 1 || WKQ.rows() != d + 1 || WKQ.cols() != d + 1)
      throw DimensionMismatch("parameter matrices must be (d+1)x(d+1)");
  }
};

/// The class reachable from the symmetric initialization: only w22 of W^V and
/// W11 of W^KQ are nonzero.
struct RestrictedParams {
  int d = 0;
  double w22 = 0.0;
  Mat W11;

  Mat product() const { return w22 * W11; }
};

struct InitSpec {
  double sigma = 0.0;
  Mat theta;

  /// Throws InvalidInit unless ||theta theta^T||_F = 1 and theta * lambda != 0.
  void validate(const Mat& lambda) const {
    if (theta.rows() != lambda.rows() || theta.cols() != lambda.cols())
      throw DimensionMismatch("theta must be d x d");
    if (std::abs((theta * theta.transpose()).norm() - 1.0) > 1e-9)
      throw InvalidInit("||Theta Theta^T||_F must equal 1");
    if ((theta * lambda).norm() <= 1e-12) throw InvalidInit("Theta Lambda must be nonzero");
    if (!(sigma > 0.0)) throw InvalidInit("sigma must be > 0");
  }
};

inline Mat default_theta(int d) {
  if (d < 1) throw DimensionMismatch("d must be >= 1");
  return std::pow(static_cast<double>(d), -0.25) * Mat::Identity(d, d);
}

inline LsaParams init_params(const InitSpec& spec, int d) {
  if (spec.theta.rows() != d || spec.theta.cols() != d) throw DimensionMismatch("theta must be d x d");
  const Mat tt = spec.theta * spec.theta.transpose();
  if (std::abs(tt.norm() - 1.0) > 1e-9) throw InvalidInit("||Theta Theta^T||_F must equal 1");
  LsaParams p(d);
  p.V().w22() = spec.sigma;
  p.KQ().W11() = spec.sigma * tt;
  return p;
}

inline LsaParams embed_restricted(const RestrictedParams& r) {
  LsaParams p(r.d);
  p.V().w22() = r.w22;
  p.KQ().W11() = r.W11;
  return p;
}

inline RestrictedParams extract_restricted(const LsaParams& p) {
  return {p.d, p.V().w22(), p.KQ().W11()};
}

/// Prompt embedding: demonstration columns followed by the query column (x_q; 0).
struct PromptEmbedding {
  Mat E;
  int ctx = 0;

  int d() const { return static_cast<int>(E.rows()) - 1; }
  auto query() const { return E.col(ctx).head(E.rows() - 1); }
};

/// Bottom-right entry of the LSA output:
/// (w21, w22) (E E^T / ctx) [W11; w21_kq] x_q.
inline double predict(const LsaParams& p, const PromptEmbedding& pe) {
  p.check();
  if (pe.E.rows() != p.d + 1 || pe.E.cols() != pe.ctx + 1 || pe.ctx < 1)
    throw DimensionMismatch("embedding shape does not match parameters");
  const Vec a = p.WV.row(p.d).transpose();
  const Vec b = p.WKQ.leftCols(p.d) * pe.query();
  const Vec u = pe.E.transpose() * a;
  const Vec v = pe.E.transpose() * b;
  return u.dot(v) / static_cast<double>(pe.ctx);
}

namespace detail {

inline nlohmann::json matrix_to_json(const Mat& m) {
  nlohmann::json arr = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) arr.push_back(m(i, j));
  return arr;
}

inline Mat matrix_from_json(const nlohmann::json& arr, int rows, int cols) {
  if (!arr.is_array() || static_cast<int>(arr.size()) != rows * cols)
    throw DimensionMismatch("matrix array has the wrong length");
  Mat m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = arr.at(i * cols + j).get<double>();
  return m;
}

}  // namespace detail

inline nlohmann::json to_json(const LsaParams& p) {
  return {{"d", p.d}, {"WV", detail::matrix_to_json(p.WV)}, {"WKQ", detail::matrix_to_json(p.WKQ)}};
}

inline LsaParams params_from_json(const nlohmann::json& j) {
  const int d = j.at("d").get<int>();
  LsaParams p(d);
  p.WV = detail::matrix_from_json(j.at("WV"), d + 1, d + 1);
  p.WKQ = detail::matrix_from_json(j.at("WKQ"), d + 1, d + 1);
  return p;
}

}  // namespace advicl
