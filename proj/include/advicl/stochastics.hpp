#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "advicl/errors.hpp"
#include "advicl/linalg.hpp"

namespace advicl {

namespace detail {

inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace detail

/// Immutable descriptor of a random stream. Engines are derived on demand,
/// so identical (seed, stream_id) pairs always replay the same sequence no
/// matter which worker consumes them.
struct RngStream {
  std::uint64_t seed = 0;
  std::uint64_t stream_id = 0;

  using Engine = std::mt19937_64;

  Engine engine() const {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream_id),
                      static_cast<std::uint32_t>(stream_id >> 32)};
    return Engine(seq);
  }

  RngStream substream(std::uint64_t index) const {
    return {seed, detail::mix64(detail::mix64(stream_id) ^ (index * 0xd1b54a32d192ed03ULL + 1))};
  }

  bool operator==(const RngStream&) const = default;
};

enum class CovKind { identity, diagonal, dense };

inline std::string to_string(CovKind k) {
  switch (k) {
    case CovKind::identity: return "identity";
    case CovKind::diagonal: return "diagonal";
    case CovKind::dense: return "dense";
  }
  return "?";
}

inline CovKind cov_kind_from_string(const std::string& s) {
  if (s == "identity") return CovKind::identity;
  if (s == "diagonal") return CovKind::diagonal;
  if (s == "dense") return CovKind::dense;
  throw ConfigError("unknown covariance kind '" + s + "'");
}

struct CovarianceSpec {
  CovKind kind = CovKind::identity;
  Mat lambda;
  Mat factor;  // lower triangular, factor * factor^T == lambda

  int dim() const { return static_cast<int>(lambda.rows()); }
};

/// Builds a covariance. `params` holds the diagonal values (diagonal) or the
/// row-major d*d entries (dense); it is ignored for identity.
inline CovarianceSpec make_covariance(CovKind kind, int d, std::span<const double> params = {},
                                      double jitter = 0.0) {
  if (d < 1) throw DimensionMismatch("covariance dimension must be >= 1");
  CovarianceSpec cov;
  cov.kind = kind;
  switch (kind) {
    case CovKind::identity:
      cov.lambda = Mat::Identity(d, d);
      cov.factor = Mat::Identity(d, d);
      return cov;
    case CovKind::diagonal: {
      if (static_cast<int>(params.size()) != d)
        throw DimensionMismatch("diagonal covariance needs d values");
      cov.lambda = Mat::Zero(d, d);
      cov.factor = Mat::Zero(d, d);
      for (int i = 0; i < d; ++i) {
        if (!(params[i] > 0.0)) throw NotPositiveDefinite("diagonal covariance values must be > 0");
        cov.lambda(i, i) = params[i];
        cov.factor(i, i) = std::sqrt(params[i]);
      }
      return cov;
    }
    case CovKind::dense: {
      if (static_cast<int>(params.size()) != d * d)
        throw DimensionMismatch("dense covariance needs d*d values");
      Mat lam(d, d);
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) lam(i, j) = params[i * d + j];
      if ((lam - lam.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, lam.cwiseAbs().maxCoeff()))
        throw NotPositiveDefinite("dense covariance must be symmetric");
      lam = 0.5 * (lam + lam.transpose());
      Eigen::LLT<Mat> llt(lam);
      if (llt.info() != Eigen::Success && jitter > 0.0) {
        lam += std::min(jitter, 1e-10) * Mat::Identity(d, d);
        llt.compute(lam);
      }
      if (llt.info() != Eigen::Success) throw NotPositiveDefinite("covariance is not positive definite");
      Eigen::SelfAdjointEigenSolver<Mat> es(lam, Eigen::EigenvaluesOnly);
      if (!(es.eigenvalues().minCoeff() > 0.0))
        throw NotPositiveDefinite("covariance has a non-positive eigenvalue");
      cov.lambda = lam;
      cov.factor = llt.matrixL();
      return cov;
    }
  }
  throw ConfigError("unreachable covariance kind");
}

inline Vec standard_normal_vector(RngStream::Engine& eng, int d) {
  std::normal_distribution<double> nd;
  Vec z(d);
  for (int i = 0; i < d; ++i) z(i) = nd(eng);
  return z;
}

inline Vec sample_gaussian_vector(RngStream::Engine& eng, const CovarianceSpec& cov) {
  return cov.factor * standard_normal_vector(eng, cov.dim());
}

inline Vec sample_gaussian_vector(const RngStream& stream, const CovarianceSpec& cov) {
  auto eng = stream.engine();
  return sample_gaussian_vector(eng, cov);
}

/// Welford accumulator for a sample mean and its standard error.
class RunningMean {
 public:
  void add(double x) {
    ++n_;
    const double delta = x - mean_;
    mean_ += delta / static_cast<double>(n_);
    m2_ += delta * (x - mean_);
  }
  std::size_t count() const { return n_; }
  double mean() const { return mean_; }
  double variance() const { return n_ > 1 ? m2_ / static_cast<double>(n_ - 1) : 0.0; }
  double stderr_of_mean() const {
    return n_ > 1 ? std::sqrt(variance() / static_cast<double>(n_)) : 0.0;
  }

 private:
  std::size_t n_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

/// Entrywise Monte-Carlo mean and standard error of a matrix-valued sample.
class RunningMatrixMean {
 public:
  RunningMatrixMean(int rows, int cols) : mean_(Mat::Zero(rows, cols)), m2_(Mat::Zero(rows, cols)) {}
  void add(const Mat& x) {
    ++n_;
    Mat delta = x - mean_;
    mean_ += delta / static_cast<double>(n_);
    m2_ += delta.cwiseProduct(x - mean_);
  }
  std::size_t count() const { return n_; }
  const Mat& mean() const { return mean_; }
  Mat stderr_of_mean() const {
    if (n_ < 2) return Mat::Zero(mean_.rows(), mean_.cols());
    const double n = static_cast<double>(n_);
    return (m2_ / (n - 1.0) / n).cwiseSqrt();
  }

 private:
  std::size_t n_ = 0;
  Mat mean_;
  Mat m2_;
};

}  // namespace advicl
