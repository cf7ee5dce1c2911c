#pragma once

#include "advicl/errors.hpp"
#include "advicl/linalg.hpp"
#include "advicl/lsa.hpp"
#include "advicl/stochastics.hpp"

namespace advicl {

using RowVec = Eigen::RowVectorXd;

struct TaskSample {
  Vec w_tau;
  Mat X;
  RowVec Y;
  Mat X_sfx;
  RowVec Y_sfx;
  Vec x_q;
  double y_q = 0.0;

  int d() const { return static_cast<int>(w_tau.size()); }
  int N() const { return static_cast<int>(X.cols()); }
  int M() const { return static_cast<int>(X_sfx.cols()); }
};

struct Perturbation {
  Mat Delta;
  double eps = 0.0;
};

inline TaskSample sample_task(const RngStream& stream, const CovarianceSpec& cov, int N, int M) {
  if (N < 1 || M < 0) throw PreconditionViolated("need N >= 1 and M >= 0");
  const int d = cov.dim();
  auto eng = stream.engine();
  TaskSample t;
  t.w_tau = standard_normal_vector(eng, d);
  t.X.resize(d, N);
  for (int i = 0; i < N; ++i) t.X.col(i) = sample_gaussian_vector(eng, cov);
  t.X_sfx.resize(d, M);
  for (int i = 0; i < M; ++i) t.X_sfx.col(i) = sample_gaussian_vector(eng, cov);
  t.x_q = sample_gaussian_vector(eng, cov);
  t.Y = t.w_tau.transpose() * t.X;
  t.Y_sfx = t.w_tau.transpose() * t.X_sfx;
  t.y_q = t.w_tau.dot(t.x_q);
  return t;
}

inline PromptEmbedding assemble_clean(const TaskSample& t) {
  const int d = t.d(), N = t.N();
  PromptEmbedding pe;
  pe.ctx = N;
  pe.E = Mat::Zero(d + 1, N + 1);
  pe.E.topLeftCorner(d, N) = t.X;
  pe.E.block(d, 0, 1, N) = t.Y;
  pe.E.col(N).head(d) = t.x_q;
  return pe;
}

inline PromptEmbedding assemble_adversarial(const TaskSample& t, const Perturbation& pert) {
  const int d = t.d(), N = t.N(), M = t.M();
  if (pert.Delta.rows() != d || pert.Delta.cols() != M)
    throw DimensionMismatch("perturbation must be d x M");
  PromptEmbedding pe;
  pe.ctx = N + M;
  pe.E = Mat::Zero(d + 1, N + M + 1);
  pe.E.topLeftCorner(d, N) = t.X;
  pe.E.block(d, 0, 1, N) = t.Y;
  pe.E.block(0, N, d, M) = t.X_sfx + pert.Delta;
  pe.E.block(d, N, 1, M) = t.Y_sfx;
  pe.E.col(N + M).head(d) = t.x_q;
  return pe;
}

/// Clean prompt with the unperturbed suffix appended.
inline PromptEmbedding assemble_suffixed(const TaskSample& t) {
  return assemble_adversarial(t, {Mat::Zero(t.d(), t.M()), 0.0});
}

inline Perturbation project_perturbation(const Mat& Delta, double eps) {
  if (eps < 0.0) throw PreconditionViolated("eps must be >= 0");
  Perturbation p{Delta, eps};
  for (Eigen::Index j = 0; j < Delta.cols(); ++j) {
    const double n = Delta.col(j).norm();
    if (n > eps) p.Delta.col(j) *= (n > 0.0 ? eps / n : 0.0);
  }
  return p;
}

}  // namespace advicl
