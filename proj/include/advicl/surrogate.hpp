#pragma once

#include <cmath>
#include <cstddef>
#include <utility>
#include <vector>

#include "advicl/errors.hpp"
#include "advicl/linalg.hpp"
#include "advicl/lsa.hpp"
#include "advicl/parallel.hpp"
#include "advicl/stochastics.hpp"
#include "advicl/task.hpp"

namespace advicl {

inline std::pair<Mat, double> gamma_psi(int N, int M, const CovarianceSpec& cov) {
  if (N < 1 || M < 0) throw PreconditionViolated("need N >= 1 and M >= 0");
  const double n = static_cast<double>(N + M);
  const double tr = cov.lambda.trace();
  const int d = cov.dim();
  Mat gamma = ((n + 1.0) / n) * cov.lambda + (tr / n) * Mat::Identity(d, d);
  const double psi = static_cast<double>(M) * static_cast<double>(M) * tr / (n * n);
  return {gamma, psi};
}

/// Everything the analytic formulas need for one (N, M, eps, Lambda) regime.
/// Matrix functions of Lambda use its symmetric root, so they all commute.
struct RegimeConstants {
  int N = 1;
  int M = 0;
  double eps = 0.0;
  CovarianceSpec cov;
  Mat gamma;
  double psi = 0.0;
  Mat A;  // gamma * Lambda + eps^2 psi I
  Mat lam_half;
  Mat lam_3half;

  int d() const { return cov.dim(); }
  const Mat& lambda() const { return cov.lambda; }
};

inline RegimeConstants make_regime(int N, int M, double eps, const CovarianceSpec& cov) {
  if (eps < 0.0) throw PreconditionViolated("eps must be >= 0");
  RegimeConstants rc;
  rc.N = N;
  rc.M = M;
  rc.eps = eps;
  rc.cov = cov;
  std::tie(rc.gamma, rc.psi) = gamma_psi(N, M, cov);
  const int d = cov.dim();
  rc.A = rc.gamma * cov.lambda + eps * eps * rc.psi * Mat::Identity(d, d);
  rc.A = 0.5 * (rc.A + rc.A.transpose());
  rc.lam_half = sym_pow(cov.lambda, 0.5);
  rc.lam_3half = sym_pow(cov.lambda, 1.5);
  return rc;
}

inline double simplified_loss(const RestrictedParams& r, const RegimeConstants& rc) {
  const Mat G = r.w22 * r.W11 * rc.lam_half;
  return 2.0 * (rc.A * G * G.transpose()).trace() - 4.0 * (G * rc.lam_3half).trace() +
         2.0 * rc.lambda().trace();
}

struct SimplifiedGradient {
  double g_w22 = 0.0;
  Mat g_W11;

  double norm_sq() const { return g_w22 * g_w22 + g_W11.squaredNorm(); }
};

inline SimplifiedGradient simplified_gradient(const RestrictedParams& r, const RegimeConstants& rc) {
  const Mat& lam = rc.lambda();
  const Mat H = r.W11 * rc.lam_half;
  SimplifiedGradient g;
  g.g_W11 = 4.0 * r.w22 * r.w22 * rc.A * r.W11 * lam - 4.0 * r.w22 * lam * lam;
  g.g_w22 = 4.0 * r.w22 * (rc.A * H * H.transpose()).trace() - 4.0 * (H * rc.lam_3half).trace();
  return g;
}

/// Minimum of simplified_loss over the restricted class: 2 Tr(L) - 2 Tr(L^3 A^-1).
inline double minimizer_value(const RegimeConstants& rc) {
  const Mat& lam = rc.lambda();
  const Mat L3 = lam * lam * lam;
  return 2.0 * lam.trace() - 2.0 * (L3 * rc.A.inverse()).trace();
}

/// simplified_loss minus its minimum, written as 2 Tr[A D D^T] so it stays
/// accurate near the optimum.
inline double simplified_loss_gap(const RestrictedParams& r, const RegimeConstants& rc) {
  const Mat D = r.w22 * r.W11 * rc.lam_half - rc.A.ldlt().solve(rc.lam_3half);
  return 2.0 * (rc.A * D * D.transpose()).trace();
}

inline double sigma_threshold(const RegimeConstants& rc) {
  const double op = spectral_norm(rc.A * rc.lambda().inverse());
  return std::sqrt(2.0 / (static_cast<double>(rc.d()) * op));
}

struct NuMu {
  double nu = 0.0;
  double mu = 0.0;
  bool below_threshold = true;
};

inline NuMu nu_mu_constants(const InitSpec& spec, const RegimeConstants& rc) {
  const double d = static_cast<double>(rc.d());
  const Mat& lam = rc.lambda();
  const double s2 = spec.sigma * spec.sigma;
  const double op = spectral_norm(rc.A * lam.inverse());
  NuMu out;
  out.nu = s2 * (lam * spec.theta).squaredNorm() * (2.0 - d * s2 * op) / (2.0 * d * spectral_norm(lam * lam));
  out.mu = 8.0 * out.nu / (sym_pow(rc.A, -0.5).squaredNorm() * sym_pow(lam, -0.5).squaredNorm());
  out.below_threshold = spec.sigma < sigma_threshold(rc);
  return out;
}

struct SurrogateTerms {
  double l1 = 0.0, l2 = 0.0, l3 = 0.0, l4 = 0.0;
  double se = 0.0;

  double total() const { return l1 + l2 + l3 + l4; }
};

namespace detail {

struct SurrogateSample {
  double q1 = 0.0, q3 = 0.0, q4 = 0.0;
  Vec g_a;  // gradient with respect to the last row of W^V
  Mat g_B;  // gradient with respect to the first d columns of W^KQ
};

/// Per-task values of the three expectation terms and, optionally, their gradients.
inline SurrogateSample surrogate_sample(const LsaParams& p, const RegimeConstants& rc, const TaskSample& t,
                                        bool with_grad) {
  const int d = p.d;
  const double n = static_cast<double>(rc.N + rc.M);
  const double k = 2.0 * rc.eps * rc.eps * static_cast<double>(rc.M) / (n * n);
  const Vec a = p.WV.row(d).transpose();
  const Mat B = p.WKQ.leftCols(d);
  const Vec b = B * t.x_q;
  const Vec bx = b.head(d);
  const double w21sq = a.head(d).squaredNorm();

  const PromptEmbedding pe = assemble_suffixed(t);
  const Vec Sa = pe.E * (pe.E.transpose() * a) / n;
  const Vec Sb = pe.E * (pe.E.transpose() * b) / n;
  const double r = a.dot(Sb) - t.y_q;

  Mat Z(d + 1, t.M());
  Z.topRows(d) = t.X_sfx;
  Z.bottomRows(1) = t.Y_sfx;
  const Vec za = Z.transpose() * a;
  const Vec zb = Z.transpose() * b;
  const double s = bx.squaredNorm();

  SurrogateSample out;
  out.q1 = 2.0 * r * r;
  out.q3 = k * s * za.squaredNorm();
  out.q4 = k * w21sq * zb.squaredNorm();
  if (with_grad) {
    out.g_a = 4.0 * r * Sb + 2.0 * k * s * (Z * za);
    out.g_a.head(d) += 2.0 * k * zb.squaredNorm() * a.head(d);
    out.g_B = 4.0 * r * Sa * t.x_q.transpose() + 2.0 * k * w21sq * (Z * zb) * t.x_q.transpose();
    out.g_B.topRows(d) += 2.0 * k * za.squaredNorm() * bx * t.x_q.transpose();
  }
  return out;
}

inline double l2_term(const LsaParams& p, const RegimeConstants& rc) {
  const double n = static_cast<double>(rc.N + rc.M);
  const double m = static_cast<double>(rc.M);
  const double e2 = rc.eps * rc.eps;
  const Mat W11 = p.KQ().W11();
  return 2.0 * e2 * e2 * m * m / (n * n) * p.V().w21().squaredNorm() *
         (W11 * rc.lambda() * W11.transpose()).trace();
}

}  // namespace detail

/// Four-term surrogate: l2 analytically, l1, l3, l4 by Monte Carlo on tasks
/// drawn from stream.substream(i).
inline SurrogateTerms general_surrogate_mc(const LsaParams& p, const RegimeConstants& rc, int n_tasks,
                                           const RngStream& stream) {
  if (n_tasks < 2) throw PreconditionViolated("n_tasks must be >= 2");
  std::vector<detail::SurrogateSample> samples(static_cast<std::size_t>(n_tasks));
  parallel_for(samples.size(), [&](std::size_t i) {
    samples[i] = detail::surrogate_sample(p, rc, sample_task(stream.substream(i), rc.cov, rc.N, rc.M), false);
  });
  RunningMean m1, m3, m4, tot;
  for (const auto& s : samples) {
    m1.add(s.q1);
    m3.add(s.q3);
    m4.add(s.q4);
    tot.add(s.q1 + s.q3 + s.q4);
  }
  SurrogateTerms out;
  out.l1 = m1.mean();
  out.l2 = detail::l2_term(p, rc);
  out.l3 = m3.mean();
  out.l4 = m4.mean();
  out.se = tot.stderr_of_mean();
  return out;
}

struct SurrogateGradient {
  SurrogateTerms terms;
  LsaParams grad;
  LsaParams grad_se;  // entrywise Monte-Carlo standard error
};

inline SurrogateGradient general_surrogate_gradient_mc(const LsaParams& p, const RegimeConstants& rc,
                                                       int n_tasks, const RngStream& stream) {
  if (n_tasks < 2) throw PreconditionViolated("n_tasks must be >= 2");
  const int d = p.d;
  std::vector<detail::SurrogateSample> samples(static_cast<std::size_t>(n_tasks));
  parallel_for(samples.size(), [&](std::size_t i) {
    samples[i] = detail::surrogate_sample(p, rc, sample_task(stream.substream(i), rc.cov, rc.N, rc.M), true);
  });
  RunningMean m1, m3, m4, tot;
  RunningMatrixMean ga(d + 1, 1), gB(d + 1, d);
  for (const auto& s : samples) {
    m1.add(s.q1);
    m3.add(s.q3);
    m4.add(s.q4);
    tot.add(s.q1 + s.q3 + s.q4);
    ga.add(s.g_a);
    gB.add(s.g_B);
  }
  SurrogateGradient out{{}, LsaParams(d), LsaParams(d)};
  out.terms = {m1.mean(), detail::l2_term(p, rc), m3.mean(), m4.mean(), tot.stderr_of_mean()};

  out.grad.WV.row(d) = ga.mean().transpose();
  out.grad.WKQ.leftCols(d) = gB.mean();
  out.grad_se.WV.row(d) = ga.stderr_of_mean().transpose();
  out.grad_se.WKQ.leftCols(d) = gB.stderr_of_mean();

  const double n = static_cast<double>(rc.N + rc.M);
  const double m = static_cast<double>(rc.M);
  const double e2 = rc.eps * rc.eps;
  const double k2 = 2.0 * e2 * e2 * m * m / (n * n);
  const Mat W11 = p.KQ().W11();
  const Vec w21 = p.V().w21().transpose();
  out.grad.V().w21() += (2.0 * k2 * (W11 * rc.lambda() * W11.transpose()).trace() * w21).transpose();
  out.grad.KQ().W11() += 2.0 * k2 * w21.squaredNorm() * W11 * rc.lambda();
  return out;
}

}  // namespace advicl
