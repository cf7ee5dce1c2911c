#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "advicl/errors.hpp"
#include "advicl/linalg.hpp"
#include "advicl/lsa.hpp"
#include "advicl/parallel.hpp"
#include "advicl/stochastics.hpp"
#include "advicl/task.hpp"

namespace advicl {

struct AttackConfig {
  double eps = 0.0;
  int M = 0;
  int pga_steps = 100;
  double step_size = 0.0;  // <= 0 selects eps / 10
  int restarts = 8;
  RngStream seed_stream{};

  double effective_step() const { return step_size > 0.0 ? step_size : eps / 10.0; }
};

struct AttackOutcome {
  Perturbation delta;
  double objective = 0.0;
  double prediction = 0.0;
  bool exact = false;
};

namespace detail {

/// Closed-form pieces of the prediction as a function of the suffix inputs.
/// pred(Delta) = sum_cols (a.e)(e.b) / ctx with the suffix columns shifted by Delta.
struct AttackGeometry {
  Vec a;  // last row of W^V, length d+1
  Vec b;  // [W11; w21_kq] x_q, length d+1
  double base_sum = 0.0;  // contribution of clean and query columns
  Mat Z;  // clean suffix columns (d+1) x M
  int d = 0;
  double ctx = 1.0;

  AttackGeometry(const LsaParams& p, const TaskSample& t) : d(p.d) {
    a = p.WV.row(d).transpose();
    b = p.WKQ.leftCols(d) * t.x_q;
    const PromptEmbedding clean = assemble_clean(t);
    base_sum = (clean.E.transpose() * a).dot(clean.E.transpose() * b);
    Z.resize(d + 1, t.M());
    Z.topRows(d) = t.X_sfx;
    Z.bottomRows(1) = t.Y_sfx;
    ctx = static_cast<double>(t.N() + t.M());
  }

  double predict(const Mat& Delta) const {
    double s = base_sum;
    for (Eigen::Index j = 0; j < Z.cols(); ++j) {
      const double ae = a.dot(Z.col(j)) + a.head(d).dot(Delta.col(j));
      const double eb = b.dot(Z.col(j)) + b.head(d).dot(Delta.col(j));
      s += ae * eb;
    }
    return s / ctx;
  }

  /// Gradient of pred with respect to each suffix perturbation column.
  Mat gradient(const Mat& Delta) const {
    Mat g(d, Z.cols());
    for (Eigen::Index j = 0; j < Z.cols(); ++j) {
      const double ae = a.dot(Z.col(j)) + a.head(d).dot(Delta.col(j));
      const double eb = b.dot(Z.col(j)) + b.head(d).dot(Delta.col(j));
      g.col(j) = (a.head(d) * eb + b.head(d) * ae) / ctx;
    }
    return g;
  }
};

inline AttackOutcome finalize_outcome(const LsaParams& p, const TaskSample& t, Perturbation delta,
                                      bool exact) {
  AttackOutcome out;
  out.prediction = predict(p, assemble_adversarial(t, delta));
  const double r = out.prediction - t.y_q;
  out.objective = 0.5 * r * r;
  out.delta = std::move(delta);
  out.exact = exact;
  return out;
}

inline Mat random_sphere_columns(RngStream::Engine& eng, int d, int M, double eps) {
  Mat D(d, M);
  for (int j = 0; j < M; ++j) {
    Vec z = standard_normal_vector(eng, d);
    const double n = z.norm();
    D.col(j) = n > 0.0 ? Vec(z * (eps / n)) : Vec::Zero(d);
  }
  return D;
}

}  // namespace detail

/// Projected gradient ascent on 1/2 (pred - y_q)^2 over per-column eps-balls.
/// Steps move each column a fixed distance along its own gradient direction;
/// the step is halved whenever a move fails to improve. Returns the best
/// iterate across restarts, which is a lower bound on the true maximum.
inline AttackOutcome attack_pga(const LsaParams& p, const TaskSample& t, const AttackConfig& cfg) {
  if (cfg.M != t.M()) throw DimensionMismatch("attack M does not match task suffix length");
  if (cfg.restarts < 1 || cfg.pga_steps < 1) throw PreconditionViolated("restarts and pga_steps must be >= 1");
  const int d = t.d(), M = t.M();
  if (M == 0 || cfg.eps == 0.0)
    return detail::finalize_outcome(p, t, {Mat::Zero(d, M), cfg.eps}, false);

  const detail::AttackGeometry geo(p, t);
  auto objective = [&](const Mat& D) {
    const double r = geo.predict(D) - t.y_q;
    return 0.5 * r * r;
  };
  auto eng = cfg.seed_stream.engine();

  Mat best = Mat::Zero(d, M);
  double best_obj = objective(best);
  for (int rs = 0; rs < cfg.restarts; ++rs) {
    Mat D = rs == 0 ? Mat::Zero(d, M) : detail::random_sphere_columns(eng, d, M, cfg.eps);
    double f = objective(D);
    double step = cfg.effective_step();
    for (int it = 0; it < cfg.pga_steps; ++it) {
      const double r = geo.predict(D) - t.y_q;
      const Mat g = r * geo.gradient(D);
      Mat cand = D;
      for (int j = 0; j < M; ++j) {
        const double gn = g.col(j).norm();
        if (gn > 0.0) cand.col(j) += (step / gn) * g.col(j);
      }
      cand = project_perturbation(cand, cfg.eps).Delta;
      const double fc = objective(cand);
      if (fc > f) {
        D = std::move(cand);
        f = fc;
      } else {
        step *= 0.5;
        if (step < 1e-14 * cfg.eps) break;
      }
    }
    if (f > best_obj) {
      best_obj = f;
      best = D;
    }
  }
  return detail::finalize_outcome(p, t, {best, cfg.eps}, false);
}

/// Exact maximizer when the w21 block of W^V is zero, so the prediction is
/// affine in every suffix column.
inline AttackOutcome attack_exact_affine(const LsaParams& p, const TaskSample& t, double eps) {
  if (p.V().w21().norm() > 0.0) throw PreconditionViolated("exact attack needs w21 of W^V equal to zero");
  if (eps < 0.0) throw PreconditionViolated("eps must be >= 0");
  const int d = t.d(), N = t.N(), M = t.M();
  Mat D = Mat::Zero(d, M);
  if (M > 0 && eps > 0.0) {
    const double c = p.V().w22() / static_cast<double>(N + M);
    const Vec v = p.KQ().W11() * t.x_q;
    const double vn = v.norm();
    const double r0 = predict(p, assemble_suffixed(t)) - t.y_q;
    if (vn > 0.0) {
      for (int j = 0; j < M; ++j) {
        const double slope = c * t.Y_sfx(j);
        if (slope == 0.0) continue;
        const double s = r0 != 0.0 ? r0 * slope : slope;
        D.col(j) = (s > 0.0 ? eps : -eps) / vn * v;
      }
    }
  }
  return detail::finalize_outcome(p, t, {D, eps}, true);
}

struct RobustErrorEstimate {
  double mean = 0.0;
  double se = 0.0;
  bool exact = false;
};

inline bool is_affine_in_suffix(const LsaParams& p) { return p.V().w21().norm() == 0.0; }

/// Monte-Carlo estimate of the robust error under a suffix attack of length cfg.M.
/// Task i is drawn from substream 2i and its attack restarts from substream 2i+1.
inline RobustErrorEstimate estimate_robust_error(const LsaParams& p, const CovarianceSpec& cov, int N,
                                                 const AttackConfig& cfg, int n_tasks) {
  if (n_tasks < 2) throw PreconditionViolated("n_tasks must be >= 2");
  const bool exact = is_affine_in_suffix(p);
  std::vector<double> obj(static_cast<std::size_t>(n_tasks));
  parallel_for(obj.size(), [&](std::size_t i) {
    const TaskSample t = sample_task(cfg.seed_stream.substream(2 * i), cov, N, cfg.M);
    if (exact) {
      obj[i] = attack_exact_affine(p, t, cfg.eps).objective;
    } else {
      AttackConfig c = cfg;
      c.seed_stream = cfg.seed_stream.substream(2 * i + 1);
      obj[i] = attack_pga(p, t, c).objective;
    }
  });
  RunningMean acc;
  for (double x : obj) acc.add(x);
  return {acc.mean(), acc.stderr_of_mean(), exact};
}

}  // namespace advicl
