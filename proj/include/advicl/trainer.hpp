#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "advicl/attack.hpp"
#include "advicl/errors.hpp"
#include "advicl/format.hpp"
#include "advicl/linalg.hpp"
#include "advicl/lsa.hpp"
#include "advicl/parallel.hpp"
#include "advicl/stochastics.hpp"
#include "advicl/surrogate.hpp"
#include "advicl/task.hpp"

namespace advicl {

enum class TrainMode { restricted_analytic, full_mc, minimax_empirical };
enum class Integrator { rk4, euler };

inline std::string to_string(TrainMode m) {
  switch (m) {
    case TrainMode::restricted_analytic: return "restricted";
    case TrainMode::full_mc: return "full";
    case TrainMode::minimax_empirical: return "minimax";
  }
  return "?";
}

inline TrainMode train_mode_from_string(const std::string& s) {
  if (s == "restricted" || s == "restricted_analytic") return TrainMode::restricted_analytic;
  if (s == "full" || s == "full_mc") return TrainMode::full_mc;
  if (s == "minimax" || s == "minimax_empirical") return TrainMode::minimax_empirical;
  throw ConfigError("unknown training mode '" + s + "'");
}

inline Integrator integrator_from_string(const std::string& s) {
  if (s == "rk4") return Integrator::rk4;
  if (s == "euler") return Integrator::euler;
  throw ConfigError("unknown integrator '" + s + "'");
}

struct TrainConfig {
  double eta = 0.0;  // <= 0 selects 0.01 / lambda_max(Gamma Lambda + eps^2 psi I)
  long max_steps = 200000;
  double grad_tol = 1e-8;
  TrainMode mode = TrainMode::restricted_analytic;
  Integrator integrator = Integrator::rk4;
  int batch_tasks = 256;
  long diag_every = 100;
  RngStream seed{};
  int attack_steps = 100;
  int attack_restarts = 8;

  double effective_eta(const RegimeConstants& rc) const {
    if (eta > 0.0) return eta;
    Eigen::SelfAdjointEigenSolver<Mat> es(rc.A, Eigen::EigenvaluesOnly);
    return 0.01 / es.eigenvalues().maxCoeff();
  }
};

struct TrajectoryRecord {
  long step = 0;
  double loss = 0.0;
  double grad_norm_sq = 0.0;
  double w22 = 0.0;
  double frob_w11 = 0.0;
  double balance_gap = 0.0;
  std::optional<double> pl_slack;
  std::optional<double> off_v21;
  std::optional<double> off_kq21;
  std::optional<double> loss_gap;  // loss minus its minimum, restricted mode only
  std::optional<double> loss_se;   // Monte-Carlo standard error of loss
  std::optional<double> floor_v21;  // gradient-noise floors accumulated so far, full mode only
  std::optional<double> floor_kq21;
};

struct TrajectoryDiagnostics {
  std::vector<TrajectoryRecord> records;
  double eta = 0.0;
  long steps = 0;
  bool converged = false;
  bool theorem_conditions_met = true;
  bool step_probe_ok = true;
  double nu = std::numeric_limits<double>::quiet_NaN();
  double mu = std::numeric_limits<double>::quiet_NaN();
  double loss_min = std::numeric_limits<double>::quiet_NaN();
  std::optional<double> noise_floor_v21;
  std::optional<double> noise_floor_kq21;
};

inline void write_trajectory_csv(std::ostream& os, const TrajectoryDiagnostics& diag) {
  os << "step,loss,grad_norm_sq,w22,frob_w11,balance_gap,pl_slack,off_v21,off_kq21\n";
  for (const auto& r : diag.records) {
    os << r.step << ',' << fmt_double(r.loss) << ',' << fmt_double(r.grad_norm_sq) << ',' << fmt_double(r.w22)
       << ',' << fmt_double(r.frob_w11) << ',' << fmt_double(r.balance_gap) << ',' << fmt_optional(r.pl_slack)
       << ',' << fmt_optional(r.off_v21) << ',' << fmt_optional(r.off_kq21) << '\n';
  }
}

namespace detail {

/// Raises Diverged after `limit` consecutive checkpoints with rising loss. For
/// noisy losses the final value must also exceed the first checkpoint.
class DivergenceGuard {
 public:
  explicit DivergenceGuard(bool noisy, int limit = 10) : noisy_(noisy), limit_(limit) {}

  void observe(double loss) {
    if (!std::isfinite(loss)) throw Diverged("loss became non-finite");
    if (!first_) first_ = loss;
    if (last_ && loss > *last_ + 1e-12 * std::abs(*last_)) ++rising_;
    else rising_ = 0;
    last_ = loss;
    if (rising_ >= limit_ && (!noisy_ || loss > *first_))
      throw Diverged("loss increased for " + std::to_string(limit_) + " consecutive checkpoints");
  }

 private:
  bool noisy_;
  int limit_;
  int rising_ = 0;
  std::optional<double> first_, last_;
};

struct FlowState {
  double w22 = 0.0;
  Mat W11;
};

inline FlowState flow_rhs(const FlowState& s, const RegimeConstants& rc) {
  const SimplifiedGradient g = simplified_gradient({rc.d(), s.w22, s.W11}, rc);
  return {-g.g_w22, -g.g_W11};
}

inline FlowState axpy(const FlowState& s, double h, const FlowState& k) { return {s.w22 + h * k.w22, s.W11 + h * k.W11}; }

inline FlowState flow_step(const FlowState& s, double h, const RegimeConstants& rc, Integrator integ) {
  const FlowState k1 = flow_rhs(s, rc);
  if (integ == Integrator::euler) return axpy(s, h, k1);
  const FlowState k2 = flow_rhs(axpy(s, 0.5 * h, k1), rc);
  const FlowState k3 = flow_rhs(axpy(s, 0.5 * h, k2), rc);
  const FlowState k4 = flow_rhs(axpy(s, h, k3), rc);
  return {s.w22 + h / 6.0 * (k1.w22 + 2.0 * k2.w22 + 2.0 * k3.w22 + k4.w22),
          s.W11 + h / 6.0 * (k1.W11 + 2.0 * k2.W11 + 2.0 * k3.W11 + k4.W11)};
}

inline void fill_shape(TrajectoryRecord& rec, const LsaParams& p) {
  rec.w22 = p.V().w22();
  rec.frob_w11 = p.KQ().W11().norm();
  rec.balance_gap = std::abs(rec.w22 * rec.w22 - rec.frob_w11 * rec.frob_w11);
  rec.off_v21 = p.V().w21().norm();
  rec.off_kq21 = p.KQ().w21().norm();
}

}  // namespace detail

/// Gradient flow on the simplified surrogate, integrated with RK4 (or Euler)
/// at step cfg.eta until the gradient norm drops below grad_tol.
inline std::pair<RestrictedParams, TrajectoryDiagnostics> train_surrogate_restricted(
    const InitSpec& init, const RegimeConstants& rc, const TrainConfig& cfg) {
  const int d = rc.d();
  const LsaParams p0 = init_params(init, d);
  TrajectoryDiagnostics diag;
  diag.eta = cfg.effective_eta(rc);
  const NuMu nm = nu_mu_constants(init, rc);
  diag.nu = nm.nu;
  diag.mu = nm.mu;
  diag.loss_min = minimizer_value(rc);
  diag.theorem_conditions_met = nm.below_threshold;

  detail::FlowState s{p0.V().w22(), p0.KQ().W11()};
  auto restricted = [&](const detail::FlowState& st) { return RestrictedParams{d, st.w22, st.W11}; };

  {
    const detail::FlowState trial = detail::flow_step(s, diag.eta, rc, cfg.integrator);
    diag.step_probe_ok = simplified_loss(restricted(trial), rc) <= simplified_loss(restricted(s), rc) + 1e-12;
  }

  detail::DivergenceGuard guard(false);
  auto record = [&](long step, const SimplifiedGradient& g) {
    const RestrictedParams r = restricted(s);
    TrajectoryRecord rec;
    rec.step = step;
    rec.loss = simplified_loss(r, rc);
    rec.grad_norm_sq = g.norm_sq();
    rec.w22 = r.w22;
    rec.frob_w11 = r.W11.norm();
    rec.balance_gap = std::abs(rec.w22 * rec.w22 - rec.frob_w11 * rec.frob_w11);
    rec.loss_gap = simplified_loss_gap(r, rc);
    rec.pl_slack = rec.grad_norm_sq - diag.mu * *rec.loss_gap;
    diag.records.push_back(rec);
    guard.observe(rec.loss);
  };

  const double tol_sq = cfg.grad_tol * cfg.grad_tol;
  long step = 0;
  for (;; ++step) {
    const SimplifiedGradient g = simplified_gradient(restricted(s), rc);
    const bool done = g.norm_sq() < tol_sq;
    if (done || step >= cfg.max_steps || step % cfg.diag_every == 0) {
      if (diag.records.empty() || diag.records.back().step != step) record(step, g);
    }
    if (done) {
      diag.converged = true;
      break;
    }
    if (step >= cfg.max_steps) break;
    s = detail::flow_step(s, diag.eta, rc, cfg.integrator);
  }
  diag.steps = step;
  return {restricted(s), diag};
}

/// Stochastic descent on the four-term surrogate over all parameters, with a
/// fresh task batch per step. Also tracks the random-walk noise floor of the
/// w21 blocks: 3 eta sqrt(sum_t ||stderr of the step-t gradient||^2).
inline std::pair<LsaParams, TrajectoryDiagnostics> train_surrogate_full(const InitSpec& init,
                                                                        const RegimeConstants& rc,
                                                                        const TrainConfig& cfg) {
  if (cfg.mode != TrainMode::full_mc) throw PreconditionViolated("train_surrogate_full needs mode full_mc");
  LsaParams p = init_params(init, rc.d());
  TrajectoryDiagnostics diag;
  diag.eta = cfg.effective_eta(rc);
  diag.theorem_conditions_met = init.sigma < sigma_threshold(rc);
  diag.loss_min = minimizer_value(rc);
  detail::DivergenceGuard guard(true);
  double var_v21 = 0.0, var_kq21 = 0.0;

  for (long step = 0;; ++step) {
    const bool last = step >= cfg.max_steps;
    const SurrogateGradient sg = general_surrogate_gradient_mc(p, rc, cfg.batch_tasks, cfg.seed.substream(step));
    if (last || step % cfg.diag_every == 0) {
      TrajectoryRecord rec;
      rec.step = step;
      rec.loss = sg.terms.total();
      rec.loss_se = sg.terms.se;
      rec.grad_norm_sq = sg.grad.WV.squaredNorm() + sg.grad.WKQ.squaredNorm();
      rec.floor_v21 = 3.0 * diag.eta * std::sqrt(var_v21);
      rec.floor_kq21 = 3.0 * diag.eta * std::sqrt(var_kq21);
      detail::fill_shape(rec, p);
      diag.records.push_back(rec);
      guard.observe(rec.loss);
    }
    if (last) {
      diag.steps = step;
      break;
    }
    p.WV -= diag.eta * sg.grad.WV;
    p.WKQ -= diag.eta * sg.grad.WKQ;
    var_v21 += sg.grad_se.V().w21().squaredNorm();
    var_kq21 += sg.grad_se.KQ().w21().squaredNorm();
  }
  diag.noise_floor_v21 = 3.0 * diag.eta * std::sqrt(var_v21);
  diag.noise_floor_kq21 = 3.0 * diag.eta * std::sqrt(var_kq21);
  return {p, diag};
}

/// Empirical minimax training: each step attacks a fresh batch (exact attack
/// while w21 of W^V is within 1e-12 of zero, PGA otherwise) and descends on
/// the batch-mean attacked loss with the perturbations held fixed.
inline std::pair<LsaParams, TrajectoryDiagnostics> train_minimax_empirical(const InitSpec& init,
                                                                           const CovarianceSpec& cov, int N,
                                                                           int M_train, double eps,
                                                                           const TrainConfig& cfg) {
  if (cfg.mode != TrainMode::minimax_empirical)
    throw PreconditionViolated("train_minimax_empirical needs mode minimax_empirical");
  if (cfg.batch_tasks < 2) throw PreconditionViolated("batch_tasks must be >= 2");
  const int d = cov.dim();
  const RegimeConstants rc = make_regime(N, M_train, eps, cov);
  LsaParams p = init_params(init, d);
  TrajectoryDiagnostics diag;
  diag.eta = cfg.effective_eta(rc);
  diag.theorem_conditions_met = init.sigma < sigma_threshold(rc);
  detail::DivergenceGuard guard(true);

  struct Sample {
    double loss = 0.0;
    Vec g_a;
    Mat g_B;
  };
  std::vector<Sample> batch(static_cast<std::size_t>(cfg.batch_tasks));

  for (long step = 0;; ++step) {
    const bool last = step >= cfg.max_steps;
    const RngStream step_stream = cfg.seed.substream(step);
    const bool affine = p.V().w21().norm() <= 1e-12;
    LsaParams attack_view = p;
    if (affine) attack_view.V().w21().setZero();
    parallel_for(batch.size(), [&](std::size_t i) {
      const TaskSample t = sample_task(step_stream.substream(2 * i), cov, N, M_train);
      Perturbation delta;
      if (eps == 0.0 || M_train == 0) {
        delta = {Mat::Zero(d, M_train), eps};
      } else if (affine) {
        delta = attack_exact_affine(attack_view, t, eps).delta;
      } else {
        AttackConfig ac{eps, M_train, cfg.attack_steps, 0.0, cfg.attack_restarts, step_stream.substream(2 * i + 1)};
        delta = attack_pga(p, t, ac).delta;
      }
      const PromptEmbedding pe = assemble_adversarial(t, delta);
      const double ctx = static_cast<double>(pe.ctx);
      const Vec a = p.WV.row(d).transpose();
      const Vec b = p.WKQ.leftCols(d) * t.x_q;
      const Vec Sa = pe.E * (pe.E.transpose() * a) / ctx;
      const Vec Sb = pe.E * (pe.E.transpose() * b) / ctx;
      const double r = a.dot(Sb) - t.y_q;
      batch[i] = {0.5 * r * r, r * Sb, r * Sa * t.x_q.transpose()};
    });
    RunningMean loss;
    Vec ga = Vec::Zero(d + 1);
    Mat gB = Mat::Zero(d + 1, d);
    for (const auto& s : batch) {
      loss.add(s.loss);
      ga += s.g_a;
      gB += s.g_B;
    }
    ga /= static_cast<double>(batch.size());
    gB /= static_cast<double>(batch.size());

    if (last || step % cfg.diag_every == 0) {
      TrajectoryRecord rec;
      rec.step = step;
      rec.loss = loss.mean();
      rec.loss_se = loss.stderr_of_mean();
      rec.grad_norm_sq = ga.squaredNorm() + gB.squaredNorm();
      detail::fill_shape(rec, p);
      diag.records.push_back(rec);
      guard.observe(rec.loss);
    }
    if (last) {
      diag.steps = step;
      break;
    }
    p.WV.row(d) -= diag.eta * ga.transpose();
    p.WKQ.leftCols(d) -= diag.eta * gB;
  }
  return {p, diag};
}

struct PlReport {
  bool holds = true;
  double worst_slack = std::numeric_limits<double>::infinity();
  long worst_step = -1;
  std::size_t violations = 0;
};

/// Checks ||grad||^2 >= mu (loss - loss_min) - 1e-9 at every checkpoint.
inline PlReport check_pl_along_trajectory(const TrajectoryDiagnostics& diag, double mu, double loss_min) {
  PlReport rep;
  for (const auto& r : diag.records) {
    const double slack = r.grad_norm_sq - mu * (r.loss - loss_min);
    if (slack < rep.worst_slack) {
      rep.worst_slack = slack;
      rep.worst_step = r.step;
    }
    if (slack < -1e-9) {
      rep.holds = false;
      ++rep.violations;
    }
  }
  return rep;
}

}  // namespace advicl
