#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "advicl/attack.hpp"
#include "advicl/harness.hpp"
#include "advicl/linalg.hpp"
#include "advicl/lsa.hpp"
#include "advicl/stochastics.hpp"
#include "advicl/surrogate.hpp"
#include "advicl/theory.hpp"
#include "advicl/trainer.hpp"

// Named property checks shared by `advicl verify` and the acceptance suite.
// Each returns a pass flag plus a slack that is >= 0 exactly when it passes.

namespace advicl::checks {

struct CheckResult {
  std::string name;
  bool pass = false;
  double slack = 0.0;
  std::string detail;
};

inline nlohmann::json to_json(const CheckResult& c) {
  return {{"name", c.name}, {"pass", c.pass}, {"slack", std::isfinite(c.slack) ? nlohmann::json(c.slack) : nullptr},
          {"detail", c.detail}};
}

inline Mat random_matrix(RngStream::Engine& eng, int r, int c, double scale = 1.0) {
  std::normal_distribution<double> nd;
  Mat m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = scale * nd(eng);
  return m;
}

/// Well-conditioned dense covariance: Q diag(0.5 .. 2) Q^T with a random rotation.
inline CovarianceSpec random_covariance(RngStream::Engine& eng, int d) {
  if (d == 1) return make_covariance(CovKind::identity, 1);
  Eigen::HouseholderQR<Mat> qr(random_matrix(eng, d, d));
  const Mat Q = qr.householderQ();
  Vec ev(d);
  for (int i = 0; i < d; ++i) ev(i) = 0.5 + 1.5 * i / (d - 1);
  Mat lam = Q * ev.asDiagonal() * Q.transpose();
  lam = 0.5 * (lam + lam.transpose());
  std::vector<double> vals(lam.data(), lam.data() + d * d);
  return make_covariance(CovKind::dense, d, vals);
}

inline CheckResult moment_fourth_order(int d, long n, const RngStream& stream) {
  auto eng = stream.engine();
  const CovarianceSpec cov = random_covariance(eng, d);
  const Mat A = random_matrix(eng, d, d);
  const Mat& L = cov.lambda;
  const Mat expected = L * (A + A.transpose()) * L + (A * L).trace() * L;
  RunningMatrixMean acc(d, d);
  for (long i = 0; i < n; ++i) {
    const Vec x = sample_gaussian_vector(eng, cov);
    acc.add(x.dot(A * x) * (x * x.transpose()));
  }
  const Mat se = acc.stderr_of_mean();
  double slack = std::numeric_limits<double>::infinity();
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) slack = std::min(slack, 3.0 * se(i, j) - std::abs(acc.mean()(i, j) - expected(i, j)));
  std::ostringstream os;
  os << "d=" << d << " samples=" << n;
  return {"moment_fourth_order_d" + std::to_string(d), slack >= 0.0, slack, os.str()};
}

inline CheckResult moment_quadratic_form(int d, long n, const RngStream& stream) {
  auto eng = stream.engine();
  const CovarianceSpec cov = random_covariance(eng, d);
  const Mat A = random_matrix(eng, d, d);
  RunningMean acc;
  for (long i = 0; i < n; ++i) {
    const Vec x = sample_gaussian_vector(eng, cov);
    acc.add(x.dot(A * x));
  }
  const double diff = std::abs(acc.mean() - (A * cov.lambda).trace());
  const double slack = 3.0 * acc.stderr_of_mean() - diff;
  std::ostringstream os;
  os << "d=" << d << " samples=" << n << " |mean-Tr(A Lambda)|=" << diff;
  return {"moment_quadratic_form_d" + std::to_string(d), slack >= 0.0, slack, os.str()};
}

/// Central differences against simplified_gradient. `flip_sign` negates the
/// analytic W11 gradient to confirm the check can fail.
inline CheckResult gradient_exactness(int draws, int d_max, double h, const RngStream& stream, bool flip_sign = false) {
  auto eng = stream.engine();
  std::uniform_int_distribution<int> dd(1, d_max), nn(1, 16), mm(0, 8);
  std::uniform_real_distribution<double> ee(0.0, 2.0);
  double worst = 0.0;
  for (int k = 0; k < draws; ++k) {
    const int d = dd(eng);
    const CovarianceSpec cov = random_covariance(eng, d);
    const RegimeConstants rc = make_regime(nn(eng), mm(eng), ee(eng), cov);
    RestrictedParams r{d, std::normal_distribution<double>()(eng), random_matrix(eng, d, d)};
    SimplifiedGradient g = simplified_gradient(r, rc);
    if (flip_sign) g.g_W11 = -g.g_W11;
    Vec analytic(1 + d * d), numeric(1 + d * d);
    analytic(0) = g.g_w22;
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) analytic(1 + i * d + j) = g.g_W11(i, j);
    RestrictedParams p = r, m = r;
    p.w22 += h;
    m.w22 -= h;
    numeric(0) = (simplified_loss(p, rc) - simplified_loss(m, rc)) / (2.0 * h);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) {
        p = r;
        m = r;
        p.W11(i, j) += h;
        m.W11(i, j) -= h;
        numeric(1 + i * d + j) = (simplified_loss(p, rc) - simplified_loss(m, rc)) / (2.0 * h);
      }
    worst = std::max(worst, (analytic - numeric).norm() / std::max(numeric.norm(), 1e-12));
  }
  std::ostringstream os;
  os << draws << " draws, max relative error " << worst;
  return {"gradient_exactness", worst <= 1e-6, 1e-6 - worst, os.str()};
}

/// Robust error (exact or PGA attack) never exceeds the four-term surrogate
/// by more than 3 combined standard errors.
inline CheckResult surrogate_upper_bound(int restricted_draws, int general_draws, int n_tasks, const RngStream& stream,
                                int pga_steps = 100, int restarts = 8) {
  auto eng = stream.engine();
  const int d = 2, N = 8, M = 2;
  const double eps = 1.0;
  const CovarianceSpec cov = random_covariance(eng, d);
  const RegimeConstants rc = make_regime(N, M, eps, cov);
  double slack = std::numeric_limits<double>::infinity();
  int failures = 0;
  for (int k = 0; k < restricted_draws + general_draws; ++k) {
    LsaParams p(d);
    if (k < restricted_draws) {
      p = embed_restricted({d, std::normal_distribution<double>(0.0, 0.7)(eng), random_matrix(eng, d, d, 0.7)});
    } else {
      p.WV = random_matrix(eng, d + 1, d + 1, 0.5);
      p.WKQ = random_matrix(eng, d + 1, d + 1, 0.5);
    }
    const RngStream ks = stream.substream(static_cast<std::uint64_t>(k) + 1);
    const AttackConfig ac{eps, M, pga_steps, 0.0, restarts, ks.substream(0)};
    const RobustErrorEstimate adv = estimate_robust_error(p, cov, N, ac, n_tasks);
    const SurrogateTerms sur = general_surrogate_mc(p, rc, n_tasks, ks.substream(1));
    const double s = sur.total() + 3.0 * std::hypot(adv.se, sur.se) - adv.mean;
    slack = std::min(slack, s);
    if (s < 0.0) ++failures;
  }
  std::ostringstream os;
  os << restricted_draws << " restricted + " << general_draws << " general draws, " << n_tasks
     << " tasks each, failures=" << failures;
  return {"surrogate_upper_bound", failures == 0, slack, os.str()};
}

struct RegimeCase {
  int d = 1;
  int N = 8;
  int M = 2;
  double eps = 1.0;
};

inline std::string describe(const RegimeCase& c) {
  std::ostringstream os;
  os << "(d=" << c.d << ",N=" << c.N << ",M=" << c.M << ",eps=" << c.eps << ")";
  return os.str();
}

struct TrainedCase {
  RegimeCase rcase;
  RegimeConstants rc;
  InitSpec init;
  RestrictedParams result;
  TrajectoryDiagnostics diag;
  double seconds = 0.0;
};

/// Restricted training from the small-scale initialization with sigma = fraction * threshold.
inline TrainedCase train_case(const RegimeCase& c, double sigma_fraction, const TrainConfig& cfg) {
  TrainedCase t;
  t.rcase = c;
  t.rc = make_regime(c.N, c.M, c.eps, make_covariance(CovKind::identity, c.d));
  t.init = {sigma_fraction * sigma_threshold(t.rc), default_theta(c.d)};
  const auto start = std::chrono::steady_clock::now();
  std::tie(t.result, t.diag) = train_surrogate_restricted(t.init, t.rc, cfg);
  t.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return t;
}

inline CheckResult closed_form_convergence(const TrainedCase& t, double tol = 1e-4, double max_seconds = 30.0) {
  const ClosedFormSolution cf = closed_form_solution(t.rc);
  const double err = relative_frobenius_error(t.result.product(), cf.product);
  std::ostringstream os;
  os << describe(t.rcase) << " rel_err=" << err << " steps=" << t.diag.steps << " time=" << t.seconds << "s";
  const bool ok = err <= tol && t.seconds <= max_seconds;
  return {"closed_form_convergence" + describe(t.rcase), ok, std::min(tol - err, max_seconds - t.seconds), os.str()};
}

/// Balance, positivity, PL and linear-rate envelope along one restricted run.
inline CheckResult trajectory_lemmas(const TrainedCase& t) {
  const auto& recs = t.diag.records;
  const double mu = t.diag.mu, nu = t.diag.nu;
  double balance = 0.0, pos = std::numeric_limits<double>::infinity(), pl = std::numeric_limits<double>::infinity();
  double rate = std::numeric_limits<double>::infinity();
  bool w22_positive = true;
  for (std::size_t k = 0; k < recs.size(); ++k) {
    const auto& r = recs[k];
    balance = std::max(balance, r.balance_gap);
    pos = std::min(pos, r.w22 * r.w22 - (nu - 1e-6));
    if (!(r.w22 > 0.0)) w22_positive = false;
    pl = std::min(pl, *r.pl_slack + 1e-9);
    if (k + 1 < recs.size()) {
      const double steps = static_cast<double>(recs[k + 1].step - r.step);
      const double env = *r.loss_gap * std::exp(-mu * t.diag.eta * steps) * (1.0 + 1e-3);
      rate = std::min(rate, env - *recs[k + 1].loss_gap);
    }
  }
  const bool ok = t.diag.theorem_conditions_met && w22_positive && balance <= 1e-6 && pos >= 0.0 && pl >= 0.0 &&
                  rate >= 0.0;
  std::ostringstream os;
  os << describe(t.rcase) << " max_balance_gap=" << balance << " min(w22^2-nu+1e-6)=" << pos
     << " min_pl_slack+1e-9=" << pl << " min_rate_margin=" << rate << " nu=" << nu << " mu=" << mu
     << " checkpoints=" << recs.size();
  return {"trajectory_lemmas" + describe(t.rcase), ok, std::min({1e-6 - balance, pos, pl, rate}), os.str()};
}

inline CheckResult robust_bound_cells(const std::vector<SweepRecord>& recs) {
  double slack = std::numeric_limits<double>::infinity();
  int bad = 0, cells = 0;
  for (const auto& r : recs) {
    ++cells;
    const double s = r.failed() ? -std::numeric_limits<double>::infinity()
                                : r.theory_bound - (r.robust_err + 3.0 * r.robust_err_se);
    slack = std::min(slack, s);
    if (!(s >= 0.0)) ++bad;
  }
  std::ostringstream os;
  os << cells << " cells, violations=" << bad;
  return {"robust_bound_cells", bad == 0 && cells > 0, slack, os.str()};
}

inline CheckResult robust_bound_hand_cell() {
  const CovarianceSpec cov = make_covariance(CovKind::identity, 1);
  const double b = robust_bound(make_regime(8, 2, 1.0, cov), make_regime(8, 2, 1.0, cov));
  const double diff = std::abs(b - 3.612903);
  std::ostringstream os;
  os << "bound=" << fmt_double(b);
  return {"robust_bound_hand_cell", diff <= 1e-6, 1e-6 - diff, os.str()};
}

inline CheckResult correlation_sign(const std::vector<SweepRecord>& recs, std::uint64_t seed) {
  const CorrelationReport c = correlation(recs, seed);
  std::ostringstream os;
  os << "pcc=" << c.pcc << " p=" << c.p_value << " n=" << c.n_points << " method=" << c.method;
  const bool ok = c.pcc > 0.0 && c.p_value < 0.05;
  return {"correlation_sign", ok, std::min(c.pcc, 0.05 - c.p_value), os.str()};
}

/// Exact affine attack dominates PGA on restricted-class tasks.
inline CheckResult exact_dominates_pga(int n_tasks, const RngStream& stream) {
  auto eng = stream.engine();
  double slack = std::numeric_limits<double>::infinity();
  int bad = 0;
  std::uniform_int_distribution<int> dd(1, 4), nn(1, 16), mm(1, 6);
  std::uniform_real_distribution<double> ee(0.1, 2.0);
  for (int k = 0; k < n_tasks; ++k) {
    const int d = dd(eng), N = nn(eng), M = mm(eng);
    const double eps = ee(eng);
    const CovarianceSpec cov = random_covariance(eng, d);
    const LsaParams p =
        embed_restricted({d, std::normal_distribution<double>()(eng), random_matrix(eng, d, d)});
    const TaskSample t = sample_task(stream.substream(2 * k + 1), cov, N, M);
    const AttackOutcome ex = attack_exact_affine(p, t, eps);
    const AttackOutcome pga = attack_pga(p, t, {eps, M, 100, 0.0, 8, stream.substream(2 * k + 2)});
    const double s = ex.objective - (pga.objective - 1e-9);
    slack = std::min(slack, s);
    if (s < 0.0) ++bad;
  }
  std::ostringstream os;
  os << n_tasks << " tasks, violations=" << bad;
  return {"exact_dominates_pga", bad == 0, slack, os.str()};
}

/// Dense grid search at resolution eps/200 on d=1 general-parameter instances.
inline double grid_search_max(const LsaParams& p, const TaskSample& t, double eps) {
  const detail::AttackGeometry geo(p, t);
  const int M = t.M();
  const int K = 401;
  auto val = [&](int k) { return -eps + eps * k / 200.0; };
  double best = 0.0;
  Mat D(1, M);
  if (M == 1) {
    for (int i = 0; i < K; ++i) {
      D(0, 0) = val(i);
      const double r = geo.predict(D) - t.y_q;
      best = std::max(best, 0.5 * r * r);
    }
  } else {
    for (int i = 0; i < K; ++i)
      for (int j = 0; j < K; ++j) {
        D(0, 0) = val(i);
        D(0, 1) = val(j);
        const double r = geo.predict(D) - t.y_q;
        best = std::max(best, 0.5 * r * r);
      }
  }
  return best;
}

inline CheckResult pga_matches_grid(int instances, const RngStream& stream) {
  auto eng = stream.engine();
  std::uniform_int_distribution<int> nn(1, 4), mm(1, 2);
  std::uniform_real_distribution<double> ee(0.25, 2.0);
  const CovarianceSpec cov = make_covariance(CovKind::identity, 1);
  int within = 0;
  double worst = 0.0;
  for (int k = 0; k < instances; ++k) {
    LsaParams p(1);
    p.WV = random_matrix(eng, 2, 2);
    p.WKQ = random_matrix(eng, 2, 2);
    const int N = nn(eng), M = mm(eng);
    const double eps = ee(eng);
    const TaskSample t = sample_task(stream.substream(2 * k + 1), cov, N, M);
    const double pga = attack_pga(p, t, {eps, M, 100, 0.0, 8, stream.substream(2 * k + 2)}).objective;
    const double grid = grid_search_max(p, t, eps);
    const double rel = std::abs(pga - grid) / std::max(grid, 1e-300);
    worst = std::max(worst, rel);
    if (rel <= 5e-3) ++within;
  }
  const double frac = static_cast<double>(within) / instances;
  std::ostringstream os;
  os << within << "/" << instances << " within 0.5% of grid search, worst relative gap " << worst;
  return {"pga_matches_grid", frac >= 0.95, frac - 0.95, os.str()};
}

/// Full-parameter SGD on the surrogate from the small-scale initialization: both w21
/// blocks stay inside the accumulated 3-stderr gradient-noise floor.
inline CheckResult zero_gradient(const RegimeCase& c, long steps, int batch, const RngStream& stream) {
  const CovarianceSpec cov = make_covariance(CovKind::identity, c.d);
  const RegimeConstants rc = make_regime(c.N, c.M, c.eps, cov);
  const InitSpec init{0.5 * sigma_threshold(rc), default_theta(c.d)};
  TrainConfig cfg;
  cfg.mode = TrainMode::full_mc;
  cfg.max_steps = steps;
  cfg.batch_tasks = batch;
  cfg.diag_every = 1;
  cfg.eta = 0.01 / rc.A.diagonal().maxCoeff();
  cfg.seed = stream;
  const auto [p, diag] = train_surrogate_full(init, rc, cfg);
  double slack = std::numeric_limits<double>::infinity();
  double max_v = 0.0, max_kq = 0.0;
  for (const auto& r : diag.records) {
    max_v = std::max(max_v, *r.off_v21);
    max_kq = std::max(max_kq, *r.off_kq21);
    slack = std::min({slack, *r.floor_v21 - *r.off_v21, *r.floor_kq21 - *r.off_kq21});
  }
  std::ostringstream os;
  os << describe(c) << " steps=" << steps << " max|w21_V|=" << max_v << " floor=" << *diag.noise_floor_v21
     << " max|w21_KQ|=" << max_kq << " floor=" << *diag.noise_floor_kq21;
  return {"zero_gradient", slack >= 0.0, slack, os.str()};
}

}  // namespace advicl::checks
