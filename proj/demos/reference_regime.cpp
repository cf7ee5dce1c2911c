// Trains the d=1 reference regime, compares against the closed form and
// measures robust error of the result for a few test-time suffix lengths.
#include <cstdio>

#include "advicl/attack.hpp"
#include "advicl/surrogate.hpp"
#include "advicl/theory.hpp"
#include "advicl/trainer.hpp"

int main() {
  using namespace advicl;
  const CovarianceSpec cov = make_covariance(CovKind::identity, 1);
  const RegimeConstants rc = make_regime(8, 2, 1.0, cov);
  const InitSpec init{0.5, default_theta(1)};

  TrainConfig cfg;
  cfg.eta = 0.01;
  const auto [trained, diag] = train_surrogate_restricted(init, rc, cfg);
  const ClosedFormSolution cf = closed_form_solution(rc);
  std::printf("trained product %.9f after %ld steps, closed form %.9f\n", trained.product()(0, 0), diag.steps,
              cf.product(0, 0));
  std::printf("nu %.5f  mu %.4f  sigma threshold %.6f\n", diag.nu, diag.mu, sigma_threshold(rc));

  const LsaParams model = embed_restricted(trained);
  for (int m_test : {0, 1, 2, 4, 8}) {
    AttackConfig ac{1.0, m_test, 100, 0.0, 8, RngStream{7, static_cast<std::uint64_t>(m_test)}};
    const RobustErrorEstimate est = estimate_robust_error(model, cov, 8, ac, 20000);
    const double bound = robust_bound(rc, make_regime(8, m_test, 1.0, cov));
    std::printf("M_test=%d  robust error %.4f +- %.4f  bound %.4f\n", m_test, est.mean, est.se, bound);
  }
}
