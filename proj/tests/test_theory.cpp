#include <gtest/gtest.h>

#include <cmath>
#include <tuple>

#include "advicl/checks.hpp"
#include "advicl/theory.hpp"

using namespace advicl;

namespace {

CovarianceSpec eye(int d) { return make_covariance(CovKind::identity, d); }

}  // namespace

TEST(ClosedForm, ScalarExample) {
  const auto s = closed_form_solution(make_regime(8, 2, 1.0, eye(1)));
  EXPECT_NEAR(s.product(0, 0), 1.0 / 1.24, 1e-15);
  EXPECT_NEAR(s.w22, 0.898027, 1e-6);
  EXPECT_NEAR(s.W11(0, 0), 0.898027, 1e-6);
}

TEST(ClosedForm, NoAttackMatchesCleanSolution) {
  const auto s = closed_form_solution(make_regime(8, 2, 0.0, eye(1)));
  EXPECT_NEAR(s.product(0, 0), 1.0 / 1.2, 1e-15);
}

TEST(ClosedForm, IsotropicProductIsScaledIdentity) {
  const auto s = closed_form_solution(make_regime(20, 5, 1.7, eye(3)));
  const double c = s.product(0, 0);
  EXPECT_LE((s.product - c * Mat::Identity(3, 3)).norm(), 1e-14);
}

TEST(ClosedForm, InvariantsOnDenseCovariance) {
  auto eng = RngStream{51, 0}.engine();
  for (int d : {2, 3, 5}) {
    const auto rc = make_regime(12, 4, 1.0, checks::random_covariance(eng, d));
    const auto s = closed_form_solution(rc);
    EXPECT_LE(relative_frobenius_error(s.w22 * s.W11, s.product), 1e-12);
    EXPECT_NEAR(s.w22, s.W11.norm(), 1e-12);
    EXPECT_GT(s.w22, 0.0);
    EXPECT_LE(relative_frobenius_error(s.product, rc.A.inverse() * rc.lambda()), 1e-12);
  }
}

TEST(ClosedForm, UniqueMinimizerAtProductLevel) {
  auto eng = RngStream{52, 0}.engine();
  const int d = 3;
  const auto rc = make_regime(10, 3, 1.2, checks::random_covariance(eng, d));
  const auto s = closed_form_solution(rc);
  const double base = simplified_loss(s.restricted(), rc);
  for (int k = 0; k < 50; ++k) {
    Mat eta = checks::random_matrix(eng, d, d);
    eta *= 1e-3 / eta.norm();
    EXPECT_GT(simplified_loss({d, 1.0, s.product + eta}, rc), base);
  }
}

TEST(RobustBound, ScalarHandCell) {
  const double b = robust_bound(make_regime(8, 2, 1.0, eye(1)), make_regime(8, 2, 1.0, eye(1)));
  EXPECT_NEAR(b, 2.0 * (1.0 / 1.24 + 1.0), 1e-12);
  EXPECT_NEAR(b, 3.612903, 1e-6);
}

TEST(RobustBound, NoAttackSameLength) {
  const std::vector<double> v{2.0, 1.0};
  const auto cov = make_covariance(CovKind::diagonal, 2, v);
  const auto rc = make_regime(8, 3, 0.0, cov);
  const Mat L = cov.lambda;
  const double expected = 2.0 * (L * L * L * (rc.gamma * L).inverse() + L).trace();
  EXPECT_NEAR(robust_bound(rc, rc), expected, 1e-12);
}

TEST(RobustBound, GrowsWithTestLengthThroughPsi) {
  const auto rc_train = make_regime(16, 4, 2.0, eye(2));
  double prev_psi = -1.0;
  for (int m = 1; m <= 64; m *= 2) {
    const auto rt = make_regime(16, m, 2.0, eye(2));
    EXPECT_GT(rt.psi, prev_psi);
    prev_psi = rt.psi;
  }
  EXPECT_THROW(robust_bound(rc_train, make_regime(17, 4, 2.0, eye(2))), PreconditionViolated);
}

TEST(BoundTerms, Terms) {
  const auto [t1, t2, t3] = corollary_terms(make_regime(64, 4, 2.0, eye(4)), make_regime(64, 16, 2.0, eye(4)));
  EXPECT_EQ(t1, 4.0);
  EXPECT_EQ(t2, 0.25);
  EXPECT_EQ(t3, 4096.0);
  EXPECT_THROW(corollary_terms(make_regime(64, 0, 2.0, eye(4)), make_regime(64, 16, 2.0, eye(4))), DivisionByZero);
}

TEST(BoundTerms, ScalingOfThirdTerm) {
  const auto cov = eye(2);
  const double a = std::get<2>(corollary_terms(make_regime(32, 2, 1.0, cov), make_regime(32, 8, 1.0, cov)));
  const double b = std::get<2>(corollary_terms(make_regime(32, 4, 1.0, cov), make_regime(32, 8, 1.0, cov)));
  EXPECT_DOUBLE_EQ(a / b, 16.0);
  for (int m : {4, 16, 64}) {
    const int mtr = static_cast<int>(std::sqrt(m));
    const double t3 = std::get<2>(corollary_terms(make_regime(32, mtr, 1.0, cov), make_regime(32, m, 1.0, cov)));
    EXPECT_DOUBLE_EQ(t3, 32.0 * 32.0);
  }
}

TEST(LengthFlag, Flags) {
  EXPECT_FALSE(violates_length_assumption(4, 64, 32, 2.0));
  EXPECT_TRUE(violates_length_assumption(4, 8, 33, 2.0));
  EXPECT_TRUE(violates_length_assumption(4, 64, 8, 0.5));
  EXPECT_TRUE(violates_length_assumption(4, 64, 8, 4.5));
}
