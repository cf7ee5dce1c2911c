#include <gtest/gtest.h>

#include <cmath>

#include "advicl/checks.hpp"
#include "advicl/task.hpp"

using namespace advicl;

namespace {

TaskSample hand_task() {
  TaskSample t;
  t.w_tau = Vec::Constant(1, 2.0);
  t.X = Mat::Constant(1, 1, 1.0);
  t.Y = RowVec::Constant(1, 2.0);
  t.X_sfx = Mat::Constant(1, 1, 1.0);
  t.Y_sfx = RowVec::Constant(1, 2.0);
  t.x_q = Vec::Constant(1, 3.0);
  t.y_q = 6.0;
  return t;
}

}  // namespace

TEST(SampleTask, LabelsAreExact) {
  const auto cov = make_covariance(CovKind::identity, 3);
  const TaskSample t = sample_task(RngStream{1, 2}, cov, 5, 4);
  EXPECT_EQ((t.Y - t.w_tau.transpose() * t.X).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ((t.Y_sfx - t.w_tau.transpose() * t.X_sfx).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(t.y_q, t.w_tau.dot(t.x_q));
}

TEST(SampleTask, EmptySuffix) {
  const TaskSample t = sample_task(RngStream{1, 3}, make_covariance(CovKind::identity, 2), 3, 0);
  EXPECT_EQ(t.X_sfx.cols(), 0);
  EXPECT_EQ(t.Y_sfx.cols(), 0);
  EXPECT_THROW(sample_task(RngStream{}, make_covariance(CovKind::identity, 2), 0, 1), PreconditionViolated);
}

TEST(SampleTask, QueryLabelVarianceIsTraceLambda) {
  const std::vector<double> v{4.0, 1.0};
  const auto cov = make_covariance(CovKind::diagonal, 2, v);
  const RngStream root{9, 0};
  RunningMean m;
  for (int i = 0; i < 100000; ++i) {
    const double y = sample_task(root.substream(i), cov, 1, 0).y_q;
    m.add(y * y);
  }
  EXPECT_NEAR(m.mean(), 5.0, 0.25);
}

TEST(Assemble, CleanLayout) {
  const PromptEmbedding pe = assemble_clean(hand_task());
  Mat expected(2, 2);
  expected << 1, 3, 2, 0;
  EXPECT_EQ(pe.E, expected);
  EXPECT_EQ(pe.ctx, 1);
}

TEST(Assemble, AdversarialLayout) {
  const PromptEmbedding pe = assemble_adversarial(hand_task(), {Mat::Constant(1, 1, 0.5), 0.5});
  Mat expected(2, 3);
  expected << 1, 1.5, 3, 2, 2, 0;
  EXPECT_EQ(pe.E, expected);
  EXPECT_EQ(pe.ctx, 2);
}

TEST(Assemble, ZeroPerturbationAgreesWithClean) {
  const TaskSample t = sample_task(RngStream{2, 0}, make_covariance(CovKind::identity, 3), 4, 2);
  const PromptEmbedding clean = assemble_clean(t);
  const PromptEmbedding adv = assemble_adversarial(t, {Mat::Zero(3, 2), 0.0});
  EXPECT_EQ(adv.E.leftCols(4), clean.E.leftCols(4));
  EXPECT_EQ(adv.E.col(6), clean.E.col(4));
  EXPECT_EQ(adv.E(3, 6), 0.0);
}

TEST(Assemble, NoSuffixMatchesClean) {
  const TaskSample t = sample_task(RngStream{2, 1}, make_covariance(CovKind::identity, 2), 3, 0);
  EXPECT_EQ(assemble_adversarial(t, {Mat::Zero(2, 0), 1.0}).E, assemble_clean(t).E);
  EXPECT_THROW(assemble_adversarial(t, {Mat::Zero(2, 1), 1.0}), DimensionMismatch);
}

TEST(Project, RadialScaling) {
  Mat D(2, 3);
  D << 2, 0.3, 0, 0, 0.4, 0;
  const Perturbation p = project_perturbation(D, 1.0);
  EXPECT_NEAR(p.Delta(0, 0), 1.0, 1e-15);
  EXPECT_EQ(p.Delta.col(1), D.col(1));
  EXPECT_EQ(p.Delta.col(2), D.col(2));
  EXPECT_EQ(project_perturbation(D, 0.0).Delta.norm(), 0.0);
}

TEST(Project, IdempotentAndNonExpanding) {
  auto eng = RngStream{3, 0}.engine();
  for (int k = 0; k < 50; ++k) {
    const Mat D = checks::random_matrix(eng, 3, 4, 2.0);
    const Perturbation p = project_perturbation(D, 1.3);
    for (int j = 0; j < 4; ++j) {
      EXPECT_LE(p.Delta.col(j).norm(), 1.3 + 1e-12);
      EXPECT_LE(p.Delta.col(j).norm(), D.col(j).norm() + 1e-15);
    }
    EXPECT_LE((project_perturbation(p.Delta, 1.3).Delta - p.Delta).norm(), 1e-14);
  }
}
