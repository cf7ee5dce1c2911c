#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "advicl/harness.hpp"
#include "advicl/verify.hpp"

using namespace advicl;

namespace {

ExperimentConfig small_config() {
  ExperimentConfig c;
  c.d = 2;
  c.N = 16;
  c.eps = 1.0;
  c.m_train_list = {0, 1, 2, 4};
  c.m_test_list = {0, 1, 4, 16};
  c.n_tasks_mc = 2000;
  c.seed = 77;
  return c;
}

}  // namespace

TEST(Config, RejectsUnknownKeys) {
  EXPECT_THROW(config_from_json(nlohmann::json::parse(R"({"d": 2, "bogus": 1})")), ConfigError);
  EXPECT_THROW(config_from_json(nlohmann::json::parse(R"({"train": {"etaa": 1}})")), ConfigError);
  EXPECT_THROW(config_from_json(nlohmann::json::parse(R"({"cov": {"kind": "weird"}})")), ConfigError);
  EXPECT_THROW(config_from_json(nlohmann::json::parse(R"({"n_tasks_mc": 1})")), ConfigError);
}

TEST(Config, RoundTripAndHash) {
  const ExperimentConfig c = small_config();
  const ExperimentConfig back = config_from_json(to_json(c));
  EXPECT_EQ(config_hash(back), config_hash(c));
  ExperimentConfig moved = c;
  moved.output_dir = "elsewhere";
  EXPECT_EQ(config_hash(moved), config_hash(c));
  ExperimentConfig reseeded = c;
  reseeded.seed = 78;
  EXPECT_NE(config_hash(reseeded), config_hash(c));
  EXPECT_EQ(config_hash(c).size(), 16u);
}

TEST(Sweep, RecordsFlagsAndBounds) {
  const auto recs = run_sweep(small_config());
  ASSERT_EQ(recs.size(), 16u);
  for (const auto& r : recs) {
    EXPECT_FALSE(r.failed()) << r.flag;
    EXPECT_TRUE(r.used_exact_attack);
    EXPECT_TRUE(r.bound_holds());
    if (r.m_train == 0) {
      EXPECT_TRUE(std::isnan(r.ratio));
      EXPECT_NE(r.flag.find("no_ratio"), std::string::npos);
    } else {
      EXPECT_DOUBLE_EQ(r.ratio, std::sqrt(static_cast<double>(r.m_test)) / r.m_train);
    }
    if (r.m_test > 4 * 16 || r.m_train > 4 * 16) EXPECT_NE(r.flag.find("long_regime"), std::string::npos);
  }
}

TEST(Sweep, NoSuffixAtTestIsCleanRisk) {
  ExperimentConfig c = small_config();
  c.m_train_list = {2};
  c.m_test_list = {0};
  const auto recs = run_sweep(c);
  ASSERT_EQ(recs.size(), 1u);
  EXPECT_EQ(recs[0].ratio, 0.0);
  const auto cov = c.covariance();
  const auto model = embed_restricted(closed_form_solution(make_regime(c.N, 2, c.eps, cov)).restricted());
  const RngStream stream = RngStream{c.seed, 0x7377656570ULL}.substream(0);
  RunningMean clean;
  for (int i = 0; i < c.n_tasks_mc; ++i) {
    const TaskSample t = sample_task(stream.substream(2 * i), cov, c.N, 0);
    const double r = predict(model, assemble_clean(t)) - t.y_q;
    clean.add(0.5 * r * r);
  }
  EXPECT_DOUBLE_EQ(recs[0].robust_err, clean.mean());
}

TEST(Sweep, CsvIsStableAndParses) {
  const auto cfg = small_config();
  std::ostringstream a, b;
  write_sweep_csv(a, run_sweep(cfg));
  write_sweep_csv(b, run_sweep(cfg));
  EXPECT_EQ(a.str(), b.str());
  EXPECT_EQ(a.str().substr(0, a.str().find('\n')),
            "m_train,m_test,ratio,robust_err,robust_err_se,theory_bound,used_exact_attack,flag");
  std::istringstream in(a.str());
  const auto back = read_sweep_csv(in);
  const auto orig = run_sweep(cfg);
  ASSERT_EQ(back.size(), orig.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(back[i].robust_err, orig[i].robust_err);
    EXPECT_EQ(back[i].theory_bound, orig[i].theory_bound);
    EXPECT_EQ(back[i].flag, orig[i].flag);
  }
}

TEST(Sweep, GoldenRow) {
  std::vector<SweepRecord> recs(2);
  recs[0] = {1, 4, 2.0, 0.1, 0.25, 3.5, true, ""};
  recs[1] = {0, 2, std::nan(""), 1.0 / 3.0, 0.01, 4.0, false, "no_ratio;long_regime"};
  std::ostringstream os;
  write_sweep_csv(os, recs);
  EXPECT_EQ(os.str(),
            "m_train,m_test,ratio,robust_err,robust_err_se,theory_bound,used_exact_attack,flag\n"
            "1,4,2,0.1,0.25,3.5,true,\n"
            "0,2,,0.3333333333333333,0.01,4,false,no_ratio;long_regime\n");
}

TEST(Summary, Schema) {
  const auto cfg = small_config();
  const auto j = sweep_summary(cfg, run_sweep(cfg));
  EXPECT_EQ(j["config_hash"], config_hash(cfg));
  EXPECT_EQ(j["records"].size(), 16u);
  EXPECT_EQ(j["correlation"]["method"], "permutation(10000)");
  EXPECT_TRUE(j["environment"].contains("version"));
  EXPECT_TRUE(j["records"][0]["ratio"].is_null());
}

TEST(Correlation, PerfectLine) {
  std::vector<SweepRecord> recs;
  for (int k = 1; k <= 6; ++k) {
    SweepRecord r;
    r.m_train = 1;
    r.m_test = k * k;
    r.ratio = k;
    r.robust_err = 2.0 * k;
    recs.push_back(r);
  }
  const auto c = correlation(recs, 5);
  EXPECT_NEAR(c.pcc, 1.0, 1e-12);
  EXPECT_LE(c.p_value, 0.01);
  EXPECT_EQ(c.method, "permutation(10000)");
  for (auto& r : recs) r.robust_err = 3.0;
  EXPECT_THROW(correlation(recs, 5), DegenerateInput);
}

TEST(Correlation, NeedsThreePoints) {
  std::vector<SweepRecord> recs(2);
  recs[0] = {1, 1, 1.0, 0.1, 0.0, 1.0, true, ""};
  recs[1] = {1, 4, 2.0, 0.2, 0.0, 1.0, true, ""};
  EXPECT_THROW(correlation(recs, 1), DegenerateInput);
}

TEST(Correlation, PermutationPValueCalibrated) {
  const std::vector<double> x{1, 2, 3, 4, 5, 6, 7, 8};
  const std::vector<double> y{3, 1, 4, 1.5, 5, 9, 2, 6};
  const auto rep = permutation_correlation(x, y, RngStream{9, 9});
  EXPECT_GT(rep.p_value, 0.05);
  EXPECT_LT(rep.p_value, 1.0);
  EXPECT_EQ(rep.n_points, 8);
}

TEST(Verify, FaultInjectionFailsGradientCheck) {
  ExperimentConfig c = small_config();
  c.m_train_list = {1};
  c.m_test_list = {1, 2, 4};
  c.n_tasks_mc = 500;
  const auto rep = verify_all(c, "gradient_sign");
  EXPECT_FALSE(rep.pass());
  bool saw = false;
  for (const auto& r : rep.results) {
    if (r.name == "gradient_exactness") {
      saw = true;
      EXPECT_FALSE(r.pass);
    }
  }
  EXPECT_TRUE(saw);
  const auto j = rep.to_json();
  EXPECT_FALSE(j["pass"].get<bool>());
  for (const auto& entry : j["checks"]) {
    EXPECT_TRUE(entry.contains("name"));
    EXPECT_TRUE(entry.contains("pass"));
    EXPECT_TRUE(entry.contains("slack"));
  }
  EXPECT_THROW(verify_all(c, "nonsense"), ConfigError);
}
