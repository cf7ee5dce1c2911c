#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "advicl/attack.hpp"
#include "advicl/harness.hpp"
#include "advicl/lsa.hpp"
#include "advicl/surrogate.hpp"
#include "advicl/theory.hpp"
#include "advicl/trainer.hpp"
#include "advicl/verify.hpp"

namespace fs = std::filesystem;
using advicl::json;

namespace {

json matrix_json(const advicl::Mat& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

advicl::ExperimentConfig load(const std::string& path, const std::optional<std::uint64_t>& seed) {
  auto cfg = advicl::load_config(path);
  if (seed) cfg.seed = *seed;
  return cfg;
}

void write_file(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw advicl::ConfigError("cannot write " + path.string());
  out << content;
}

int cmd_sweep(const advicl::ExperimentConfig& cfg) {
  const auto records = advicl::run_sweep(cfg);
  std::ostringstream csv;
  advicl::write_sweep_csv(csv, records);
  const fs::path dir = cfg.output_dir;
  write_file(dir / "sweep.csv", csv.str());
  write_file(dir / "summary.json", advicl::sweep_summary(cfg, records).dump(2) + "\n");
  std::cout << csv.str();
  std::cerr << "wrote " << (dir / "sweep.csv").string() << " and " << (dir / "summary.json").string() << "\n";
  return 0;
}

int cmd_train(const advicl::ExperimentConfig& cfg, const std::string& mode_name) {
  const auto mode = advicl::train_mode_from_string(mode_name);
  const int m_train = cfg.m_train_list.front();
  const auto cov = cfg.covariance();
  const auto rc = advicl::make_regime(cfg.N, m_train, cfg.eps, cov);
  const auto init = cfg.init_for(rc);
  const auto tc = cfg.train_config(mode);
  advicl::LsaParams params;
  advicl::TrajectoryDiagnostics diag;
  switch (mode) {
    case advicl::TrainMode::restricted_analytic: {
      auto [r, dg] = advicl::train_surrogate_restricted(init, rc, tc);
      params = advicl::embed_restricted(r);
      diag = std::move(dg);
      break;
    }
    case advicl::TrainMode::full_mc:
      std::tie(params, diag) = advicl::train_surrogate_full(init, rc, tc);
      break;
    case advicl::TrainMode::minimax_empirical:
      std::tie(params, diag) = advicl::train_minimax_empirical(init, cov, cfg.N, m_train, cfg.eps, tc);
      break;
  }
  const std::string tag = advicl::to_string(mode);
  const fs::path dir = cfg.output_dir;
  std::ostringstream csv;
  advicl::write_trajectory_csv(csv, diag);
  write_file(dir / ("trajectory_" + tag + ".csv"), csv.str());
  write_file(dir / ("checkpoint_" + tag + ".json"), advicl::to_json(params).dump() + "\n");

  const auto cf = advicl::closed_form_solution(rc);
  const advicl::Mat product = params.V().w22() * params.KQ().W11();
  json out = {{"mode", tag},
              {"m_train", m_train},
              {"steps", diag.steps},
              {"eta", diag.eta},
              {"converged", diag.converged},
              {"theorem_conditions_met", diag.theorem_conditions_met},
              {"step_probe_ok", diag.step_probe_ok},
              {"final_loss", diag.records.empty() ? json(nullptr) : json(diag.records.back().loss)},
              {"product_rel_err", advicl::relative_frobenius_error(product, cf.product)},
              {"off_v21", params.V().w21().norm()},
              {"off_kq21", params.KQ().w21().norm()}};
  if (diag.noise_floor_v21) {
    out["noise_floor_v21"] = *diag.noise_floor_v21;
    out["noise_floor_kq21"] = *diag.noise_floor_kq21;
  }
  std::cout << out.dump(2) << "\n";
  return 0;
}

int cmd_attack_eval(const advicl::ExperimentConfig& cfg, const std::string& checkpoint) {
  std::ifstream in(checkpoint);
  if (!in) throw advicl::ConfigError("cannot open checkpoint " + checkpoint);
  const auto params = advicl::params_from_json(json::parse(in));
  if (params.d != cfg.d) throw advicl::DimensionMismatch("checkpoint d does not match config d");
  const auto cov = cfg.covariance();
  json rows = json::array();
  for (int m : cfg.m_test_list) {
    const advicl::RngStream stream = advicl::RngStream{cfg.seed, 0x6576616cULL}.substream(static_cast<std::uint64_t>(m));
    const auto est = advicl::estimate_robust_error(params, cov, cfg.N, cfg.attack_config(m, stream), cfg.n_tasks_mc);
    rows.push_back({{"m_test", m},
                    {"robust_err", est.mean},
                    {"robust_err_se", est.se},
                    {"exact_attack", est.exact},
                    {"estimate", est.exact ? "exact" : "lower_bound"}});
  }
  std::cout << json{{"results", rows}}.dump(2) << "\n";
  return 0;
}

int cmd_theory(const advicl::ExperimentConfig& cfg) {
  const auto cov = cfg.covariance();
  json regimes = json::array();
  for (int m_train : cfg.m_train_list) {
    const auto rc = advicl::make_regime(cfg.N, m_train, cfg.eps, cov);
    const auto cf = advicl::closed_form_solution(rc);
    const auto init = cfg.init_for(rc);
    const auto nm = advicl::nu_mu_constants(init, rc);
    json bounds = json::array();
    for (int m_test : cfg.m_test_list) {
      const auto rt = advicl::make_regime(cfg.N, m_test, cfg.eps, cov);
      json b = {{"m_test", m_test}, {"bound", advicl::robust_bound(rc, rt)}};
      if (m_train >= 1) {
        const auto [t1, t2, t3] = advicl::corollary_terms(rc, rt);
        b["corollary_terms"] = {t1, t2, t3};
      }
      bounds.push_back(b);
    }
    regimes.push_back({{"m_train", m_train},
                       {"gamma", matrix_json(rc.gamma)},
                       {"psi", rc.psi},
                       {"product", matrix_json(cf.product)},
                       {"w22", cf.w22},
                       {"W11", matrix_json(cf.W11)},
                       {"sigma_threshold", advicl::sigma_threshold(rc)},
                       {"sigma", init.sigma},
                       {"nu", nm.nu},
                       {"mu", nm.mu},
                       {"loss_min", advicl::minimizer_value(rc)},
                       {"long_regime_violated",
                        advicl::violates_length_assumption(cfg.d, cfg.N, m_train, cfg.eps)},
                       {"bounds", bounds}});
  }
  std::cout << json{{"regimes", regimes}}.dump(2) << "\n";
  return 0;
}

int cmd_verify(const advicl::ExperimentConfig& cfg, const std::string& fault) {
  const auto rep = advicl::verify_all(cfg, fault);
  const std::string text = rep.to_json().dump(2) + "\n";
  write_file(fs::path(cfg.output_dir) / "verify.json", text);
  std::cout << text;
  return rep.pass() ? 0 : 1;
}

int cmd_correlate(const std::string& csv_path, std::uint64_t seed) {
  std::ifstream in(csv_path);
  if (!in) throw advicl::ConfigError("cannot open " + csv_path);
  const auto recs = advicl::read_sweep_csv(in);
  const auto c = advicl::correlation(recs, seed);
  std::cout << json{{"pcc", c.pcc}, {"p_value", c.p_value}, {"n_points", c.n_points}, {"method", c.method}}.dump(2)
            << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adversarial in-context learning lab for linear self-attention"};
  app.require_subcommand(1);
  std::optional<std::uint64_t> seed;
  app.add_option("--seed", seed, "override the config seed");
  app.set_version_flag("--version", std::string(ADVICL_VERSION));

  std::string config, mode = "restricted", checkpoint, csv, fault;
  auto* sweep = app.add_subcommand("sweep", "run the (M_train, M_test) grid");
  sweep->add_option("--config", config, "config JSON")->required();
  auto* train = app.add_subcommand("train", "train from the small-scale initialization");
  train->add_option("--config", config, "config JSON")->required();
  train->add_option("--mode", mode, "restricted | full | minimax")
      ->check(CLI::IsMember({"restricted", "full", "minimax"}));
  auto* attack = app.add_subcommand("attack-eval", "robust error of a checkpoint for each m_test");
  attack->add_option("--config", config, "config JSON")->required();
  attack->add_option("--checkpoint", checkpoint, "checkpoint JSON")->required();
  auto* theory = app.add_subcommand("theory", "closed-form quantities as JSON");
  theory->add_option("--config", config, "config JSON")->required();
  auto* verify = app.add_subcommand("verify", "run every property check");
  verify->add_option("--config", config, "config JSON")->required();
  verify->add_option("--fault", fault, "inject a defect (gradient_sign)");
  auto* correlate = app.add_subcommand("correlate", "PCC and permutation p-value from a sweep CSV");
  correlate->add_option("--csv", csv, "sweep CSV")->required();

  CLI11_PARSE(app, argc, argv);
  try {
    if (*sweep) return cmd_sweep(load(config, seed));
    if (*train) return cmd_train(load(config, seed), mode);
    if (*attack) return cmd_attack_eval(load(config, seed), checkpoint);
    if (*theory) return cmd_theory(load(config, seed));
    if (*verify) return cmd_verify(load(config, seed), fault);
    if (*correlate) return cmd_correlate(csv, seed.value_or(0));
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
