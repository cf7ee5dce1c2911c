#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "advicl/checks.hpp"
#include "advicl/harness.hpp"

namespace advicl {

struct VerifyReport {
  std::vector<checks::CheckResult> results;

  bool pass() const {
    for (const auto& r : results)
      if (!r.pass) return false;
    return !results.empty();
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["pass"] = pass();
    j["checks"] = nlohmann::json::array();
    for (const auto& r : results) j["checks"].push_back(checks::to_json(r));
    return j;
  }
};

/// Runs every property suite. `fault` names a deliberate defect to inject
/// ("gradient_sign" negates the analytic W11 gradient); empty means none.
inline VerifyReport verify_all(const ExperimentConfig& cfg, const std::string& fault = "") {
  if (!fault.empty() && fault != "gradient_sign") throw ConfigError("unknown fault '" + fault + "'");
  VerifyReport rep;
  auto add = [&](checks::CheckResult r) { rep.results.push_back(std::move(r)); };
  const RngStream root{cfg.seed, 0x766572696679ULL};

  for (int d : {1, 2, 4}) {
    add(checks::moment_fourth_order(d, 100000, root.substream(10 + d)));
    add(checks::moment_quadratic_form(d, 100000, root.substream(20 + d)));
  }
  add(checks::gradient_exactness(20, 4, 1e-6, root.substream(30), fault == "gradient_sign"));
  add(checks::surrogate_upper_bound(10, 10, 2000, root.substream(31), 50, 4));
  add(checks::exact_dominates_pga(200, root.substream(32)));
  add(checks::pga_matches_grid(200, root.substream(33)));
  add(checks::zero_gradient({2, 8, 2, 1.0}, 100, 256, root.substream(34)));

  const TrainConfig tc = cfg.train_config(TrainMode::restricted_analytic);
  for (int m : cfg.m_train_list) {
    if (m < 1) continue;
    const auto t = checks::train_case({cfg.d, cfg.N, m, cfg.eps}, cfg.sigma_fraction, tc);
    add(checks::closed_form_convergence(t, 1e-4, 300.0));
    add(checks::trajectory_lemmas(t));
  }

  const auto records = run_sweep(cfg);
  add(checks::robust_bound_cells(records));
  add(checks::robust_bound_hand_cell());
  try {
    add(checks::correlation_sign(records, cfg.seed));
  } catch (const std::exception& e) {
    add({"correlation_sign", false, -1.0, e.what()});
  }
  return rep;
}

}  // namespace advicl
