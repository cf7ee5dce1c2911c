#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "advicl/attack.hpp"
#include "advicl/errors.hpp"
#include "advicl/format.hpp"
#include "advicl/lsa.hpp"
#include "advicl/stats.hpp"
#include "advicl/stochastics.hpp"
#include "advicl/surrogate.hpp"
#include "advicl/theory.hpp"
#include "advicl/trainer.hpp"

#ifndef ADVICL_VERSION
#define ADVICL_VERSION "0.0.0"
#endif

namespace advicl {

using nlohmann::json;

struct ExperimentConfig {
  int d = 4;
  int N = 64;
  CovKind cov_kind = CovKind::identity;
  std::vector<double> cov_values;
  double cov_jitter = 0.0;
  double eps = 2.0;
  std::vector<int> m_train_list{1, 2, 4, 8};
  std::vector<int> m_test_list{1, 2, 4, 8, 16, 32};
  int n_tasks_mc = 10000;

  int pga_steps = 100;
  double step_size = 0.0;
  int restarts = 8;

  double eta = 0.0;
  long max_steps = 200000;
  double grad_tol = 1e-8;
  int batch_tasks = 256;
  long diag_every = 100;
  Integrator integrator = Integrator::rk4;
  double sigma_fraction = 0.5;

  std::optional<std::vector<double>> theta;
  std::uint64_t seed = 20240601;
  std::string output_dir = "results";

  CovarianceSpec covariance() const { return make_covariance(cov_kind, d, cov_values, cov_jitter); }

  Mat theta_matrix() const {
    if (!theta) return default_theta(d);
    if (static_cast<int>(theta->size()) != d * d) throw ConfigError("theta needs d*d entries");
    Mat t(d, d);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) t(i, j) = (*theta)[i * d + j];
    return t;
  }

  /// Small-scale initialization at sigma = sigma_fraction * threshold of the regime.
  InitSpec init_for(const RegimeConstants& rc) const { return {sigma_fraction * sigma_threshold(rc), theta_matrix()}; }

  TrainConfig train_config(TrainMode mode) const {
    TrainConfig c;
    c.eta = eta;
    c.max_steps = max_steps;
    c.grad_tol = grad_tol;
    c.mode = mode;
    c.integrator = integrator;
    c.batch_tasks = batch_tasks;
    c.diag_every = diag_every;
    c.seed = RngStream{seed, 0x747261696eULL};
    c.attack_steps = pga_steps;
    c.attack_restarts = restarts;
    return c;
  }

  AttackConfig attack_config(int M, const RngStream& stream) const {
    return {eps, M, pga_steps, step_size, restarts, stream};
  }
};

namespace detail {

inline void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [key, _] : j.items())
    if (!allowed.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
}

template <typename T>
void read_opt(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
  }
}

}  // namespace detail

inline ExperimentConfig config_from_json(const json& j) {
  detail::reject_unknown(j,
                         {"d", "N", "cov", "eps", "m_train_list", "m_test_list", "n_tasks_mc", "attack", "train",
                          "theta", "seed", "output_dir"},
                         "config");
  ExperimentConfig c;
  detail::read_opt(j, "d", c.d);
  detail::read_opt(j, "N", c.N);
  detail::read_opt(j, "eps", c.eps);
  detail::read_opt(j, "m_train_list", c.m_train_list);
  detail::read_opt(j, "m_test_list", c.m_test_list);
  detail::read_opt(j, "n_tasks_mc", c.n_tasks_mc);
  detail::read_opt(j, "seed", c.seed);
  detail::read_opt(j, "output_dir", c.output_dir);
  if (j.contains("cov")) {
    const json& cj = j.at("cov");
    detail::reject_unknown(cj, {"kind", "values", "jitter"}, "cov");
    std::string kind = "identity";
    detail::read_opt(cj, "kind", kind);
    c.cov_kind = cov_kind_from_string(kind);
    detail::read_opt(cj, "values", c.cov_values);
    detail::read_opt(cj, "jitter", c.cov_jitter);
  }
  if (j.contains("attack")) {
    const json& aj = j.at("attack");
    detail::reject_unknown(aj, {"pga_steps", "step_size", "restarts"}, "attack");
    detail::read_opt(aj, "pga_steps", c.pga_steps);
    detail::read_opt(aj, "step_size", c.step_size);
    detail::read_opt(aj, "restarts", c.restarts);
  }
  if (j.contains("train")) {
    const json& tj = j.at("train");
    detail::reject_unknown(tj,
                           {"eta", "max_steps", "grad_tol", "batch_tasks", "diag_every", "integrator",
                            "sigma_fraction"},
                           "train");
    detail::read_opt(tj, "eta", c.eta);
    detail::read_opt(tj, "max_steps", c.max_steps);
    detail::read_opt(tj, "grad_tol", c.grad_tol);
    detail::read_opt(tj, "batch_tasks", c.batch_tasks);
    detail::read_opt(tj, "diag_every", c.diag_every);
    std::string integ = "rk4";
    detail::read_opt(tj, "integrator", integ);
    c.integrator = integrator_from_string(integ);
    detail::read_opt(tj, "sigma_fraction", c.sigma_fraction);
  }
  if (j.contains("theta")) c.theta = j.at("theta").get<std::vector<double>>();

  if (c.d < 1 || c.N < 1) throw ConfigError("d and N must be >= 1");
  if (c.eps < 0.0) throw ConfigError("eps must be >= 0");
  if (c.n_tasks_mc < 2) throw ConfigError("n_tasks_mc must be >= 2");
  if (c.m_train_list.empty() || c.m_test_list.empty()) throw ConfigError("M lists must be non-empty");
  for (int m : c.m_train_list)
    if (m < 0) throw ConfigError("m_train_list entries must be >= 0");
  for (int m : c.m_test_list)
    if (m < 0) throw ConfigError("m_test_list entries must be >= 0");
  if (c.pga_steps < 1 || c.restarts < 1) throw ConfigError("pga_steps and restarts must be >= 1");
  if (c.max_steps < 1 || c.diag_every < 1 || c.batch_tasks < 2 || !(c.grad_tol > 0.0))
    throw ConfigError("invalid train settings");
  if (!(c.sigma_fraction > 0.0)) throw ConfigError("sigma_fraction must be > 0");
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return config_from_json(j);
}

inline json to_json(const ExperimentConfig& c) {
  json cov = {{"kind", to_string(c.cov_kind)}, {"values", c.cov_values}, {"jitter", c.cov_jitter}};
  json j = {{"d", c.d},
            {"N", c.N},
            {"cov", cov},
            {"eps", c.eps},
            {"m_train_list", c.m_train_list},
            {"m_test_list", c.m_test_list},
            {"n_tasks_mc", c.n_tasks_mc},
            {"attack", {{"pga_steps", c.pga_steps}, {"step_size", c.step_size}, {"restarts", c.restarts}}},
            {"train",
             {{"eta", c.eta},
              {"max_steps", c.max_steps},
              {"grad_tol", c.grad_tol},
              {"batch_tasks", c.batch_tasks},
              {"diag_every", c.diag_every},
              {"integrator", c.integrator == Integrator::rk4 ? "rk4" : "euler"},
              {"sigma_fraction", c.sigma_fraction}}},
            {"seed", c.seed},
            {"output_dir", c.output_dir}};
  if (c.theta) j["theta"] = *c.theta;
  return j;
}

/// FNV-1a over the canonical JSON of the config, ignoring output_dir.
inline std::string config_hash(const ExperimentConfig& c) {
  json j = to_json(c);
  j.erase("output_dir");
  const std::string s = j.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

struct SweepRecord {
  int m_train = 0;
  int m_test = 0;
  double ratio = std::numeric_limits<double>::quiet_NaN();
  double robust_err = std::numeric_limits<double>::quiet_NaN();
  double robust_err_se = std::numeric_limits<double>::quiet_NaN();
  double theory_bound = std::numeric_limits<double>::quiet_NaN();
  bool used_exact_attack = false;
  std::string flag;

  bool has_ratio() const { return m_train >= 1; }
  bool failed() const { return flag.rfind("error", 0) == 0; }
  bool bound_holds() const { return robust_err + 3.0 * robust_err_se <= theory_bound; }
};

namespace detail {

inline void add_flag(std::string& flags, const std::string& f) {
  if (!flags.empty()) flags += ';';
  flags += f;
}

}  // namespace detail

/// One record per (m_train, m_test) cell. The attacked model is the closed-form
/// optimum for m_train, cross-checked against gradient-flow training. Tasks for
/// a given m_test are shared across m_train values.
inline std::vector<SweepRecord> run_sweep(const ExperimentConfig& cfg) {
  const CovarianceSpec cov = cfg.covariance();
  std::vector<SweepRecord> out;
  for (int m_train : cfg.m_train_list) {
    std::string train_flags;
    std::optional<LsaParams> model;
    std::optional<RegimeConstants> rc_train;
    std::string train_error;
    try {
      rc_train = make_regime(cfg.N, m_train, cfg.eps, cov);
      const ClosedFormSolution cf = closed_form_solution(*rc_train);
      const auto [trained, diag] =
          train_surrogate_restricted(cfg.init_for(*rc_train), *rc_train, cfg.train_config(TrainMode::restricted_analytic));
      if (relative_frobenius_error(trained.product(), cf.product) > 1e-4) detail::add_flag(train_flags, "train_mismatch");
      model = embed_restricted(cf.restricted());
    } catch (const std::exception& e) {
      train_error = e.what();
    }
    for (int m_test : cfg.m_test_list) {
      SweepRecord rec;
      rec.m_train = m_train;
      rec.m_test = m_test;
      if (m_train >= 1) rec.ratio = std::sqrt(static_cast<double>(m_test)) / static_cast<double>(m_train);
      rec.flag = train_flags;
      if (m_train == 0) detail::add_flag(rec.flag, "no_ratio");
      if (violates_length_assumption(cfg.d, cfg.N, std::max(m_train, m_test), cfg.eps))
        detail::add_flag(rec.flag, "long_regime");
      if (!model) {
        rec.flag = "error:" + train_error;
        out.push_back(rec);
        continue;
      }
      try {
        const RegimeConstants rc_test = make_regime(cfg.N, m_test, cfg.eps, cov);
        const RngStream stream = RngStream{cfg.seed, 0x7377656570ULL}.substream(static_cast<std::uint64_t>(m_test));
        const RobustErrorEstimate est =
            estimate_robust_error(*model, cov, cfg.N, cfg.attack_config(m_test, stream), cfg.n_tasks_mc);
        rec.robust_err = est.mean;
        rec.robust_err_se = est.se;
        rec.used_exact_attack = est.exact;
        rec.theory_bound = robust_bound(*rc_train, rc_test);
        if (!rec.bound_holds()) detail::add_flag(rec.flag, "bound_violated");
      } catch (const std::exception& e) {
        rec.flag = std::string("error:") + e.what();
      }
      out.push_back(rec);
    }
  }
  return out;
}

inline const char* sweep_csv_header() {
  return "m_train,m_test,ratio,robust_err,robust_err_se,theory_bound,used_exact_attack,flag";
}

inline void write_sweep_csv(std::ostream& os, const std::vector<SweepRecord>& recs) {
  os << sweep_csv_header() << '\n';
  for (const auto& r : recs) {
    os << r.m_train << ',' << r.m_test << ',' << (r.has_ratio() ? fmt_double(r.ratio) : std::string{}) << ','
       << fmt_double(r.robust_err) << ',' << fmt_double(r.robust_err_se) << ',' << fmt_double(r.theory_bound) << ','
       << (r.used_exact_attack ? "true" : "false") << ',' << r.flag << '\n';
  }
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

inline double parse_double(const std::string& s) {
  if (s.empty() || s == "nan") return std::numeric_limits<double>::quiet_NaN();
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw DegenerateInput("bad number '" + s + "'");
    return v;
  } catch (const std::logic_error&) {
    throw DegenerateInput("bad number '" + s + "'");
  }
}

}  // namespace detail

inline std::vector<SweepRecord> read_sweep_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != sweep_csv_header()) throw DegenerateInput("unexpected sweep CSV header");
  std::vector<SweepRecord> recs;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto cells = detail::split_csv_line(line);
    if (cells.size() < 7) throw DegenerateInput("short sweep CSV row");
    cells.resize(8);
    SweepRecord r;
    r.m_train = std::stoi(cells[0]);
    r.m_test = std::stoi(cells[1]);
    r.ratio = detail::parse_double(cells[2]);
    r.robust_err = detail::parse_double(cells[3]);
    r.robust_err_se = detail::parse_double(cells[4]);
    r.theory_bound = detail::parse_double(cells[5]);
    r.used_exact_attack = cells[6] == "true";
    r.flag = cells[7];
    recs.push_back(r);
  }
  return recs;
}

/// PCC between robust_err and sqrt(m_test)/m_train over rows with m_train >= 1.
inline CorrelationReport correlation(const std::vector<SweepRecord>& recs, std::uint64_t seed = 0) {
  std::vector<double> ratio, err;
  for (const auto& r : recs) {
    if (!r.has_ratio() || r.failed() || !std::isfinite(r.robust_err)) continue;
    ratio.push_back(r.ratio);
    err.push_back(r.robust_err);
  }
  if (ratio.size() < 3) throw DegenerateInput("correlation needs at least 3 usable records");
  return permutation_correlation(ratio, err, RngStream{seed, 0x636f7272ULL});
}

inline json to_json(const SweepRecord& r) {
  auto num = [](double x) { return std::isfinite(x) ? json(x) : json(nullptr); };
  return {{"m_train", r.m_train},
          {"m_test", r.m_test},
          {"ratio", r.has_ratio() ? num(r.ratio) : json(nullptr)},
          {"robust_err", num(r.robust_err)},
          {"robust_err_se", num(r.robust_err_se)},
          {"theory_bound", num(r.theory_bound)},
          {"used_exact_attack", r.used_exact_attack},
          {"flag", r.flag}};
}

inline json sweep_summary(const ExperimentConfig& cfg, const std::vector<SweepRecord>& recs) {
  json j;
  j["config_hash"] = config_hash(cfg);
  j["records"] = json::array();
  for (const auto& r : recs) j["records"].push_back(to_json(r));
  try {
    const CorrelationReport c = correlation(recs, cfg.seed);
    j["correlation"] = {{"pcc", c.pcc}, {"p_value", c.p_value}, {"method", c.method}, {"n_points", c.n_points}};
  } catch (const DegenerateInput& e) {
    j["correlation"] = {{"pcc", nullptr}, {"p_value", nullptr}, {"method", "permutation(10000)"}, {"error", e.what()}};
  }
  j["environment"] = {{"version", ADVICL_VERSION}};
  return j;
}

}  // namespace advicl
