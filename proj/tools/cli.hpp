// Command-line harness: `run`, `certify` (alias of run --experiment certify)
// and `report`. Kept header-only so the tests can drive it in-process.
#pragma once

#include "proxcmo/proxcmo.hpp"
#include "proxcmo/io.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace proxcmo::cli {

using json = nlohmann::json;
namespace fs = std::filesystem;

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitIntegrator = 2;

/// Environment variable that overrides the configured output directory.
inline constexpr const char *kOutputDirEnv = "PROXCMO_OUTPUT_DIR";

/// Invalid configuration; the message names the offending field.
class ConfigError : public Error {
public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct LassoParams {
  Eigen::Index n = 40, m = 44, s = 8;
  double rho = 1.0;
};

struct CertifyParams {
  Theorem theorem = Theorem::T3;
  double mf = 1.0, lf = 1.0, a1 = 1.0, epsilon = 0.1;
};

struct RunConfig {
  std::string experiment;
  std::vector<Variant> methods;
  std::uint64_t seed = 1;
  int runs = 1;
  std::string output_dir = "proxcmo_out";
  json gains = json::object();
  json method_gains = json::object();
  IntegratorConfig integrator;
  LassoParams lasso;
  SysidOptions sysid;
  CertifyParams certify;
  json custom = json::object();
  /// Fully resolved configuration, echoed into the summary.
  json echo;
};

namespace detail {

inline const std::set<std::string> &gain_keys() {
  static const std::set<std::string> k = {"mu", "kp", "ki", "k1", "k2", "k3", "gamma"};
  return k;
}

inline void check_keys(const json &obj, const std::string &where,
                       const std::set<std::string> &allowed) {
  if (!obj.is_object())
    throw ConfigError("config field '" + where + "': expected an object");
  for (const auto &[key, value] : obj.items())
    if (!allowed.count(key))
      throw ConfigError("config field '" + where + (where.empty() ? "" : ".") + key +
                        "': unknown field");
}

inline double get_number(const json &obj, const std::string &key, const std::string &where,
                         double fallback) {
  if (!obj.contains(key))
    return fallback;
  const json &v = obj.at(key);
  if (!v.is_number())
    throw ConfigError("config field '" + where + "." + key + "': expected a number");
  return v.get<double>();
}

inline std::int64_t get_integer(const json &obj, const std::string &key,
                                const std::string &where, std::int64_t fallback) {
  if (!obj.contains(key))
    return fallback;
  const json &v = obj.at(key);
  if (!v.is_number_integer() && !v.is_number_unsigned())
    throw ConfigError("config field '" + where + "." + key + "': expected an integer");
  return v.get<std::int64_t>();
}

inline GainSet apply_gains(GainSet g, const json &obj, const std::string &where) {
  check_keys(obj, where, gain_keys());
  g.mu = get_number(obj, "mu", where, g.mu);
  g.kp = get_number(obj, "kp", where, g.kp);
  g.ki = get_number(obj, "ki", where, g.ki);
  g.k1 = get_number(obj, "k1", where, g.k1);
  g.k2 = get_number(obj, "k2", where, g.k2);
  g.k3 = get_number(obj, "k3", where, g.k3);
  g.gamma = get_number(obj, "gamma", where, g.gamma);
  return g;
}

inline Theorem parse_theorem(const std::string &s) {
  if (s == "t1") return Theorem::T1;
  if (s == "t3") return Theorem::T3;
  if (s == "t4") return Theorem::T4;
  throw ConfigError("config field 'certify.theorem': expected t1, t3 or t4, got '" + s + "'");
}

inline std::vector<Variant> default_methods(const std::string &experiment) {
  if (experiment == "lasso")
    return lasso_methods();
  if (experiment == "shidoku")
    return {Variant::StaticProxCMO, Variant::DynamicProxCMO, Variant::PICMO};
  if (experiment == "sysid")
    return {Variant::StaticProxCMO, Variant::DynamicProxCMO, Variant::PIPGD};
  if (experiment == "custom")
    return {Variant::DynamicProxCMO};
  return {};
}

inline Mat json_matrix(const json &v, const std::string &where) {
  if (!v.is_array() || v.empty() || !v[0].is_array())
    throw ConfigError("config field '" + where + "': expected a non-empty array of rows");
  const auto rows = static_cast<Eigen::Index>(v.size());
  const auto cols = static_cast<Eigen::Index>(v[0].size());
  Mat M(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const json &row = v[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols)
      throw ConfigError("config field '" + where + "': rows must have equal length");
    for (Eigen::Index j = 0; j < cols; ++j) {
      if (!row[static_cast<std::size_t>(j)].is_number())
        throw ConfigError("config field '" + where + "': entries must be numbers");
      M(i, j) = row[static_cast<std::size_t>(j)].get<double>();
    }
  }
  return M;
}

inline Vec json_vector(const json &v, const std::string &where) {
  if (!v.is_array())
    throw ConfigError("config field '" + where + "': expected an array");
  Vec out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!v[i].is_number())
      throw ConfigError("config field '" + where + "': entries must be numbers");
    out[static_cast<Eigen::Index>(i)] = v[i].get<double>();
  }
  return out;
}

} // namespace detail

/// Validate a configuration document and resolve defaults.
inline RunConfig parse_config(const json &doc) {
  using namespace detail;
  check_keys(doc, "", {"experiment", "method", "methods", "seed", "runs", "output_dir",
                       "gains", "method_gains", "integrator", "lasso", "sysid",
                       "certify", "custom"});
  RunConfig c;
  if (!doc.contains("experiment") || !doc.at("experiment").is_string())
    throw ConfigError("config field 'experiment': required string");
  c.experiment = doc.at("experiment").get<std::string>();
  static const std::set<std::string> experiments = {"lasso", "shidoku", "sysid", "certify",
                                                    "custom"};
  if (!experiments.count(c.experiment))
    throw ConfigError("config field 'experiment': unknown experiment '" + c.experiment + "'");

  std::vector<std::string> tags;
  if (doc.contains("method") && doc.contains("methods"))
    throw ConfigError("config fields 'method' and 'methods' are mutually exclusive");
  if (doc.contains("method")) {
    if (!doc.at("method").is_string())
      throw ConfigError("config field 'method': expected a string");
    tags.push_back(doc.at("method").get<std::string>());
  } else if (doc.contains("methods")) {
    if (!doc.at("methods").is_array())
      throw ConfigError("config field 'methods': expected an array of strings");
    for (const json &t : doc.at("methods")) {
      if (!t.is_string())
        throw ConfigError("config field 'methods': expected an array of strings");
      tags.push_back(t.get<std::string>());
    }
  }
  for (const std::string &t : tags) {
    try {
      c.methods.push_back(parse_variant(t));
    } catch (const InvalidArgument &) {
      throw ConfigError("config field 'method': unknown method tag '" + t + "'");
    }
  }
  if (c.methods.empty())
    c.methods = default_methods(c.experiment);
  if (c.experiment == "certify" && !c.methods.empty() && !tags.empty())
    throw ConfigError("config field 'method': certify takes no method");
  auto allowed = [&](const std::vector<Variant> &ok) {
    for (Variant v : c.methods)
      if (std::find(ok.begin(), ok.end(), v) == ok.end())
        throw ConfigError("config field 'method': '" + std::string(variant_name(v)) +
                          "' is not available for experiment '" + c.experiment + "'");
  };
  if (c.experiment == "shidoku" || c.experiment == "sysid")
    allowed(default_methods(c.experiment));
  if (c.experiment == "lasso")
    allowed({Variant::DynamicProxCMO, Variant::StaticProxCMO, Variant::PIPGD,
             Variant::GradFlow, Variant::ProxGradFlow, Variant::NsPDGD, Variant::PICMO});

  const std::int64_t seed = get_integer(doc, "seed", "", 1);
  if (seed < 0)
    throw ConfigError("config field 'seed': must be non-negative");
  c.seed = static_cast<std::uint64_t>(seed);
  const std::int64_t runs = get_integer(doc, "runs", "", 1);
  if (runs < 1)
    throw ConfigError("config field 'runs': must be at least 1");
  c.runs = static_cast<int>(runs);
  if (doc.contains("output_dir")) {
    if (!doc.at("output_dir").is_string())
      throw ConfigError("config field 'output_dir': expected a string");
    c.output_dir = doc.at("output_dir").get<std::string>();
  }

  if (doc.contains("gains")) {
    c.gains = doc.at("gains");
    apply_gains(GainSet{}, c.gains, "gains");
  }
  if (doc.contains("method_gains")) {
    c.method_gains = doc.at("method_gains");
    check_keys(c.method_gains, "method_gains",
               {"static", "dynamic", "dynamic_unconstrained", "pgf", "nspdgd", "pipgd",
                "picmo", "gradflow"});
    for (const auto &[k, v] : c.method_gains.items())
      apply_gains(GainSet{}, v, "method_gains." + k);
  }

  // integrator defaults depend on the experiment
  if (c.experiment == "lasso")
    c.integrator = lasso_default_config();
  else if (c.experiment == "shidoku")
    c.integrator = shidoku_default_config();
  else if (c.experiment == "sysid")
    c.integrator = sysid_default_config();
  else {
    c.integrator.t_end = 100.0;
    c.integrator.stop_residual = 1e-8;
  }
  if (doc.contains("integrator")) {
    const json &ig = doc.at("integrator");
    check_keys(ig, "integrator", {"t_end", "abs_tol", "rel_tol", "max_step", "min_step",
                                  "stop_residual", "record_stride"});
    IntegratorConfig &I = c.integrator;
    I.t_end = get_number(ig, "t_end", "integrator", I.t_end);
    I.abs_tol = get_number(ig, "abs_tol", "integrator", I.abs_tol);
    I.rel_tol = get_number(ig, "rel_tol", "integrator", I.rel_tol);
    I.max_step = get_number(ig, "max_step", "integrator", I.max_step);
    I.min_step = get_number(ig, "min_step", "integrator", I.min_step);
    if (ig.contains("stop_residual")) {
      if (ig.at("stop_residual").is_null())
        I.stop_residual.reset();
      else
        I.stop_residual = get_number(ig, "stop_residual", "integrator", 0.0);
    }
    I.record_stride = static_cast<int>(
        get_integer(ig, "record_stride", "integrator", I.record_stride));
  }
  try {
    c.integrator.validate();
  } catch (const InvalidArgument &e) {
    throw ConfigError(std::string("config field 'integrator': ") + e.what());
  }

  if (doc.contains("lasso")) {
    const json &l = doc.at("lasso");
    check_keys(l, "lasso", {"n", "m", "s", "rho"});
    c.lasso.n = get_integer(l, "n", "lasso", c.lasso.n);
    c.lasso.m = get_integer(l, "m", "lasso", c.lasso.m);
    c.lasso.s = get_integer(l, "s", "lasso", c.lasso.s);
    c.lasso.rho = get_number(l, "rho", "lasso", c.lasso.rho);
    if (!(c.lasso.m >= c.lasso.n && c.lasso.n >= c.lasso.s && c.lasso.s >= 1))
      throw ConfigError("config field 'lasso': need m >= n >= s >= 1");
    if (!(c.lasso.rho > 0.0))
      throw ConfigError("config field 'lasso.rho': must be positive");
  }
  if (doc.contains("sysid")) {
    const json &s = doc.at("sysid");
    check_keys(s, "sysid", {"a", "d", "N", "N_test", "snr_db", "gamma_factor",
                            "eps_factor", "delay", "noise_free", "noise_free_bound"});
    SysidOptions &o = c.sysid;
    o.a = get_number(s, "a", "sysid", o.a);
    o.d = static_cast<int>(get_integer(s, "d", "sysid", o.d));
    o.N = get_integer(s, "N", "sysid", o.N);
    o.N_test = get_integer(s, "N_test", "sysid", o.N_test);
    o.snr_db = get_number(s, "snr_db", "sysid", o.snr_db);
    o.gamma_factor = get_number(s, "gamma_factor", "sysid", o.gamma_factor);
    o.eps_factor = get_number(s, "eps_factor", "sysid", o.eps_factor);
    o.delay = static_cast<int>(get_integer(s, "delay", "sysid", o.delay));
    o.noise_free_bound = get_number(s, "noise_free_bound", "sysid", o.noise_free_bound);
    if (s.contains("noise_free")) {
      if (!s.at("noise_free").is_boolean())
        throw ConfigError("config field 'sysid.noise_free': expected a boolean");
      o.noise_free = s.at("noise_free").get<bool>();
    }
    if (!(o.a > 0.0 && o.a < 1.0) || o.d < 1 || o.N <= o.d || o.N_test < 2 ||
        (o.delay != 0 && o.delay != 1) || !(o.noise_free_bound > 0.0))
      throw ConfigError("config field 'sysid': need 0<a<1, d>=1, N>d, N_test>=2, "
                        "delay in {0,1}, noise_free_bound>0");
  }
  if (doc.contains("certify")) {
    const json &t = doc.at("certify");
    check_keys(t, "certify", {"theorem", "mf", "lf", "a1", "epsilon"});
    if (t.contains("theorem")) {
      if (!t.at("theorem").is_string())
        throw ConfigError("config field 'certify.theorem': expected a string");
      c.certify.theorem = parse_theorem(t.at("theorem").get<std::string>());
    }
    c.certify.mf = get_number(t, "mf", "certify", c.certify.mf);
    c.certify.lf = get_number(t, "lf", "certify", c.certify.lf);
    c.certify.a1 = get_number(t, "a1", "certify", c.certify.a1);
    c.certify.epsilon = get_number(t, "epsilon", "certify", c.certify.epsilon);
  }
  if (c.experiment == "custom") {
    if (!doc.contains("custom"))
      throw ConfigError("config field 'custom': required for the custom experiment");
    c.custom = doc.at("custom");
    check_keys(c.custom, "custom", {"H", "q", "C", "b", "g", "x0"});
    if (!c.custom.contains("H") || !c.custom.contains("q"))
      throw ConfigError("config field 'custom': H and q are required");
  }

  c.echo = doc;
  c.echo["seed"] = c.seed;
  c.echo["runs"] = c.runs;
  json m = json::array();
  for (Variant v : c.methods)
    m.push_back(std::string(variant_name(v)));
  c.echo.erase("method");
  c.echo["methods"] = m;
  c.echo.erase("output_dir");
  const IntegratorConfig &I = c.integrator;
  c.echo["integrator"] = {{"t_end", I.t_end},       {"abs_tol", I.abs_tol},
                          {"rel_tol", I.rel_tol},   {"max_step", I.max_step},
                          {"min_step", I.min_step}, {"record_stride", I.record_stride}};
  c.echo["integrator"]["stop_residual"] =
      I.stop_residual ? json(*I.stop_residual) : json(nullptr);
  return c;
}

/// Gains of @p v: experiment defaults, then "gains", then "method_gains".
inline GainSet resolve_gains(const RunConfig &c, Variant v, const GainSet &defaults) {
  GainSet g = detail::apply_gains(defaults, c.gains, "gains");
  const std::string tag(variant_name(v));
  if (c.method_gains.contains(tag))
    g = detail::apply_gains(g, c.method_gains.at(tag), "method_gains." + tag);
  try {
    g.validate_for(v);
  } catch (const InvalidArgument &e) {
    throw ConfigError("gains for '" + tag + "': " + e.what());
  }
  return g;
}

// ---------------------------------------------------------------------------
// Serialization helpers
// ---------------------------------------------------------------------------

inline json to_json(const GainSet &g, Variant v) {
  json j;
  j["mu"] = g.mu;
  if (has_lambda(v)) {
    j["kp"] = g.kp;
    j["ki"] = g.ki;
  }
  if (v == Variant::DynamicProxCMO || v == Variant::DynamicProxCMOUnconstrained) {
    j["k1"] = g.k1;
    j["k2"] = g.k2;
    j["k3"] = g.k3;
  }
  if (v == Variant::PIPGD)
    j["gamma"] = g.gamma;
  return j;
}

inline json to_json(const TheoremCertificate &c) {
  json j;
  j["theorem"] = to_string(c.theorem);
  j["feasible"] = c.feasible;
  j["rate_r"] = c.rate_r;
  j["violated_conditions"] = c.violated_conditions;
  j["notes"] = c.notes;
  json w;
  switch (c.theorem) {
  case Theorem::T1:
    w["rho"] = c.rho;
    j["kp"] = c.kp;
    j["eps_bound"] = c.eps_bound;
    break;
  case Theorem::T3:
    w["k3_over_mu"] = c.weights.primal;
    j["k2_crit"] = c.k2_crit;
    break;
  case Theorem::T4:
    w["k3_over_mu"] = c.weights.primal;
    w["gamma"] = c.gamma;
    j["k2_crit"] = c.k2_crit;
    j["k2_bound"] = c.k2_bound;
    j["eps_best"] = c.eps_best;
    j["delta_best"] = c.delta_best;
    break;
  }
  j["lyapunov_weights"] = w;
  return j;
}

inline json vec_json(const Vec &v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i)
    a.push_back(v[i]);
  return a;
}

inline double mean_of(const std::vector<double> &v) {
  if (v.empty())
    return 0.0;
  double s = 0.0;
  for (double x : v)
    s += x;
  return s / static_cast<double>(v.size());
}

/// Certificate a run would carry for its method on a problem, if any applies.
inline std::optional<TheoremCertificate> certificate_for(Variant v, const CompositeProblem &p,
                                                         const GainSet &g) {
  if (!p.f_constants)
    return std::nullopt;
  const double mf = p.f_constants->m_f, lf = p.f_constants->L_f;
  if (v == Variant::StaticProxCMO && p.h_constants) {
    const double eps = g.ki != 0.0 ? g.kp * (lf + 1.0 / g.mu) / g.ki : 0.0;
    return theorem1_certify(mf, lf, g.mu, g.ki, eps, p.h_constants->a1);
  }
  if (v == Variant::DynamicProxCMO && p.h_constants)
    return theorem4_certify(g.k1, g.k2, g.k3, g.mu, mf, lf, p.h_constants->a1, g.ki, g.kp);
  if ((v == Variant::DynamicProxCMO && p.m == 0) || v == Variant::DynamicProxCMOUnconstrained)
    return theorem3_certify(g.k1, g.k2, g.k3, g.mu, mf, lf);
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Runner
// ---------------------------------------------------------------------------

class Runner {
public:
  Runner(const RunConfig &cfg, std::ostream &out, std::ostream &err)
      : cfg_(cfg), out_(out), err_(err), dir_(cfg.output_dir) {}

  /// Executes the experiment and writes all files. Returns the exit code.
  int execute() {
    fs::create_directories(dir_);
    json summary;
    summary["experiment"] = cfg_.experiment;
    summary["config"] = cfg_.echo;
    if (cfg_.experiment == "certify")
      summary["certificate"] = run_certify();
    else if (cfg_.experiment == "lasso")
      summary["methods"] = run_lasso();
    else if (cfg_.experiment == "shidoku")
      summary["methods"] = run_shidoku_exp();
    else if (cfg_.experiment == "sysid")
      summary["methods"] = run_sysid_exp();
    else
      summary["methods"] = run_custom();
    summary["files"] = files_;
    summary["integrator_failures"] = failures_;
    const std::string path = (dir_ / "summary.json").string();
    write_text(path, summary.dump(2) + "\n");
    out_ << "summary written to " << path << "\n";
    return failures_ > 0 ? kExitIntegrator : kExitOk;
  }

  /// Files written so far (absolute or relative to the working directory).
  const std::vector<fs::path> &written() const { return written_; }

private:
  void write_text(const std::string &path, const std::string &text) {
    std::ofstream os(path);
    if (!os)
      throw Error("cannot open '" + path + "' for writing");
    os << text;
    written_.emplace_back(path);
  }

  std::string write_traj(const std::string &name, const SimulationResult &sim) {
    const std::string file = name + ".csv";
    const fs::path path = dir_ / file;
    write_trajectory_csv(path.string(), sim.traj, sim.layout);
    written_.push_back(path);
    files_.push_back(file);
    return file;
  }

  void write_table(const std::string &file, const TidyTable &t) {
    if (t.empty())
      return;
    const fs::path path = dir_ / file;
    t.write(path.string());
    written_.push_back(path);
    files_.push_back(file);
  }

  json sim_json(const SimulationResult &sim, const std::string &file) {
    json r;
    r["file"] = file;
    r["status"] = sim.ok() ? "ok" : "integrator_failure";
    if (!sim.ok()) {
      ++failures_;
      r["error"] = *sim.error;
      r["error_kind"] = to_string(*sim.error_kind);
      r["error_time"] = sim.error_time;
      err_ << "error: " << variant_name(sim.variant) << ": " << *sim.error << "\n";
    }
    r["final_time"] = sim.traj.final_time();
    r["accepted_steps"] = sim.traj.accepted_steps;
    r["rejected_steps"] = sim.traj.rejected_steps;
    r["rhs_evaluations"] = sim.traj.rhs_evaluations;
    r["stopped_early"] = sim.traj.stopped_early;
    r["final_res_stat"] = sim.traj.metrics.at("res_stat").back();
    r["final_res_feas"] = sim.traj.metrics.at("res_feas").back();
    r["final_obj"] = sim.traj.metrics.at("obj").back();
    return r;
  }

  void warn_certificate(Variant v, const TheoremCertificate &c) {
    if (c.feasible)
      return;
    std::string names;
    for (const std::string &s : c.violated_conditions)
      names += (names.empty() ? "" : ", ") + s;
    err_ << "warning: " << variant_name(v) << " gains not covered by " << to_string(c.theorem)
         << " (" << names << ")\n";
  }

  json run_certify() {
    const CertifyParams &t = cfg_.certify;
    GainSet g = detail::apply_gains(GainSet{}, cfg_.gains, "gains");
    TheoremCertificate c;
    switch (t.theorem) {
    case Theorem::T1:
      c = theorem1_certify(t.mf, t.lf, g.mu, g.ki, t.epsilon, t.a1);
      break;
    case Theorem::T3:
      c = theorem3_certify(g.k1, g.k2, g.k3, g.mu, t.mf, t.lf);
      break;
    case Theorem::T4:
      c = theorem4_certify(g.k1, g.k2, g.k3, g.mu, t.mf, t.lf, t.a1, g.ki, g.kp);
      break;
    }
    const json j = to_json(c);
    out_ << j.dump(2) << "\n";
    return j;
  }

  json run_lasso() {
    TidyTable fig_l1({"method", "run", "l1_norm", "residual"});
    TidyTable fig_res({"method", "run", "t", "residual"});
    TidyTable fig_l0({"method", "run", "t", "l0_norm"});
    TidyTable fig_supp({"method", "run", "t", "support_error"});
    std::map<Variant, json> runs;
    std::map<Variant, GainSet> gains_used;
    for (int k = 0; k < cfg_.runs; ++k) {
      const std::uint64_t seed = cfg_.seed + static_cast<std::uint64_t>(k);
      const LassoBuild lb =
          build_lasso(cfg_.lasso.n, cfg_.lasso.m, cfg_.lasso.s, cfg_.lasso.rho, seed);
      for (Variant v : cfg_.methods) {
        const GainSet g = resolve_gains(cfg_, v, lasso_default_gains(v, lb.instance));
        gains_used[v] = g;
        const LassoMethodReport rep =
            lasso_report(lb.instance, simulate(v, lb.problem, g, cfg_.integrator,
                                               Vec::Zero(lb.problem.n)),
                         g);
        const std::string tag(variant_name(v));
        const std::string file =
            write_traj("lasso_" + tag + "_run" + std::to_string(k), rep.sim);
        json r = sim_json(rep.sim, file);
        r["run"] = k;
        r["instance_seed"] = seed;
        r["final_residual"] = rep.final_residual();
        r["final_l1_norm"] = rep.l1.back();
        r["final_l0_norm"] = rep.l0.back();
        r["final_support_error"] = rep.final_support_error();
        r["l1_overshoot"] = rep.l1_overshoot();
        if (auto c = certificate_for(v, lb.problem, g)) {
          if (k == 0)
            warn_certificate(v, *c);
          r["certificate"] = to_json(*c);
        }
        runs[v].push_back(r);
        const std::string run = std::to_string(k);
        const auto &T = rep.sim.traj.times;
        for (std::size_t i = 0; i < T.size(); ++i) {
          const std::string t = format_double(T[i]);
          fig_l1.add_row({tag, run, format_double(rep.l1[i]), format_double(rep.residual[i])});
          fig_res.add_row({tag, run, t, format_double(rep.residual[i])});
          fig_l0.add_row({tag, run, t, format_double(rep.l0[i])});
          fig_supp.add_row({tag, run, t, format_double(rep.support_err[i])});
        }
      }
    }
    write_table("fig_residual_vs_l1.csv", fig_l1);
    write_table("fig_residual.csv", fig_res);
    write_table("fig_sparsity.csv", fig_l0);
    write_table("fig_support_error.csv", fig_supp);
    json methods = json::array();
    for (Variant v : cfg_.methods) {
      json m;
      m["method"] = std::string(variant_name(v));
      m["gains"] = to_json(gains_used[v], v);
      m["runs"] = runs[v];
      std::vector<double> res, l0, supp;
      for (const json &r : runs[v]) {
        res.push_back(r["final_residual"].get<double>());
        l0.push_back(r["final_l0_norm"].get<double>());
        supp.push_back(r["final_support_error"].get<double>());
      }
      m["aggregate"] = {{"mean_final_residual", mean_of(res)},
                        {"mean_final_l0_norm", mean_of(l0)},
                        {"mean_final_support_error", mean_of(supp)}};
      methods.push_back(m);
      out_ << std::left << std::setw(10) << variant_name(v)
           << " mean |Ax-b| = " << mean_of(res) << "  mean support error = " << mean_of(supp)
           << "\n";
    }
    return methods;
  }

  json run_shidoku_exp() {
    json methods = json::array();
    for (Variant v : cfg_.methods) {
      const GainSet g = resolve_gains(cfg_, v, shidoku_default_gains(v));
      const ShidokuReport rep = run_shidoku(v, g, cfg_.runs, cfg_.seed, cfg_.integrator);
      const std::string tag(variant_name(v));
      json m;
      m["method"] = tag;
      m["gains"] = to_json(g, v);
      m["note"] = "outside theorem assumptions (nonconvex g, nonlinear h)";
      json runs = json::array();
      for (std::size_t k = 0; k < rep.runs.size(); ++k) {
        const ShidokuRun &sr = rep.runs[k];
        const std::string file = write_traj("shidoku_" + tag + "_run" + std::to_string(k), sr.sim);
        json r = sim_json(sr.sim, file);
        r["run"] = k;
        r["x0"] = vec_json(sr.x0);
        r["success"] = sr.success;
        json grid = json::array();
        for (const auto &row : sr.grid)
          grid.push_back(row);
        r["grid"] = grid;
        runs.push_back(r);
      }
      m["runs"] = runs;
      m["state_size"] = rep.runs.front().sim.layout.size();
      m["aggregate"] = {{"success_rate", rep.success_rate()}, {"successes", rep.successes()}};
      methods.push_back(m);
      out_ << std::left << std::setw(10) << tag << " solved " << rep.successes() << "/"
           << rep.runs.size() << "\n";
    }
    return methods;
  }

  json run_sysid_exp() {
    json methods = json::array();
    std::map<Variant, json> runs;
    for (int k = 0; k < cfg_.runs; ++k) {
      const std::uint64_t seed = cfg_.seed + static_cast<std::uint64_t>(k);
      const SysidInstance inst = cfg_.sysid.noise_free ? build_sysid_noise_free(seed, cfg_.sysid)
                                                       : build_sysid(seed, cfg_.sysid);
      const Vec ls = least_squares_theta(inst);
      for (Variant v : cfg_.methods) {
        const GainSet g = resolve_gains(cfg_, v, sysid_default_gains(v));
        const SysidReport rep = run_sysid(inst, v, g, cfg_.integrator);
        const std::string tag(variant_name(v));
        json r;
        r["run"] = k;
        r["instance_seed"] = seed;
        r["gamma_inf"] = inst.gamma_inf;
        r["eps_2"] = inst.eps_2;
        r["theta_lower"] = vec_json(rep.theta_lower);
        r["theta_upper"] = vec_json(rep.theta_upper);
        r["theta_hat"] = vec_json(rep.theta_hat);
        r["theta_least_squares"] = vec_json(ls);
        r["fit"] = rep.fit;
        r["fit_sqrt_ratio"] = rep.fit_sqrt_ratio;
        r["max_constraint_residual"] = rep.max_constraint_residual();
        json subs = json::array();
        for (const SysidSubproblem &sp : rep.subproblems) {
          const std::string file = write_traj("sysid_" + tag + "_run" + std::to_string(k) +
                                                  "_theta" + std::to_string(sp.index) +
                                                  (sp.sign > 0 ? "_min" : "_max"),
                                              sp.sim);
          json s = sim_json(sp.sim, file);
          s["index"] = sp.index;
          s["sense"] = sp.sign > 0 ? "min" : "max";
          s["theta_bound"] = sp.theta_bound;
          s["constraint_residual"] = sp.constraint_residual;
          s["eta_violation"] = sp.eta_violation;
          subs.push_back(s);
        }
        r["subproblems"] = subs;
        runs[v].push_back(r);
        out_ << std::left << std::setw(10) << tag << " run " << k << " FIT = " << rep.fit
             << "\n";
      }
    }
    for (Variant v : cfg_.methods) {
      json m;
      m["method"] = std::string(variant_name(v));
      m["gains"] = to_json(resolve_gains(cfg_, v, sysid_default_gains(v)), v);
      m["runs"] = runs[v];
      std::vector<double> fit, res;
      for (const json &r : runs[v]) {
        fit.push_back(r["fit"].get<double>());
        res.push_back(r["max_constraint_residual"].get<double>());
      }
      m["aggregate"] = {{"mean_fit", mean_of(fit)}, {"mean_final_residual", mean_of(res)}};
      methods.push_back(m);
    }
    return methods;
  }

  CompositeProblem custom_problem() const {
    const json &c = cfg_.custom;
    const Mat H = detail::json_matrix(c.at("H"), "custom.H");
    const Vec q = detail::json_vector(c.at("q"), "custom.q");
    if (H.rows() != H.cols() || q.size() != H.rows())
      throw ConfigError("config field 'custom': H must be n x n and q of length n");
    ProxOperator g = zero_function();
    if (c.contains("g")) {
      const json &gj = c.at("g");
      detail::check_keys(gj, "custom.g", {"type", "weight", "lo", "hi"});
      const std::string type = gj.value("type", "zero");
      if (type == "l1")
        g = l1_norm(detail::get_number(gj, "weight", "custom.g", 1.0));
      else if (type == "box")
        g = box_indicator(detail::get_number(gj, "lo", "custom.g", -1.0),
                          detail::get_number(gj, "hi", "custom.g", 1.0));
      else if (type != "zero")
        throw ConfigError("config field 'custom.g.type': expected zero, l1 or box");
    }
    CompositeProblem p = quadratic_problem(H, q, g);
    if (c.contains("C")) {
      const Mat C = detail::json_matrix(c.at("C"), "custom.C");
      const Vec b = c.contains("b") ? detail::json_vector(c.at("b"), "custom.b")
                                    : Vec(Vec::Zero(C.rows()));
      if (C.cols() != H.rows() || b.size() != C.rows())
        throw ConfigError("config field 'custom': C must be m x n and b of length m");
      try {
        p = with_affine_constraint(std::move(p), AffineConstraint(C, b));
      } catch (const InvalidArgument &e) {
        throw ConfigError(std::string("config field 'custom.C': ") + e.what());
      }
    }
    return p;
  }

  json run_custom() {
    const CompositeProblem p = custom_problem();
    json methods = json::array();
    GainSet defaults;
    defaults.mu = 0.5; defaults.k1 = -10; defaults.k2 = -1; defaults.k3 = -9;
    defaults.ki = 0.8; defaults.kp = 1;
    for (Variant v : cfg_.methods) {
      if (v == Variant::DynamicProxCMOUnconstrained && p.m > 0)
        throw ConfigError("method 'dynamic_unconstrained' needs a problem without C");
      const GainSet g = resolve_gains(cfg_, v, defaults);
      const std::string tag(variant_name(v));
      json runs = json::array();
      std::vector<double> res;
      for (int k = 0; k < cfg_.runs; ++k) {
        Vec x0;
        if (cfg_.custom.contains("x0")) {
          x0 = detail::json_vector(cfg_.custom.at("x0"), "custom.x0");
          if (x0.size() != p.n)
            throw ConfigError("config field 'custom.x0': wrong length");
        } else {
          Rng rng(cfg_.seed + static_cast<std::uint64_t>(k));
          x0 = rng.normal_vector(p.n);
        }
        const SimulationResult sim = simulate(v, p, g, cfg_.integrator, x0);
        const std::string file = write_traj("custom_" + tag + "_run" + std::to_string(k), sim);
        json r = sim_json(sim, file);
        r["run"] = k;
        r["x0"] = vec_json(x0);
        r["final_x"] = vec_json(sim.final_state().x);
        r["final_residual"] =
            std::max(sim.traj.metrics.at("res_stat").back(), sim.traj.metrics.at("res_feas").back());
        res.push_back(r["final_residual"].get<double>());
        if (auto c = certificate_for(v, p, g)) {
          if (k == 0)
            warn_certificate(v, *c);
          r["certificate"] = to_json(*c);
        }
        runs.push_back(r);
      }
      json m;
      m["method"] = tag;
      m["gains"] = to_json(g, v);
      m["runs"] = runs;
      m["aggregate"] = {{"mean_final_residual", mean_of(res)}};
      methods.push_back(m);
    }
    return methods;
  }

  const RunConfig &cfg_;
  std::ostream &out_;
  std::ostream &err_;
  fs::path dir_;
  std::vector<fs::path> written_;
  json files_ = json::array();
  int failures_ = 0;
};

// ---------------------------------------------------------------------------
// Report
// ---------------------------------------------------------------------------

/// Comparison table over one or more summaries of the same experiment.
/// Returns the CSV text and prints the aligned table to @p out.
inline std::string make_report(const std::vector<json> &summaries, std::ostream &out) {
  if (summaries.empty())
    throw ConfigError("report: at least one summary is required");
  const std::string exp = summaries.front().value("experiment", "");
  for (const json &s : summaries) {
    if (!s.is_object() || !s.contains("experiment") || !s.at("experiment").is_string())
      throw ConfigError("report: input is not a run summary");
    if (s.at("experiment") != exp)
      throw ConfigError("report: refusing to mix experiments '" + exp + "' and '" +
                        s.at("experiment").get<std::string>() + "'");
  }
  for (const json &s : summaries)
    if (!s.contains("methods"))
      throw ConfigError("report: '" + exp + "' summaries carry no method table");
  auto cell = [](const json &agg, const char *key) -> std::string {
    if (!agg.contains(key) || agg.at(key).is_null())
      return "-";
    std::ostringstream os;
    os << std::setprecision(6) << agg.at(key).get<double>();
    return os.str();
  };
  const std::vector<std::string> head = {"summary", "method", "runs", "final_residual",
                                         "l0_norm", "support_error", "fit", "success_rate"};
  std::vector<std::vector<std::string>> rows;
  for (std::size_t i = 0; i < summaries.size(); ++i)
    for (const json &m : summaries[i].at("methods")) {
      const json &agg = m.at("aggregate");
      rows.push_back({std::to_string(i), m.at("method").get<std::string>(),
                      std::to_string(m.at("runs").size()), cell(agg, "mean_final_residual"),
                      cell(agg, "mean_final_l0_norm"), cell(agg, "mean_final_support_error"),
                      cell(agg, "mean_fit"), cell(agg, "success_rate")});
    }
  std::vector<std::size_t> width(head.size());
  for (std::size_t c = 0; c < head.size(); ++c) {
    width[c] = head[c].size();
    for (const auto &r : rows)
      width[c] = std::max(width[c], r[c].size());
  }
  auto print = [&](const std::vector<std::string> &r) {
    for (std::size_t c = 0; c < r.size(); ++c)
      out << std::left << std::setw(static_cast<int>(width[c] + 2)) << r[c];
    out << "\n";
  };
  out << "experiment: " << exp << "\n";
  print(head);
  for (const auto &r : rows)
    print(r);
  std::string csv = join(head) + "\n";
  for (const auto &r : rows)
    csv += join(r) + "\n";
  return csv;
}

// ---------------------------------------------------------------------------
// Entry point
// ---------------------------------------------------------------------------

struct Overrides {
  std::map<std::string, double> numbers;
  std::map<std::string, std::string> strings;
  std::vector<std::string> methods;
  bool noise_free = false;
};

namespace detail {

inline void add_run_options(CLI::App *app, std::string &config_path, Overrides &ov) {
  app->add_option("--config", config_path, "JSON configuration file");
  app->add_option("--experiment", ov.strings["experiment"],
                  "lasso | shidoku | sysid | certify | custom");
  app->add_option("--method", ov.methods, "method tag(s); repeat or comma-separate")
      ->delimiter(',');
  app->add_option("--out", ov.strings["output_dir"], "output directory");
  app->add_option("--theorem", ov.strings["theorem"], "t1 | t3 | t4 (certify)");
  app->add_flag("--noise-free", ov.noise_free, "sysid: noise-free instance");
  static const std::pair<const char *, const char *> kNumbers[] = {
      {"seed", "base seed (integer)"},
      {"runs", "Monte Carlo runs (integer)"},
      {"mu", "gain mu"},
      {"kp", "gain kp"},
      {"ki", "gain ki"},
      {"k1", "gain k1"},
      {"k2", "gain k2"},
      {"k3", "gain k3"},
      {"gamma", "gain gamma (PI-PGD step)"},
      {"t-end", "integration horizon"},
      {"abs-tol", "integrator absolute tolerance"},
      {"rel-tol", "integrator relative tolerance"},
      {"max-step", "largest step"},
      {"min-step", "smallest step before failing"},
      {"stop-residual", "early-stop residual"},
      {"record-stride", "record every k-th accepted step"},
      {"n", "lasso: unknowns"},
      {"m", "lasso: measurements"},
      {"s", "lasso: sparsity"},
      {"rho", "lasso: l1 weight"},
      {"delay", "sysid: Laguerre basis delay (0 or 1)"},
      {"mf", "certify: strong convexity m_f"},
      {"lf", "certify: smoothness L_f"},
      {"a1", "certify: constraint constant a1"},
      {"epsilon", "certify: Theorem 1 epsilon"}};
  for (const auto &[name, help] : kNumbers)
    app->add_option(std::string("--") + name, ov.numbers[name], help);
}

/// Fold command-line overrides into the configuration document.
inline void apply_overrides(json &doc, const Overrides &ov, const CLI::App *app) {
  auto given = [&](const std::string &flag) { return app->count("--" + flag) > 0; };
  if (given("experiment"))
    doc["experiment"] = ov.strings.at("experiment");
  if (!ov.methods.empty()) {
    doc.erase("method");
    doc["methods"] = ov.methods;
  }
  if (given("out"))
    doc["output_dir"] = ov.strings.at("output_dir");
  auto integer = [&](double v, const std::string &flag) {
    if (v != std::floor(v))
      throw ConfigError("option --" + flag + ": expected an integer");
    return static_cast<std::int64_t>(v);
  };
  if (given("seed"))
    doc["seed"] = integer(ov.numbers.at("seed"), "seed");
  if (given("runs"))
    doc["runs"] = integer(ov.numbers.at("runs"), "runs");
  for (const char *k : {"mu", "kp", "ki", "k1", "k2", "k3", "gamma"})
    if (given(k))
      doc["gains"][k] = ov.numbers.at(k);
  const std::pair<const char *, const char *> integ[] = {
      {"t-end", "t_end"},       {"abs-tol", "abs_tol"},   {"rel-tol", "rel_tol"},
      {"max-step", "max_step"}, {"min-step", "min_step"}, {"stop-residual", "stop_residual"}};
  for (const auto &[flag, key] : integ)
    if (given(flag))
      doc["integrator"][key] = ov.numbers.at(flag);
  if (given("record-stride"))
    doc["integrator"]["record_stride"] = integer(ov.numbers.at("record-stride"), "record-stride");
  for (const char *k : {"n", "m", "s"})
    if (given(k))
      doc["lasso"][k] = integer(ov.numbers.at(k), k);
  if (given("rho"))
    doc["lasso"]["rho"] = ov.numbers.at("rho");
  if (given("delay"))
    doc["sysid"]["delay"] = integer(ov.numbers.at("delay"), "delay");
  if (ov.noise_free)
    doc["sysid"]["noise_free"] = true;
  if (given("theorem"))
    doc["certify"]["theorem"] = ov.strings.at("theorem");
  for (const char *k : {"mf", "lf", "a1", "epsilon"})
    if (given(k))
      doc["certify"][k] = ov.numbers.at(k);
}

inline json read_json_file(const std::string &path) {
  std::ifstream is(path);
  if (!is)
    throw ConfigError("cannot read '" + path + "'");
  try {
    return json::parse(is);
  } catch (const json::parse_error &e) {
    throw ConfigError("'" + path + "': " + e.what());
  }
}

} // namespace detail

/// Full CLI. Returns the process exit code.
inline int run_cli(int argc, const char *const *argv, std::ostream &out, std::ostream &err) {
  CLI::App app{"Prox-CMO experiment harness"};
  app.require_subcommand(1);
  std::string run_config, cert_config;
  Overrides run_ov, cert_ov;
  CLI::App *run = app.add_subcommand("run", "run an experiment");
  detail::add_run_options(run, run_config, run_ov);
  CLI::App *cert = app.add_subcommand("certify", "alias of run --experiment certify");
  detail::add_run_options(cert, cert_config, cert_ov);
  std::vector<std::string> report_inputs;
  std::string report_csv;
  CLI::App *report = app.add_subcommand("report", "compare run summaries");
  report->add_option("summaries", report_inputs, "summary JSON files");
  report->add_option("--csv", report_csv, "CSV output path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  if (*report) {
    try {
      if (report_inputs.empty())
        throw ConfigError("report: usage: report <summary.json>... [--csv path]");
      std::vector<json> docs;
      for (const std::string &p : report_inputs)
        docs.push_back(detail::read_json_file(p));
      const std::string csv = make_report(docs, out);
      if (!report_csv.empty()) {
        std::ofstream os(report_csv);
        if (!os)
          throw ConfigError("cannot write '" + report_csv + "'");
        os << csv;
      }
      return kExitOk;
    } catch (const ConfigError &e) {
      err << "error: " << e.what() << "\n";
      return kExitConfig;
    }
  }

  const bool is_cert = cert->parsed();
  CLI::App *sub = is_cert ? cert : run;
  const std::string &config_path = is_cert ? cert_config : run_config;
  const Overrides &ov = is_cert ? cert_ov : run_ov;

  RunConfig cfg;
  try {
    json doc = config_path.empty() ? json::object() : detail::read_json_file(config_path);
    detail::apply_overrides(doc, ov, sub);
    if (is_cert) {
      if (doc.contains("experiment") && doc.at("experiment") != "certify")
        throw ConfigError("certify: experiment must be 'certify'");
      doc["experiment"] = "certify";
    }
    if (const char *env = std::getenv(kOutputDirEnv); env && *env && !sub->count("--out"))
      doc["output_dir"] = env;
    cfg = parse_config(doc);
  } catch (const Error &e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  }

  Runner runner(cfg, out, err);
  try {
    return runner.execute();
  } catch (const std::exception &e) {
    // fatal: remove partial outputs
    for (const fs::path &p : runner.written()) {
      std::error_code ec;
      fs::remove(p, ec);
    }
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  }
}

} // namespace proxcmo::cli
