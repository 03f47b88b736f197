/// @file
/// @brief Unbiased Lasso: min 0.5 |Ax - b|^2 + rho |x|_1  s.t.  A^T (Ax - b) = 0.
///
/// The constraint pins x to the least-squares solution, so the l1 term only
/// shapes the transient and the equilibrium carries no shrinkage bias.
#pragma once

#include "proxcmo/core.hpp"
#include "proxcmo/problem.hpp"
#include "proxcmo/prox.hpp"
#include "proxcmo/simulate.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <vector>

namespace proxcmo {

/// Magnitude above which a component counts as nonzero.
inline constexpr double kSupportThreshold = 1e-4;

struct LassoInstance {
  Mat A;
  Vec b;
  double rho = 1.0;
  Vec x_true;
  std::vector<Eigen::Index> support_true;
  std::uint64_t seed = 0;
};

struct LassoBuild {
  LassoInstance instance;
  CompositeProblem problem;
};

/// Number of components with |x_i| > threshold.
inline Eigen::Index count_nonzero(const Vec &x, double threshold = kSupportThreshold) {
  return (x.array().abs() > threshold).count();
}

/// sum_i |1{|x_i| > t} - 1{|x_ref_i| > t}|.
inline Eigen::Index support_error(const Vec &x, const Vec &x_ref,
                                  double threshold = kSupportThreshold) {
  detail::require_size(x.size(), x_ref.size(), "support_error");
  return ((x.array().abs() > threshold) != (x_ref.array().abs() > threshold)).count();
}

/// Problem of an explicit instance (A, b, rho); x_true is not consulted.
inline CompositeProblem lasso_problem(const Mat &A, const Vec &b, double rho) {
  detail::require(A.rows() >= A.cols(), "lasso_problem: need m >= n");
  detail::require(rho > 0.0, "lasso_problem: rho must be positive");
  CompositeProblem p = least_squares_problem(A, b, l1_norm(rho));
  return with_affine_constraint(std::move(p),
                                AffineConstraint(A.transpose() * A, -(A.transpose() * b)));
}

/// Random instance: A_ij ~ N(0, 1/m), x_true with s nonzeros of magnitude
/// U[0.5, 1] and random sign on a uniformly drawn support, b = A x_true.
/// A draw whose A^T A is numerically singular is discarded and redrawn from
/// the same stream.
inline LassoBuild build_lasso(Eigen::Index n, Eigen::Index m, Eigen::Index s,
                              double rho, std::uint64_t seed) {
  detail::require(n >= 1 && s >= 1 && s <= n && m >= n,
                  "build_lasso: need m >= n >= s >= 1");
  detail::require(rho > 0.0, "build_lasso: rho must be positive");
  Rng rng(seed);
  LassoInstance inst;
  inst.rho = rho;
  inst.seed = seed;

  const double sd = 1.0 / std::sqrt(static_cast<double>(m));
  for (int attempt = 0;; ++attempt) {
    inst.A = rng.normal_matrix(m, n, 0.0, sd);
    if (quadratic_constants(inst.A).m_f > 1e-10)
      break;
    if (attempt >= 100)
      throw InvalidArgument("build_lasso: could not draw a full-rank A");
  }

  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  for (Eigen::Index i = 0; i < s; ++i) {
    const auto j = i + static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n - i)));
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
  }
  inst.support_true.assign(idx.begin(), idx.begin() + s);
  std::sort(inst.support_true.begin(), inst.support_true.end());

  inst.x_true = Vec::Zero(n);
  for (Eigen::Index i : inst.support_true) {
    const double mag = rng.uniform(0.5, 1.0);
    inst.x_true[i] = rng.uniform() < 0.5 ? -mag : mag;
  }
  inst.b = inst.A * inst.x_true;

  LassoBuild out{inst, lasso_problem(inst.A, inst.b, rho)};
  return out;
}

/// Default gains of each Lasso method.
inline GainSet lasso_default_gains(Variant v, const LassoInstance &inst) {
  GainSet g;
  switch (v) {
  case Variant::DynamicProxCMO:
    g.mu = 0.5; g.k1 = -10; g.k2 = -1; g.k3 = -9; g.ki = 0.8; g.kp = 1;
    break;
  case Variant::StaticProxCMO:
    g.mu = 0.5; g.ki = 0.8; g.kp = 1;
    break;
  case Variant::PIPGD:
    g.gamma = 1.0 / quadratic_constants(inst.A).L_f;
    g.kp = 20; g.ki = 20;
    break;
  default:
    break;
  }
  return g;
}

inline IntegratorConfig lasso_default_config() {
  IntegratorConfig cfg;
  cfg.t_end = 1e3;
  cfg.max_step = 1.0;
  cfg.stop_residual = 1e-8;
  return cfg;
}

inline const std::vector<Variant> &lasso_methods() {
  static const std::vector<Variant> methods = {Variant::DynamicProxCMO,
                                               Variant::StaticProxCMO,
                                               Variant::PIPGD, Variant::GradFlow};
  return methods;
}

struct LassoMethodReport {
  SimulationResult sim;
  GainSet gains;
  /// Per recorded sample.
  std::vector<double> residual;  // |Ax - b|
  std::vector<double> l1;
  std::vector<double> l0;
  std::vector<double> support_err;

  double final_residual() const { return residual.back(); }
  double final_support_error() const { return support_err.back(); }
  /// max_t |x(t)|_1 / |x(t_final)|_1 - 1.
  double l1_overshoot() const {
    const double fin = l1.back();
    const double peak = *std::max_element(l1.begin(), l1.end());
    return fin > 0.0 ? peak / fin - 1.0 : 0.0;
  }
};

/// Post-process a Lasso run: residual |Ax - b|, |x|_1, |x|_0 and support
/// error along the recorded samples.
inline LassoMethodReport lasso_report(const LassoInstance &inst, SimulationResult sim,
                                      const GainSet &gains) {
  LassoMethodReport r;
  r.gains = gains;
  for (const Vec &y : sim.traj.states) {
    const Vec x = y.head(inst.A.cols());
    r.residual.push_back((inst.A * x - inst.b).norm());
    r.l1.push_back(x.lpNorm<1>());
    r.l0.push_back(static_cast<double>(count_nonzero(x)));
    r.support_err.push_back(static_cast<double>(support_error(x, inst.x_true)));
  }
  r.sim = std::move(sim);
  r.sim.traj.metrics["residual"] = r.residual;
  r.sim.traj.metrics["l1_norm"] = r.l1;
  r.sim.traj.metrics["l0_norm"] = r.l0;
  r.sim.traj.metrics["support_error"] = r.support_err;
  return r;
}

/// Run each method from x(0) = 0 with zero dual states. Integrator failures
/// are recorded per method and do not abort the suite.
inline std::map<Variant, LassoMethodReport>
run_lasso_suite(const LassoBuild &lb, const std::map<Variant, GainSet> &gains,
                const IntegratorConfig &cfg,
                const std::vector<Variant> &methods = lasso_methods()) {
  std::map<Variant, LassoMethodReport> out;
  const Vec x0 = Vec::Zero(lb.problem.n);
  for (Variant v : methods) {
    const auto it = gains.find(v);
    const GainSet g = it != gains.end() ? it->second : lasso_default_gains(v, lb.instance);
    out.emplace(v, lasso_report(lb.instance, simulate(v, lb.problem, g, cfg, x0), g));
  }
  return out;
}

} // namespace proxcmo
