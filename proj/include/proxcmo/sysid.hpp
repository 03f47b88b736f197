/// @file
/// @brief Set-membership identification of an FIR-Laguerre model.
///
/// Data come from H(z) = 1/((z - 0.56)(z - 0.78)) driven by uniform input and
/// corrupted by bounded noise. The feasible parameter set is
///     { theta : y~ - Phi theta in C },  C = { |eta|_inf <= gamma, |eta|_2 <= eps },
/// and its bounding box is found by solving min +/- theta_i over (theta, eta)
/// with the affine coupling eta = y~ - Phi theta.
#pragma once

#include "proxcmo/core.hpp"
#include "proxcmo/problem.hpp"
#include "proxcmo/prox.hpp"
#include "proxcmo/simulate.hpp"

#include <vector>

namespace proxcmo {

/// Output of H(z) = z^-2 / (1 - 1.34 z^-1 + 0.4368 z^-2) for input u,
/// zero initial conditions.
inline Vec simulate_true_system(const Vec &u) {
  const Eigen::Index n = u.size();
  Vec y = Vec::Zero(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    double v = 0.0;
    if (k >= 1)
      v += 1.34 * y[k - 1];
    if (k >= 2)
      v += -0.4368 * y[k - 2] + u[k - 2];
    y[k] = v;
  }
  return y;
}

/// Regression matrix whose column i is u filtered by the i-th Laguerre
/// function
///     B_1(z) = sqrt(1 - a^2) z^-delay / (1 - a z^-1),
///     B_i(z) = ((z^-1 - a) / (1 - a z^-1)) B_{i-1}(z).
/// @p delay is 1 (strictly proper basis) or 0.
inline Mat laguerre_regressors(const Vec &u, double a, int d, int delay = 1) {
  detail::require(a > 0.0 && a < 1.0, "laguerre_regressors: pole must be in (0,1)");
  detail::require(d >= 1, "laguerre_regressors: need d >= 1");
  detail::require(delay == 0 || delay == 1, "laguerre_regressors: delay must be 0 or 1");
  const Eigen::Index n = u.size();
  const double g = std::sqrt(1.0 - a * a);
  Mat Phi = Mat::Zero(n, d);
  for (Eigen::Index k = 0; k < n; ++k) {
    const double prev = k >= 1 ? Phi(k - 1, 0) : 0.0;
    const double in = delay == 1 ? (k >= 1 ? u[k - 1] : 0.0) : u[k];
    Phi(k, 0) = a * prev + g * in;
  }
  for (int i = 1; i < d; ++i)
    for (Eigen::Index k = 0; k < n; ++k) {
      const double prev_out = k >= 1 ? Phi(k - 1, i) : 0.0;
      const double prev_in = k >= 1 ? Phi(k - 1, i - 1) : 0.0;
      Phi(k, i) = a * prev_out + prev_in - a * Phi(k, i - 1);
    }
  return Phi;
}

struct SysidOptions {
  double a = 0.75;
  int d = 5;
  Eigen::Index N = 50;
  Eigen::Index N_test = 1000;
  /// Target ratio |y|^2 / |eta|^2 in decibels.
  double snr_db = 20.0;
  double gamma_factor = 1.5;
  double eps_factor = 1.7;
  int delay = 1;
  /// Noise-free data: eta = 0 and both bounds equal to noise_free_bound.
  bool noise_free = false;
  double noise_free_bound = 1e-7;
};

struct SysidInstance {
  SysidOptions opts;
  Vec u;
  Vec y_true;
  Vec eta;
  Vec y_noisy;
  Mat Phi;
  double gamma_inf = 0.0;
  double eps_2 = 0.0;
  Vec u_test;
  Vec y_test;
  Mat Phi_test;
  std::uint64_t seed = 0;
};

/// Deterministic given the seed. Input u ~ U[-1,1]; noise e ~ U[-1,1]
/// rescaled so that |y|/|eta| hits the target SNR; bounds from the realized
/// noise. A fresh noise-free test record of N_test samples is drawn from the
/// same stream.
inline SysidInstance build_sysid(std::uint64_t seed, const SysidOptions &opts = {}) {
  detail::require(opts.N > opts.d, "build_sysid: need N > d");
  detail::require(opts.N_test >= 2, "build_sysid: need N_test >= 2");
  detail::require(opts.gamma_factor > 0.0 && opts.eps_factor > 0.0,
                  "build_sysid: bound factors must be positive");
  Rng rng(seed);
  SysidInstance inst;
  inst.opts = opts;
  inst.seed = seed;
  inst.u = rng.uniform_vector(opts.N, -1.0, 1.0);
  inst.y_true = simulate_true_system(inst.u);
  const Vec e = rng.uniform_vector(opts.N, -1.0, 1.0);
  if (opts.noise_free) {
    inst.eta = Vec::Zero(opts.N);
    inst.gamma_inf = opts.noise_free_bound;
    inst.eps_2 = opts.noise_free_bound;
  } else {
    const double scale = inst.y_true.norm() / (e.norm() * std::pow(10.0, opts.snr_db / 20.0));
    inst.eta = e * scale;
    inst.gamma_inf = opts.gamma_factor * inst.eta.lpNorm<Eigen::Infinity>();
    inst.eps_2 = opts.eps_factor * inst.eta.norm();
  }
  inst.y_noisy = inst.y_true + inst.eta;
  inst.Phi = laguerre_regressors(inst.u, opts.a, opts.d, opts.delay);
  inst.u_test = rng.uniform_vector(opts.N_test, -1.0, 1.0);
  inst.y_test = simulate_true_system(inst.u_test);
  inst.Phi_test = laguerre_regressors(inst.u_test, opts.a, opts.d, opts.delay);
  return inst;
}

/// Noise-free variant: the data are replaced by Phi theta0 with theta0 the
/// least-squares fit of the true output, so the model class contains the
/// data exactly.
inline SysidInstance build_sysid_noise_free(std::uint64_t seed, SysidOptions opts = {}) {
  opts.noise_free = true;
  SysidInstance inst = build_sysid(seed, opts);
  const Vec theta0 = inst.Phi.colPivHouseholderQr().solve(inst.y_true);
  inst.y_true = inst.Phi * theta0;
  inst.y_noisy = inst.y_true;
  return inst;
}

/// Normal-equations solution (Phi^T Phi)^-1 Phi^T y~.
inline Vec least_squares_theta(const SysidInstance &inst) {
  const Mat G = inst.Phi.transpose() * inst.Phi;
  return G.llt().solve(inst.Phi.transpose() * inst.y_noisy);
}

/// 100 (1 - r) with r = |y - yhat| / |y - mean(y)|.
inline double fit_percent(const Vec &y, const Vec &yhat) {
  detail::require_size(yhat.size(), y.size(), "fit_percent");
  const double den = (y.array() - y.mean()).matrix().norm();
  return 100.0 * (1.0 - (y - yhat).norm() / den);
}

/// 100 (1 - sqrt(|y - yhat| / |y - mean(y)|)), the square root taken of the
/// plain norm ratio.
inline double fit_percent_sqrt_ratio(const Vec &y, const Vec &yhat) {
  detail::require_size(yhat.size(), y.size(), "fit_percent_sqrt_ratio");
  const double den = (y.array() - y.mean()).matrix().norm();
  return 100.0 * (1.0 - std::sqrt((y - yhat).norm() / den));
}

/// Subproblem min sign * theta_i over (theta, eta) subject to
/// y~ - Phi theta - eta = 0, eta in C.
inline CompositeProblem sysid_subproblem(const SysidInstance &inst, int i, double sign,
                                         const DykstraOptions &dopts = {}) {
  const int d = static_cast<int>(inst.Phi.cols());
  const Eigen::Index N = inst.Phi.rows();
  detail::require(i >= 0 && i < d, "sysid_subproblem: index out of range");
  const Eigen::Index n = d + N;
  Vec q = Vec::Zero(n);
  q[i] = sign;
  ProxOperator g = split_prox(d, zero_function(),
                              intersection_indicator({inst.gamma_inf, inst.eps_2}, dopts));
  CompositeProblem p = quadratic_problem(Mat::Zero(n, n), q, std::move(g));
  Mat C(N, n);
  C.leftCols(d) = -inst.Phi;
  C.rightCols(N) = -Mat::Identity(N, N);
  return with_affine_constraint(std::move(p), AffineConstraint(C, inst.y_noisy));
}

inline GainSet sysid_default_gains(Variant v) {
  GainSet g;
  switch (v) {
  case Variant::DynamicProxCMO:
    g.mu = 15; g.kp = 3; g.ki = 0.1; g.k1 = -2; g.k2 = -1; g.k3 = -1;
    break;
  case Variant::StaticProxCMO:
    g.mu = 0.05; g.kp = 0.7; g.ki = 0.1;
    break;
  case Variant::PIPGD:
    g.gamma = 1; g.kp = 1; g.ki = 1.5;
    break;
  default:
    throw InvalidArgument("sysid: method must be static, dynamic or pipgd");
  }
  return g;
}

inline IntegratorConfig sysid_default_config() {
  IntegratorConfig cfg;
  cfg.t_end = 2e4;
  cfg.max_step = 1.0;
  cfg.stop_residual = 1e-6;
  return cfg;
}

struct SysidSubproblem {
  int index = 0;
  double sign = 1.0;
  SimulationResult sim;
  double theta_bound = 0.0;
  double constraint_residual = 0.0;
  /// Distance of eta from C (0 when inside).
  double eta_violation = 0.0;
};

struct SysidReport {
  Variant method = Variant::StaticProxCMO;
  GainSet gains;
  Vec theta_lower;
  Vec theta_upper;
  Vec theta_hat;
  double fit = 0.0;
  double fit_sqrt_ratio = 0.0;
  std::vector<SysidSubproblem> subproblems;

  bool ok() const {
    for (const auto &s : subproblems)
      if (!s.sim.ok())
        return false;
    return true;
  }
  double max_constraint_residual() const {
    double r = 0.0;
    for (const auto &s : subproblems)
      r = std::max(r, s.constraint_residual);
    return r;
  }
};

/// Solve the 2d bound subproblems in the order (min theta_1, max theta_1,
/// min theta_2, ...), each warm-started from the previous endpoint; the
/// first starts at zero.
inline SysidReport run_sysid(const SysidInstance &inst, Variant method,
                             const GainSet &gains,
                             const IntegratorConfig &cfg = sysid_default_config(),
                             const DykstraOptions &dopts = {}) {
  if (method != Variant::StaticProxCMO && method != Variant::DynamicProxCMO &&
      method != Variant::PIPGD)
    throw InvalidArgument("run_sysid: method must be static, dynamic or pipgd");
  const int d = static_cast<int>(inst.Phi.cols());
  const Eigen::Index N = inst.Phi.rows();
  const IntersectionSet set(inst.gamma_inf, inst.eps_2);
  SysidReport rep;
  rep.method = method;
  rep.gains = gains;
  rep.theta_lower = Vec::Zero(d);
  rep.theta_upper = Vec::Zero(d);

  std::optional<SystemState> warm;
  for (int i = 0; i < d; ++i) {
    for (double sign : {1.0, -1.0}) {
      const CompositeProblem p = sysid_subproblem(inst, i, sign, dopts);
      const SystemState init = warm ? *warm : initial_state(method, p, Vec::Zero(p.n));
      SysidSubproblem sp;
      sp.index = i;
      sp.sign = sign;
      sp.sim = simulate(method, p, gains, cfg, init);
      const SystemState fin = sp.sim.final_state();
      sp.theta_bound = fin.x[i];
      sp.constraint_residual = p.h(fin.x).norm();
      const Vec eta = fin.x.tail(N);
      sp.eta_violation = (eta - dykstra_project(eta, set, dopts)).norm();
      (sign > 0 ? rep.theta_lower : rep.theta_upper)[i] = sp.theta_bound;
      if (sp.sim.ok())
        warm = fin;
      rep.subproblems.push_back(std::move(sp));
    }
  }
  rep.theta_hat = 0.5 * (rep.theta_lower + rep.theta_upper);
  const Vec yhat = inst.Phi_test * rep.theta_hat;
  rep.fit = fit_percent(inst.y_test, yhat);
  rep.fit_sqrt_ratio = fit_percent_sqrt_ratio(inst.y_test, yhat);
  return rep;
}

} // namespace proxcmo
