/// @file
/// @brief 4x4 Shidoku as a nonsmooth equality-constrained problem.
///
/// Variables x_ij (row-major, index 4i + j). Every row, column and 2x2 corner
/// block must sum to 10 and multiply to 24; the givens enter as affine rows of
/// h. The integrality constraint is the nonconvex indicator of {1,2,3,4}^16.
#pragma once

#include "proxcmo/core.hpp"
#include "proxcmo/problem.hpp"
#include "proxcmo/prox.hpp"
#include "proxcmo/simulate.hpp"

#include <array>
#include <vector>

namespace proxcmo {

using ShidokuGrid = std::array<std::array<int, 4>, 4>;

struct ShidokuGiven {
  int row;
  int col;
  int value;
};

/// Givens and solved grid of the reference puzzle (zero-based indices).
inline const std::vector<ShidokuGiven> &reference_givens() {
  static const std::vector<ShidokuGiven> givens = {
      {0, 1, 1}, {0, 3, 4}, {2, 0, 2}, {2, 2, 3}};
  return givens;
}

inline const ShidokuGrid &reference_solution() {
  static const ShidokuGrid grid = {{{3, 1, 2, 4}, {4, 2, 1, 3}, {2, 4, 3, 1}, {1, 3, 4, 2}}};
  return grid;
}

struct ShidokuInstance {
  std::vector<ShidokuGiven> givens;
  /// Index groups (4 cells each) in h order: rows, columns, blocks.
  std::vector<std::array<int, 4>> groups;
  /// PI-CMO form: quartic integrality rows appended and g dropped.
  bool polynomial_rows = false;

  Eigen::Index constraint_count() const {
    return static_cast<Eigen::Index>(2 * groups.size() + givens.size()) +
           (polynomial_rows ? 16 : 0);
  }
};

inline std::vector<std::array<int, 4>> shidoku_groups() {
  std::vector<std::array<int, 4>> g;
  for (int i = 0; i < 4; ++i)
    g.push_back({4 * i, 4 * i + 1, 4 * i + 2, 4 * i + 3});
  for (int j = 0; j < 4; ++j)
    g.push_back({j, 4 + j, 8 + j, 12 + j});
  for (int bi : {0, 2})
    for (int bj : {0, 2}) {
      const int c = 4 * bi + bj;
      g.push_back({c, c + 1, c + 4, c + 5});
    }
  return g;
}

/// h(x): per group a sum row (sum - 10) then a product row (prod - 24), then
/// one row x_k - v per given, then (polynomial form) prod_{v=1..4} (x_k - v).
inline Vec shidoku_h(const ShidokuInstance &inst, const Vec &x) {
  detail::require_size(x.size(), 16, "shidoku_h: x");
  Vec h(inst.constraint_count());
  Eigen::Index r = 0;
  for (const auto &grp : inst.groups) {
    double s = 0.0, p = 1.0;
    for (int k : grp) {
      s += x[k];
      p *= x[k];
    }
    h[r++] = s - 10.0;
    h[r++] = p - 24.0;
  }
  for (const ShidokuGiven &gv : inst.givens)
    h[r++] = x[4 * gv.row + gv.col] - gv.value;
  if (inst.polynomial_rows)
    for (int k = 0; k < 16; ++k)
      h[r++] = (x[k] - 1.0) * (x[k] - 2.0) * (x[k] - 3.0) * (x[k] - 4.0);
  return h;
}

/// Analytic Jacobian of shidoku_h.
inline Mat shidoku_jacobian(const ShidokuInstance &inst, const Vec &x) {
  detail::require_size(x.size(), 16, "shidoku_jacobian: x");
  Mat J = Mat::Zero(inst.constraint_count(), 16);
  Eigen::Index r = 0;
  for (const auto &grp : inst.groups) {
    for (int k : grp)
      J(r, k) = 1.0;
    ++r;
    for (int k : grp) {
      double p = 1.0;
      for (int j : grp)
        if (j != k)
          p *= x[j];
      J(r, k) = p;
    }
    ++r;
  }
  for (const ShidokuGiven &gv : inst.givens)
    J(r++, 4 * gv.row + gv.col) = 1.0;
  if (inst.polynomial_rows)
    for (int k = 0; k < 16; ++k) {
      const double a = x[k] - 1.0, b = x[k] - 2.0, c = x[k] - 3.0, d = x[k] - 4.0;
      J(r++, k) = b * c * d + a * c * d + a * b * d + a * b * c;
    }
  return J;
}

struct ShidokuBuild {
  ShidokuInstance instance;
  CompositeProblem problem;
};

/// Reference puzzle. With @p polynomial_rows the integrality constraint is
/// moved into h and g is zero (smooth formulation for PI-CMO).
inline ShidokuBuild build_shidoku(bool polynomial_rows = false) {
  ShidokuInstance inst{reference_givens(), shidoku_groups(), polynomial_rows};
  CompositeProblem p;
  p.n = 16;
  p.m = inst.constraint_count();
  p.f_value = [](const Vec &) { return 0.0; };
  p.f_grad = [](const Vec &x) { return Vec(Vec::Zero(x.size())); };
  p.g = polynomial_rows ? zero_function() : shidoku_indicator();
  p.h_value = [inst](const Vec &x) { return shidoku_h(inst, x); };
  p.h_jacobian = [inst](const Vec &x) { return shidoku_jacobian(inst, x); };
  return {inst, p};
}

inline ShidokuGrid to_grid(const Vec &x) {
  detail::require_size(x.size(), 16, "to_grid: x");
  ShidokuGrid g{};
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      g[i][j] = static_cast<int>(x[4 * i + j]);
  return g;
}

/// Rule check by permutation counting: every row, column and corner block
/// holds each of 1..4 exactly once, and the givens are respected.
inline bool shidoku_valid(const ShidokuGrid &g, const std::vector<ShidokuGiven> &givens) {
  auto is_perm = [](const std::array<int, 4> &cells) {
    std::array<int, 5> seen{};
    for (int v : cells) {
      if (v < 1 || v > 4 || seen[v]++)
        return false;
    }
    return true;
  };
  for (int i = 0; i < 4; ++i) {
    if (!is_perm(g[i]) || !is_perm({g[0][i], g[1][i], g[2][i], g[3][i]}))
      return false;
  }
  for (int bi : {0, 2})
    for (int bj : {0, 2})
      if (!is_perm({g[bi][bj], g[bi][bj + 1], g[bi + 1][bj], g[bi + 1][bj + 1]}))
        return false;
  for (const ShidokuGiven &gv : givens)
    if (g[gv.row][gv.col] != gv.value)
      return false;
  return true;
}

inline GainSet shidoku_default_gains(Variant v) {
  GainSet g;
  switch (v) {
  case Variant::PICMO:
    g.ki = 1; g.kp = 0.1;
    break;
  case Variant::DynamicProxCMO:
    g.mu = 1; g.kp = 0.1; g.ki = 1; g.k1 = -0.1; g.k2 = -1; g.k3 = 0.9;
    break;
  case Variant::StaticProxCMO:
    g.mu = 4; g.ki = 1; g.kp = 2;
    break;
  default:
    throw InvalidArgument("shidoku: method must be static, dynamic or picmo");
  }
  return g;
}

inline IntegratorConfig shidoku_default_config() {
  IntegratorConfig cfg;
  cfg.t_end = 100.0;
  cfg.max_step = 0.1;
  cfg.stop_residual = 1e-8;
  return cfg;
}

struct ShidokuRun {
  Vec x0;
  SimulationResult sim;
  ShidokuGrid grid{};
  bool success = false;
};

struct ShidokuReport {
  Variant method = Variant::StaticProxCMO;
  GainSet gains;
  std::vector<ShidokuRun> runs;

  int successes() const {
    int c = 0;
    for (const auto &r : runs)
      c += r.success ? 1 : 0;
    return c;
  }
  double success_rate() const {
    return runs.empty() ? 0.0 : static_cast<double>(successes()) / runs.size();
  }
};

/// Draw x(0) ~ |N(0,1)|^16 per run (one stream seeded by @p seed), zero
/// multipliers, integrate, round with project_shidoku and check the rules.
inline ShidokuReport run_shidoku(Variant method, const GainSet &gains, int n_runs,
                                 std::uint64_t seed,
                                 const IntegratorConfig &cfg = shidoku_default_config()) {
  if (method != Variant::StaticProxCMO && method != Variant::DynamicProxCMO &&
      method != Variant::PICMO)
    throw InvalidArgument("run_shidoku: method must be static, dynamic or picmo");
  detail::require(n_runs >= 1, "run_shidoku: n_runs must be positive");
  const ShidokuBuild sb = build_shidoku(method == Variant::PICMO);
  Rng rng(seed);
  ShidokuReport rep;
  rep.method = method;
  rep.gains = gains;
  for (int k = 0; k < n_runs; ++k) {
    ShidokuRun run;
    run.x0 = rng.normal_vector(16).cwiseAbs();
    run.sim = simulate(method, sb.problem, gains, cfg, run.x0);
    if (run.sim.ok()) {
      run.grid = to_grid(project_shidoku(run.sim.final_state().x));
      run.success = shidoku_valid(run.grid, sb.instance.givens);
    }
    rep.runs.push_back(std::move(run));
  }
  return rep;
}

} // namespace proxcmo
