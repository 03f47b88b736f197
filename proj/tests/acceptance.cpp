// Acceptance gate: one PASS/FAIL line per criterion, non-zero exit on any failure.
#include "cli.hpp"
#include "oracles.hpp"

#include <chrono>
#include <cstdio>
#include <functional>
#include <sstream>
#include <string>

using namespace proxcmo;

namespace {

struct Outcome {
  bool pass;
  std::string detail;
};

class Stopwatch {
public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string fmt(const char *f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

// 1. Moreau envelope and prox consistency -----------------------------------
Outcome criterion1() {
  Stopwatch sw;
  Rng rng(101);
  double fd_worst = 0, grid_worst = 0, nonexp_worst = -INFINITY;
  const std::vector<ProxOperator> smooth = {l1_norm(0.8), box_indicator(-1, 1)};
  for (const ProxOperator &op : smooth)
    for (int k = 0; k < 200; ++k) {
      const MoreauEnvelope env(op, rng.uniform(0.2, 2.0));
      const Vec v = rng.uniform_vector(5, -3, 3);
      const Vec fd = oracle::fd_gradient([&](const Vec &z) { return moreau_value(env, z); }, v);
      fd_worst = std::max(fd_worst, (fd - moreau_grad(env, v)).lpNorm<Eigen::Infinity>());
    }
  for (int k = 0; k < 30; ++k) {
    const double v = rng.uniform(-4, 4), mu = rng.uniform(0.1, 2), w = rng.uniform(0.2, 2);
    Vec vv(1);
    vv << v;
    grid_worst = std::max(
        grid_worst,
        std::abs(moreau_value(MoreauEnvelope(l1_norm(w), mu), vv) -
                 oracle::grid_moreau([w](double x) { return w * std::abs(x); }, v, mu).value));
    grid_worst = std::max(
        grid_worst,
        std::abs(moreau_value(MoreauEnvelope(box_indicator(-1, 1), mu), vv) -
                 oracle::grid_moreau([](double x) { return std::abs(x) <= 1 ? 0.0 : INFINITY; },
                                     v, mu)
                     .value));
  }
  const std::vector<ProxOperator> convex = {l1_norm(0.5), box_indicator(-0.5, 2.0),
                                            zero_function(), intersection_indicator({0.8, 1.5})};
  for (const ProxOperator &op : convex)
    for (int k = 0; k < 500; ++k) {
      const Vec v = 2 * rng.normal_vector(6), w = 2 * rng.normal_vector(6);
      const double mu = rng.uniform(0.1, 3);
      nonexp_worst =
          std::max(nonexp_worst, (op.eval(v, mu) - op.eval(w, mu)).norm() - (v - w).norm());
    }
  const double t = sw.seconds();
  const bool pass = fd_worst <= 1e-5 && grid_worst <= 1e-6 && nonexp_worst <= 1e-12 && t < 10;
  return {pass, fmt("fd err %.2e", fd_worst) + fmt(", grid err %.2e", grid_worst) +
                    fmt(", max expansion %.2e", nonexp_worst) + fmt(", %.2f s", t)};
}

// 2. Reduction identities ----------------------------------------------------
Outcome criterion2() {
  Rng rng(102);
  const Mat H = oracle::spd(rng, 5, 0.5, 2.5);
  const CompositeProblem p = quadratic_problem(H, rng.normal_vector(5), l1_norm(0.7));
  double ns = 0, pgf = 0;
  for (int k = 0; k < 100; ++k) {
    GainSet g;
    g.mu = rng.uniform(0.2, 3);
    g.k1 = 0;
    g.k2 = -g.mu;
    g.k3 = g.mu;
    const SystemState s{3 * rng.normal_vector(5), Vec(3 * rng.normal_vector(5)), Vec::Zero(0)};
    const SystemState a = state_derivative(Variant::DynamicProxCMO, p, s, g);
    const SystemState b = state_derivative(Variant::NsPDGD, p, s, g);
    ns = std::max({ns, (a.x - b.x).lpNorm<Eigen::Infinity>(),
                   (*a.alpha - *b.alpha).lpNorm<Eigen::Infinity>()});
    const SystemState sx{s.x, std::nullopt, Vec::Zero(0)};
    pgf = std::max(pgf, (state_derivative(Variant::StaticProxCMO, p, sx, g).x -
                         state_derivative(Variant::ProxGradFlow, p, sx, g).x)
                            .lpNorm<Eigen::Infinity>());
  }
  return {ns <= 1e-14 && pgf <= 1e-14,
          fmt("dynamic vs NS-PDGD %.1e", ns) + fmt(", static vs PGF %.1e", pgf)};
}

/// max over samples of V(t) / (V(0) e^{-rt}). Once the envelope falls below
/// @p floor (about the integrator's resolution, V ~ abs_tol^2) the floor is
/// used as the denominator.
double envelope_ratio(const SimulationResult &sim, const TheoremCertificate &cert,
                      const SystemState &star, double floor) {
  const double V0 = lyapunov_value(cert, sim.state_at(0), star);
  double worst = 0;
  for (std::size_t k = 0; k < sim.traj.size(); ++k) {
    const double V = lyapunov_value(cert, sim.state_at(k), star);
    const double env = V0 * std::exp(-cert.rate_r * sim.traj.times[k]);
    worst = std::max(worst, V / std::max(env, floor));
  }
  return worst;
}

// 3. Theorem 1 decay ---------------------------------------------------------
Outcome criterion3() {
  Stopwatch sw;
  double worst = 0, kkt_worst = 0, r_min = INFINITY;
  int bad = 0;
  for (int k = 0; k < 10; ++k) {
    const auto inst = oracle::constrained_instance(1000 + k);
    const CompositeProblem &p = inst.problem;
    const double mf = p.f_constants->m_f, lf = p.f_constants->L_f;
    if (mf < 0.5)
      return {false, "instance with m_f < 0.5"};
    GainSet g;
    g.mu = 1.0 / lf;
    g.ki = 1.0;
    const double s = lf + 1.0 / g.mu;
    const double eps = 0.5 * 3 * mf / (4 * s - 3 * mf);
    const TheoremCertificate c = theorem1_certify(mf, lf, g.mu, g.ki, eps, p.h_constants->a1);
    if (!c.feasible)
      return {false, "synthesized gains not certified"};
    g.kp = c.kp;
    const SystemState star{inst.x_star, std::nullopt, inst.lambda_star};
    if (static_fixed_point_residual(p, star, g.mu) > 1e-12)
      return {false, "constructed point is not a static equilibrium"};
    IntegratorConfig cfg;
    cfg.t_end = 2000;
    cfg.max_step = 1;
    cfg.abs_tol = 1e-10;
    cfg.rel_tol = 1e-8;
    cfg.stop_residual = 1e-10;
    Rng rng(2000 + k);
    const SimulationResult sim =
        simulate(Variant::StaticProxCMO, p, g, cfg, Vec(3 * rng.normal_vector(p.n)));
    if (!sim.ok())
      return {false, "integration failed: " + *sim.error};
    const double ratio = envelope_ratio(sim, c, star, 1e-18);
    worst = std::max(worst, ratio);
    const double kkt = kkt_residual(p, sim.final_state(), g.mu).max();
    kkt_worst = std::max(kkt_worst, kkt);
    r_min = std::min(r_min, c.rate_r);
    bad += ratio > 1.05 || kkt > 1e-7;
  }
  const double t = sw.seconds();
  return {bad == 0 && t < 60,
          fmt("max V/(V0 e^-rt) %.4f", worst) + fmt(" (limit 1.05), final kkt <= %.2e", kkt_worst) +
              fmt(", min r %.3g", r_min) + fmt(", %.2f s", t)};
}

// 4. Theorem 3 decay ---------------------------------------------------------
Outcome criterion4() {
  double worst = 0;
  int bad = 0;
  for (int k = 0; k < 10; ++k) {
    Rng rng(3000 + k);
    const Mat H = oracle::spd(rng, 6, 0.5 + rng.uniform(), 3.0);
    const Eigen::SelfAdjointEigenSolver<Mat> es(H);
    const double mf = es.eigenvalues()(0), lf = es.eigenvalues()(5);
    GainSet g;
    g.mu = rng.uniform(0.5, 2);
    g.k1 = rng.uniform(0.2, 2);
    g.k3 = rng.uniform(0.2, 2);
    g.k2 = k2_critical(g.k1, g.k3, g.mu, mf, lf) - rng.uniform(0.1, 2);
    const TheoremCertificate c = theorem3_certify(g.k1, g.k2, g.k3, g.mu, mf, lf);
    if (!c.feasible)
      return {false, "gains not T3-feasible"};
    const auto inst = oracle::shifted_instance(rng, H, 1.0, g);
    const double eq = (state_derivative(Variant::DynamicProxCMOUnconstrained, inst.problem,
                                        inst.star, g)
                           .x)
                          .norm();
    if (eq > 1e-12)
      return {false, "constructed point is not an equilibrium"};
    IntegratorConfig cfg;
    cfg.t_end = 200;
    cfg.max_step = 0.5;
    // V falls to ~1e-30 here, so integration noise must stay under the floor
    cfg.abs_tol = 1e-12;
    cfg.rel_tol = 1e-10;
    const SimulationResult sim = simulate(Variant::DynamicProxCMOUnconstrained, inst.problem, g,
                                          cfg, Vec(3 * rng.normal_vector(6)));
    if (!sim.ok())
      return {false, "integration failed: " + *sim.error};
    const double ratio = envelope_ratio(sim, c, inst.star, 1e-18);
    worst = std::max(worst, ratio);
    bad += ratio > 1.05;
  }
  return {bad == 0, fmt("max V/(V0 e^-rt) %.4f", worst) + " (limit 1.05) over 10 instances"};
}

// 5. Unbiased Lasso ------------------------------------------------------------
Outcome criterion5() {
  Stopwatch sw;
  int good = 0;
  double min_overshoot = INFINITY, worst_res = 0;
  const IntegratorConfig cfg = lasso_default_config();
  for (int k = 0; k < 20; ++k) {
    const LassoBuild lb = build_lasso(40, 44, 8, 1.0, 100 + static_cast<std::uint64_t>(k));
    const auto res = run_lasso_suite(lb, {}, cfg, {Variant::DynamicProxCMO, Variant::GradFlow});
    const LassoMethodReport &d = res.at(Variant::DynamicProxCMO);
    const LassoMethodReport &gf = res.at(Variant::GradFlow);
    worst_res = std::max(worst_res, d.final_residual());
    good += d.sim.ok() && d.final_residual() <= 1e-6 && d.final_support_error() == 0;
    min_overshoot = std::min(min_overshoot, gf.l1_overshoot());
  }
  const double t = sw.seconds();
  return {good >= 18 && min_overshoot >= 0.05 && t < 180,
          std::to_string(good) + "/20 seeds recovered" + fmt(" (max |Ax-b| %.2e)", worst_res) +
              fmt(", gradient-flow l1 overshoot >= %.1f%%", 100 * min_overshoot) +
              fmt(", %.1f s", t)};
}

// 6. Shidoku -------------------------------------------------------------------
Outcome criterion6() {
  Stopwatch sw;
  std::string detail;
  bool pass = true;
  for (Variant v : {Variant::StaticProxCMO, Variant::DynamicProxCMO}) {
    const ShidokuReport rep =
        run_shidoku(v, shidoku_default_gains(v), 20, 1, shidoku_default_config());
    int verified = 0;
    for (const ShidokuRun &r : rep.runs)
      verified += shidoku_valid(r.grid, reference_givens()) && r.grid == reference_solution();
    pass = pass && verified >= 10;
    detail += std::string(variant_name(v)) + " " + std::to_string(verified) + "/20, ";
  }
  const double t = sw.seconds();
  return {pass && t < 120, detail + fmt("%.1f s", t)};
}

// 7. Set-membership identification ---------------------------------------------
Outcome criterion7() {
  Stopwatch sw;
  const std::uint64_t seed = 20261016;
  const SysidInstance inst = build_sysid(seed);
  const SysidInstance clean = build_sysid_noise_free(seed);
  const Vec ls_clean = least_squares_theta(clean);
  std::string detail;
  bool pass = true;
  for (Variant v : {Variant::StaticProxCMO, Variant::DynamicProxCMO, Variant::PIPGD}) {
    const GainSet g = sysid_default_gains(v);
    const SysidReport rep = run_sysid(inst, v, g, sysid_default_config());
    const bool contained = (rep.theta_lower.array() <= rep.theta_hat.array()).all() &&
                           (rep.theta_hat.array() <= rep.theta_upper.array()).all();
    const double res = rep.max_constraint_residual();
    const SysidReport nf = run_sysid(clean, v, g, sysid_default_config());
    double nf_err = (nf.theta_hat - ls_clean).lpNorm<Eigen::Infinity>();
    if (v != Variant::StaticProxCMO)
      nf_err = std::max({nf_err, (nf.theta_lower - ls_clean).lpNorm<Eigen::Infinity>(),
                         (nf.theta_upper - ls_clean).lpNorm<Eigen::Infinity>()});
    const bool ok = rep.ok() && nf.ok() && contained && res <= 1e-5 && rep.fit >= 90 &&
                    nf_err <= 1e-4;
    pass = pass && ok;
    detail += std::string(variant_name(v)) + fmt(" FIT %.2f", rep.fit) +
              fmt(" res %.1e", res) + fmt(" noise-free err %.1e", nf_err) +
              (contained ? "" : " NOT CONTAINED") + "; ";
  }
  const double t = sw.seconds();
  return {pass && t < 120, detail + fmt("%.1f s", t)};
}

// 8. Certificate formulas --------------------------------------------------------
Outcome criterion8() {
  Rng rng(108);
  double worst = 0;
  int mismatched = 0;
  for (int k = 0; k < 1000; ++k) {
    const double mf = rng.uniform(0.05, 2), lf = mf * rng.uniform(1, 10);
    const double mu = rng.uniform(0.05, 3), ki = rng.uniform(0.1, 5), a1 = rng.uniform(0.01, 3);
    const double eps = 3 * mf / (4 * (lf + 1 / mu) - 3 * mf) * rng.uniform(0.01, 1.3);
    const TheoremCertificate c = theorem1_certify(mf, lf, mu, ki, eps, a1);
    const auto ref = oracle::theorem1(mf, lf, mu, ki, eps, a1);
    mismatched += c.feasible != ref.feasible;
    worst = std::max({worst, std::abs(c.rate_r - ref.r), std::abs(c.kp - ref.kp),
                      std::abs(c.rho - ref.rho)});
  }
  for (int k = 0; k < 1000; ++k) {
    const double k1 = rng.uniform(-1, 3), k3 = rng.uniform(-1, 3), mu = rng.uniform(0.1, 3);
    const double mf = rng.uniform(0.1, 2), lf = mf * rng.uniform(1, 5), k2 = rng.uniform(-30, 1);
    const TheoremCertificate c = theorem3_certify(k1, k2, k3, mu, mf, lf);
    const auto ref = oracle::theorem3(k1, k2, k3, mu, mf, lf);
    mismatched += c.feasible != ref.feasible;
    worst = std::max(worst, std::abs(c.rate_r - ref.r));
  }
  for (int k = 0; k < 1000; ++k) {
    const double k1 = rng.uniform(0.1, 2);
    const double k3 = rng.uniform() < 0.9 ? k1 : rng.uniform(0.1, 2);
    const double mu = rng.uniform(0.2, 2), mf = rng.uniform(0.2, 2), lf = mf * rng.uniform(1, 3);
    const double ki = rng.uniform(0.2, 2), kp = rng.uniform(0.05, 1), a1 = rng.uniform(0.1, 2);
    const double k2 = -rng.uniform(0.5, 80);
    const TheoremCertificate c = theorem4_certify(k1, k2, k3, mu, mf, lf, a1, ki, kp);
    const auto ref = oracle::theorem4(k1, k2, k3, mu, mf, lf, a1, ki, kp);
    mismatched += c.feasible != ref.feasible;
    worst = std::max(worst, std::abs(c.rate_r - ref.r));
  }
  const TheoremCertificate lasso = theorem3_certify(-10, -1, -9, 0.5, 0.01, 2.0);
  auto named = [&](const char *s) {
    return std::find(lasso.violated_conditions.begin(), lasso.violated_conditions.end(), s) !=
           lasso.violated_conditions.end();
  };
  const bool lasso_ok = !lasso.feasible && named("k1>0") && named("k3>0");
  return {mismatched == 0 && worst <= 1e-12 && lasso_ok,
          std::to_string(mismatched) + " verdict mismatches in 3000 tuples" +
              fmt(", max deviation %.1e", worst) +
              (lasso_ok ? ", Lasso experiment gains rejected (k1>0, k3>0)" : ", Lasso gains NOT rejected")};
}

// 9. Integrator order and determinism --------------------------------------------
Outcome criterion9() {
  const Rhs decay = [](double, const Vec &y) { return Vec(-y); };
  auto err = [&](double dt) {
    return std::abs(integrate_fixed_rk4(decay, Vec::Ones(1), dt, 1.0).final_state()[0] -
                    std::exp(-1.0));
  };
  const double ratio = err(0.1) / err(0.05);

  namespace fs = std::filesystem;
  const fs::path base = fs::temp_directory_path() / "proxcmo_acceptance_determinism";
  fs::remove_all(base);
  std::string summaries[2];
  int codes[2];
  for (int i = 0; i < 2; ++i) {
    const std::string out = (base / std::to_string(i)).string();
    const char *argv[] = {"proxcmo_cli", "run",  "--experiment", "lasso", "--seed",
                          "9",           "--runs", "2",           "--out", out.c_str()};
    std::ostringstream o, e;
    codes[i] = cli::run_cli(10, argv, o, e);
    std::ifstream is(base / std::to_string(i) / "summary.json");
    std::stringstream ss;
    ss << is.rdbuf();
    summaries[i] = ss.str();
  }
  fs::remove_all(base);
  const bool same = codes[0] == 0 && codes[1] == 0 && !summaries[0].empty() &&
                    summaries[0] == summaries[1];
  return {ratio >= 12 && ratio <= 20 && same,
          fmt("RK4 halving ratio %.2f", ratio) +
              (same ? ", summaries byte-identical" : ", summaries differ")};
}

} // namespace

int main() {
  const std::vector<std::pair<const char *, std::function<Outcome()>>> criteria = {
      {"Moreau/prox consistency", criterion1},
      {"reduction identities", criterion2},
      {"certified Lyapunov decay, static Prox-CMO", criterion3},
      {"certified Lyapunov decay, unconstrained dynamic Prox-CMO", criterion4},
      {"unbiased Lasso n=40", criterion5},
      {"Shidoku", criterion6},
      {"set-membership identification", criterion7},
      {"certificate formulas", criterion8},
      {"integrator order and determinism", criterion9},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception &e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("criterion %zu: %s - %s (%s)\n", i + 1, o.pass ? "PASS" : "FAIL", criteria[i].first,
                o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
