#include "oracles.hpp"

#include <gtest/gtest.h>

using namespace proxcmo;

namespace {

GainSet lasso_dynamic_gains() {
  GainSet g;
  g.mu = 0.5; g.k1 = -10; g.k2 = -1; g.k3 = -9; g.ki = 0.8; g.kp = 1;
  return g;
}

double norm_of(const SystemState &d) {
  return std::sqrt(d.x.squaredNorm() + (d.alpha ? d.alpha->squaredNorm() : 0.0) +
                   d.lambda.squaredNorm());
}

/// Unconstrained strongly convex quadratic + l1 with its exact optimum.
struct Unconstrained {
  CompositeProblem p;
  Vec x_star;
  Vec subgrad; // element of d g(x*) with grad f(x*) + subgrad = 0
};

Unconstrained unconstrained_instance(std::uint64_t seed, double w = 0.7) {
  Rng rng(seed);
  const Eigen::Index n = 5;
  const Mat H = oracle::spd(rng, n, 0.5, 2.5);
  Vec xs = rng.uniform_vector(n, -2, 2);
  xs[0] = 0.0;
  xs[1] = 0.0;
  Vec sub = w * xs.array().sign().matrix();
  sub[0] = 0.3 * w;
  sub[1] = -0.6 * w;
  const Vec q = -(H * xs + sub);
  return {quadratic_problem(H, q, l1_norm(w)), xs, sub};
}

} // namespace

TEST(Variant, TagsRoundTrip) {
  for (Variant v : kAllVariants)
    EXPECT_EQ(parse_variant(variant_name(v)), v);
  EXPECT_THROW(parse_variant("nope"), InvalidArgument);
}

TEST(Variant, StateLayouts) {
  const auto inst = oracle::constrained_instance(41);
  const CompositeProblem &p = inst.problem;
  EXPECT_EQ(layout_for(Variant::StaticProxCMO, p).size(), 6 + 3);
  EXPECT_EQ(layout_for(Variant::DynamicProxCMO, p).size(), 6 + 6 + 3);
  EXPECT_EQ(layout_for(Variant::PIPGD, p).size(), 6 + 3);
  EXPECT_EQ(layout_for(Variant::PICMO, p).size(), 6 + 3);
  EXPECT_EQ(layout_for(Variant::GradFlow, p).size(), 6);
  EXPECT_EQ(layout_for(Variant::NsPDGD, p).size(), 12);
  const StateLayout L = layout_for(Variant::DynamicProxCMO, p);
  Rng rng(1);
  const SystemState s{rng.normal_vector(6), Vec(rng.normal_vector(6)), rng.normal_vector(3)};
  const SystemState back = L.unpack(L.pack(s));
  EXPECT_EQ(back.x, s.x);
  EXPECT_EQ(*back.alpha, *s.alpha);
  EXPECT_EQ(back.lambda, s.lambda);
}

TEST(GainSet, Validation) {
  GainSet g;
  g.mu = 0.0;
  EXPECT_THROW(g.validate_for(Variant::StaticProxCMO), InvalidArgument);
  g.mu = 1.0;
  g.kp = std::nan("");
  EXPECT_THROW(g.validate_for(Variant::PICMO), InvalidArgument);
  EXPECT_NO_THROW(g.validate_for(Variant::GradFlow));
}

TEST(Plant, SaddlePointIsEquilibriumWithZeroOutputs) {
  const auto inst = oracle::constrained_instance(42);
  const CompositeProblem &p = inst.problem;
  GainSet g;
  g.mu = 0.5;
  const Vec alpha =
      -(p.f_grad(inst.x_star) + p.jacobian_transpose_times(inst.x_star, inst.lambda_star));
  const PlantOutput out = plant_rhs(p, {inst.x_star, alpha, inst.lambda_star}, g);
  EXPECT_LE(out.xdot.norm(), 1e-12);
  EXPECT_LE(out.y1.norm(), 1e-12);
  EXPECT_LE(out.y2.norm(), 1e-12);
}

TEST(Plant, OriginOptimum) {
  const CompositeProblem p = quadratic_problem(Mat::Identity(1, 1), Vec::Zero(1), l1_norm());
  const PlantOutput out = plant_rhs(p, {Vec::Zero(1), Vec(Vec::Zero(1)), Vec::Zero(0)}, GainSet{});
  EXPECT_EQ(out.xdot[0], 0.0);
}

TEST(Rhs, TermwiseRecomputation) {
  const auto inst = oracle::constrained_instance(43);
  const CompositeProblem &p = inst.problem;
  const Mat C = p.affine->C;
  const Vec b = p.affine->b;
  Rng rng(44);
  for (int k = 0; k < 50; ++k) {
    GainSet g;
    g.mu = rng.uniform(0.2, 2);
    g.kp = rng.uniform(0.1, 2);
    g.ki = rng.uniform(0.1, 2);
    g.k1 = rng.uniform(-3, 3);
    g.k2 = rng.uniform(-3, 3);
    g.k3 = rng.uniform(-3, 3);
    g.gamma = rng.uniform(0.1, 1);
    const Vec x = 2 * rng.normal_vector(6), a = rng.normal_vector(6), l = rng.normal_vector(3);
    const double w = 0.5, mu = g.mu;
    auto soft = [](const Vec &v, double t) {
      Vec o(v.size());
      for (Eigen::Index i = 0; i < v.size(); ++i)
        o[i] = v[i] > t ? v[i] - t : (v[i] < -t ? v[i] + t : 0.0);
      return o;
    };
    const Vec gf = p.f_grad(x);
    const Vec h = C * x + b;

    const PlantOutput pl = plant_rhs(p, {x, a, l}, g);
    const Vec v = x + mu * a;
    const Vec gm = (v - soft(v, mu * w)) / mu;
    EXPECT_LE((pl.xdot - (-gf - gm - C.transpose() * l)).norm(), 1e-12);
    EXPECT_LE((pl.y1 - (x - soft(v, mu * w))).norm(), 1e-12);

    const StaticRhs st = static_proxcmo_rhs(p, {x, std::nullopt, l}, g);
    const Vec sx = (soft(x - mu * gf, mu * w) - x) / mu - C.transpose() * l;
    EXPECT_LE((st.xdot - sx).norm(), 1e-12);
    EXPECT_LE((st.lambdadot - (g.kp * C * sx + g.ki * h)).norm(), 1e-12);

    const DynamicRhs dy = dynamic_proxcmo_rhs(p, {x, a, l}, g);
    const Vec dx = -gf - C.transpose() * l - gm;
    EXPECT_LE((dy.xdot - dx).norm(), 1e-12);
    EXPECT_LE((dy.alphadot - (g.k1 * (gf + C.transpose() * l) + g.k2 * a + g.k3 * gm)).norm(),
              1e-12);
    EXPECT_LE((dy.lambdadot - (g.kp * C * dx + g.ki * h)).norm(), 1e-12);

    const SystemState pg = baseline_rhs(Variant::PIPGD, p, {x, std::nullopt, l}, g);
    const Vec px = -x + soft(x - g.gamma * (gf + C.transpose() * l), g.gamma * w);
    EXPECT_LE((pg.x - px).norm(), 1e-12);
    EXPECT_LE((pg.lambda - (g.kp * C * px + g.ki * h)).norm(), 1e-12);

    const SystemState pc = baseline_rhs(Variant::PICMO, p, {x, std::nullopt, l}, g);
    const Vec cx = -gf - C.transpose() * l;
    EXPECT_LE((pc.x - cx).norm(), 1e-12);
    EXPECT_LE((pc.lambda - (g.kp * C * cx + g.ki * h)).norm(), 1e-12);
  }
}

TEST(Rhs, NsPdgdReduction) {
  Rng rng(45);
  const auto u = unconstrained_instance(46);
  for (int k = 0; k < 100; ++k) {
    GainSet g;
    g.mu = rng.uniform(0.2, 3);
    g.k1 = 0.0;
    g.k2 = -g.mu;
    g.k3 = g.mu;
    const SystemState s{3 * rng.normal_vector(5), Vec(3 * rng.normal_vector(5)), Vec::Zero(0)};
    const SystemState dyn = state_derivative(Variant::DynamicProxCMOUnconstrained, u.p, s, g);
    const SystemState ns = state_derivative(Variant::NsPDGD, u.p, s, g);
    EXPECT_LE((dyn.x - ns.x).lpNorm<Eigen::Infinity>(), 1e-14);
    EXPECT_LE((*dyn.alpha - *ns.alpha).lpNorm<Eigen::Infinity>(), 1e-14);
    const SystemState dynm = state_derivative(Variant::DynamicProxCMO, u.p, s, g);
    EXPECT_LE((dynm.x - ns.x).lpNorm<Eigen::Infinity>(), 1e-14);
    EXPECT_LE((*dynm.alpha - *ns.alpha).lpNorm<Eigen::Infinity>(), 1e-14);
  }
}

TEST(Rhs, ProximalGradientFlowReduction) {
  Rng rng(47);
  const auto u = unconstrained_instance(48);
  for (int k = 0; k < 100; ++k) {
    GainSet g;
    g.mu = rng.uniform(0.2, 3);
    const SystemState s{3 * rng.normal_vector(5), std::nullopt, Vec::Zero(0)};
    const SystemState st = state_derivative(Variant::StaticProxCMO, u.p, s, g);
    const SystemState pgf = state_derivative(Variant::ProxGradFlow, u.p, s, g);
    EXPECT_LE((st.x - pgf.x).lpNorm<Eigen::Infinity>(), 1e-14);
  }
}

TEST(Equilibrium, KktPointIsEquilibriumForEveryVariant) {
  const auto c = oracle::constrained_instance(49);
  const CompositeProblem &p = c.problem;
  const Vec alpha = -(p.f_grad(c.x_star) + p.jacobian_transpose_times(c.x_star, c.lambda_star));
  GainSet g = lasso_dynamic_gains();
  g.gamma = 0.3;
  EXPECT_LE(norm_of(state_derivative(Variant::StaticProxCMO, p, {c.x_star, std::nullopt, c.lambda_star}, g)), 1e-10);
  EXPECT_LE(norm_of(state_derivative(Variant::DynamicProxCMO, p, {c.x_star, alpha, c.lambda_star}, g)), 1e-10);
  EXPECT_LE(norm_of(state_derivative(Variant::PIPGD, p, {c.x_star, std::nullopt, c.lambda_star}, g)), 1e-10);

  const auto u = unconstrained_instance(50);
  const SystemState us{u.x_star, u.subgrad, Vec::Zero(0)};
  EXPECT_LE(norm_of(state_derivative(Variant::DynamicProxCMOUnconstrained, u.p, us, g)), 1e-10);
  EXPECT_LE(norm_of(state_derivative(Variant::NsPDGD, u.p, us, g)), 1e-10);
  EXPECT_LE(norm_of(state_derivative(Variant::ProxGradFlow, u.p, {u.x_star, std::nullopt, Vec::Zero(0)}, g)), 1e-10);

  // smooth problems for PI-CMO and gradient flow
  Rng rng(51);
  const Mat H = oracle::spd(rng, 4, 1, 2);
  const Mat C = rng.normal_matrix(2, 4);
  const Vec xs = rng.normal_vector(4), ls = rng.normal_vector(2);
  const CompositeProblem sp = with_affine_constraint(
      quadratic_problem(H, Vec(-(H * xs + C.transpose() * ls)), zero_function()),
      AffineConstraint(C, Vec(-C * xs)));
  EXPECT_LE(norm_of(state_derivative(Variant::PICMO, sp, {xs, std::nullopt, ls}, g)), 1e-10);
  const CompositeProblem gp = quadratic_problem(H, Vec(-H * xs), zero_function());
  EXPECT_LE(norm_of(state_derivative(Variant::GradFlow, gp, {xs, std::nullopt, Vec::Zero(0)}, g)), 1e-10);
}

TEST(Equilibrium, ConvergedStatesAreStationary) {
  const auto c = oracle::constrained_instance(52);
  IntegratorConfig cfg;
  cfg.t_end = 2000;
  cfg.max_step = 1;
  cfg.abs_tol = 1e-11;
  cfg.rel_tol = 1e-9;
  cfg.stop_residual = 1e-10;
  GainSet g = lasso_dynamic_gains();
  g.gamma = 0.2;
  g.kp = 1;
  g.ki = 0.8;
  for (Variant v : {Variant::StaticProxCMO, Variant::DynamicProxCMO, Variant::PIPGD}) {
    const SimulationResult sim = simulate(v, c.problem, g, cfg, Vec(Vec::Zero(6)));
    ASSERT_TRUE(sim.ok()) << variant_name(v);
    const SystemState s = sim.final_state();
    const double rhs = norm_of(state_derivative(v, c.problem, s, g));
    EXPECT_LE(rhs, 1e-8) << variant_name(v);
    EXPECT_LE(kkt_residual(c.problem, s, g.mu).max(), 1e-8) << variant_name(v);
  }
  const auto u = unconstrained_instance(53);
  for (Variant v : {Variant::DynamicProxCMOUnconstrained, Variant::NsPDGD, Variant::ProxGradFlow}) {
    const SimulationResult sim = simulate(v, u.p, g, cfg, Vec(Vec::Zero(5)));
    ASSERT_TRUE(sim.ok()) << variant_name(v);
    const SystemState s = sim.final_state();
    EXPECT_LE(norm_of(state_derivative(v, u.p, s, g)), 1e-8) << variant_name(v);
    EXPECT_LE(kkt_residual(u.p, {s.x, std::nullopt, Vec::Zero(0)}, g.mu).max(), 1e-8)
        << variant_name(v);
    EXPECT_LE((s.x - u.x_star).norm(), 1e-7) << variant_name(v);
  }
}

TEST(Equilibrium, StaticAndDynamicAgreeOnLasso) {
  const LassoBuild lb = build_lasso(6, 10, 2, 1.0, 54);
  IntegratorConfig cfg;
  cfg.t_end = 5000;
  cfg.max_step = 1;
  cfg.abs_tol = 1e-11;
  cfg.rel_tol = 1e-9;
  cfg.stop_residual = 1e-10;
  const Vec x0 = Vec::Zero(6);
  GainSet gd = lasso_default_gains(Variant::DynamicProxCMO, lb.instance);
  GainSet gs = lasso_default_gains(Variant::StaticProxCMO, lb.instance);
  const SimulationResult d = simulate(Variant::DynamicProxCMO, lb.problem, gd, cfg, x0);
  const SimulationResult s = simulate(Variant::StaticProxCMO, lb.problem, gs, cfg, x0);
  ASSERT_TRUE(d.ok());
  ASSERT_TRUE(s.ok());
  EXPECT_LE((d.final_state().x - s.final_state().x).norm(), 1e-5);
}

TEST(VectorField, PacksDerivative) {
  const auto c = oracle::constrained_instance(55);
  const GainSet g = lasso_dynamic_gains();
  const VectorField f = make_vector_field(Variant::DynamicProxCMO, c.problem, g);
  Rng rng(56);
  const SystemState s{rng.normal_vector(6), Vec(rng.normal_vector(6)), rng.normal_vector(3)};
  const StateLayout L = layout_for(Variant::DynamicProxCMO, c.problem);
  EXPECT_EQ(f(0.0, L.pack(s)), L.pack(state_derivative(Variant::DynamicProxCMO, c.problem, s, g)));
  EXPECT_THROW(make_vector_field(Variant::DynamicProxCMOUnconstrained, c.problem, g),
               InvalidArgument);
}
