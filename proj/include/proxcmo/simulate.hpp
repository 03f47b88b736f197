/// @file
/// @brief One closed-loop simulation: build the vector field of a variant,
/// integrate it, and attach the per-sample residual metrics.
#pragma once

#include "proxcmo/dynamics.hpp"
#include "proxcmo/integrate.hpp"
#include "proxcmo/problem.hpp"

#include <optional>
#include <string>

namespace proxcmo {

struct SimulationResult {
  Variant variant = Variant::StaticProxCMO;
  StateLayout layout;
  Trajectory traj;
  /// Empty when the integration finished; otherwise the failure message.
  std::optional<std::string> error;
  std::optional<IntegrationError::Kind> error_kind;
  double error_time = 0.0;

  bool ok() const { return !error.has_value(); }
  SystemState final_state() const { return layout.unpack(traj.final_state()); }
  SystemState state_at(std::size_t k) const { return layout.unpack(traj.states[k]); }
};

/// Step used by the fixed-point stationarity measure of a variant.
inline double residual_step(Variant v, const GainSet &gains) {
  return v == Variant::PIPGD ? gains.gamma : gains.mu;
}

/// Stationarity |x - prox(x - step (grad f + J^T lambda))| and feasibility |h|
/// of a variant's state; lambda is taken as zero when the variant has none.
inline KktResidual state_kkt(Variant v, const CompositeProblem &p,
                             const GainSet &gains, const SystemState &s) {
  if (has_lambda(v) || p.m == 0)
    return kkt_residual(p, {s.x, std::nullopt, s.lambda}, residual_step(v, gains));
  return kkt_residual(p, {s.x, std::nullopt, Vec::Zero(p.m)}, residual_step(v, gains));
}

/// Integrate @p variant from @p init. Integration failures are captured in
/// the result (with the trajectory up to the failure discarded) rather than
/// thrown; configuration errors still throw.
///
/// Metrics res_stat, res_feas and obj are attached to every recorded sample.
inline SimulationResult simulate(Variant variant, const CompositeProblem &p,
                                 const GainSet &gains, const IntegratorConfig &cfg,
                                 const SystemState &init) {
  SimulationResult out;
  out.variant = variant;
  out.layout = layout_for(variant, p);
  const VectorField field = make_vector_field(variant, p, gains);
  const Vec y0 = out.layout.pack(init);
  const StateLayout layout = out.layout;
  ResidualFn residual;
  if (cfg.stop_residual)
    residual = [&](const Vec &y) {
      return variant_residual(variant, p, gains, layout.unpack(y));
    };
  try {
    out.traj = integrate_adaptive(field, y0, cfg, residual);
  } catch (const IntegrationError &e) {
    out.error = e.what();
    out.error_kind = e.kind();
    out.error_time = e.time();
    out.traj = Trajectory{};
    out.traj.times.push_back(0.0);
    out.traj.states.push_back(y0);
  }
  std::vector<double> stat, feas, obj;
  for (const Vec &y : out.traj.states) {
    const SystemState s = layout.unpack(y);
    const KktResidual r = state_kkt(variant, p, gains, s);
    stat.push_back(r.stationarity);
    feas.push_back(r.feasibility);
    obj.push_back(p.objective(s.x));
  }
  out.traj.metrics["res_stat"] = std::move(stat);
  out.traj.metrics["res_feas"] = std::move(feas);
  out.traj.metrics["obj"] = std::move(obj);
  return out;
}

inline SimulationResult simulate(Variant variant, const CompositeProblem &p,
                                 const GainSet &gains, const IntegratorConfig &cfg,
                                 const Vec &x0) {
  return simulate(variant, p, gains, cfg, initial_state(variant, p, x0));
}

} // namespace proxcmo
