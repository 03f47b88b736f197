/// @file
/// @brief Closed-loop vector fields of the Prox-CMO family and the baselines
/// they are compared against.
///
/// Every right-hand side differentiates the multiplier PI law through the
/// output, lambda' = kp J_h(x) x' + ki h(x), with x' substituted inline so the
/// closed loop is an explicit ODE.
#pragma once

#include "proxcmo/core.hpp"
#include "proxcmo/problem.hpp"
#include "proxcmo/prox.hpp"

#include <array>
#include <functional>
#include <optional>
#include <string>
#include <string_view>

namespace proxcmo {

enum class Variant {
  StaticProxCMO,
  DynamicProxCMO,
  DynamicProxCMOUnconstrained,
  ProxGradFlow,
  NsPDGD,
  PIPGD,
  PICMO,
  GradFlow,
};

inline constexpr std::array<Variant, 8> kAllVariants = {
    Variant::StaticProxCMO, Variant::DynamicProxCMO,
    Variant::DynamicProxCMOUnconstrained, Variant::ProxGradFlow,
    Variant::NsPDGD,        Variant::PIPGD,
    Variant::PICMO,         Variant::GradFlow};

inline std::string_view variant_name(Variant v) {
  switch (v) {
  case Variant::StaticProxCMO: return "static";
  case Variant::DynamicProxCMO: return "dynamic";
  case Variant::DynamicProxCMOUnconstrained: return "dynamic_unconstrained";
  case Variant::ProxGradFlow: return "pgf";
  case Variant::NsPDGD: return "nspdgd";
  case Variant::PIPGD: return "pipgd";
  case Variant::PICMO: return "picmo";
  case Variant::GradFlow: return "gradflow";
  }
  return "unknown";
}

inline Variant parse_variant(std::string_view name) {
  for (Variant v : kAllVariants)
    if (variant_name(v) == name)
      return v;
  throw InvalidArgument("unknown method tag '" + std::string(name) + "'");
}

/// Whether the variant carries the dual state alpha.
inline bool has_alpha(Variant v) {
  return v == Variant::DynamicProxCMO ||
         v == Variant::DynamicProxCMOUnconstrained || v == Variant::NsPDGD;
}

/// Whether the variant carries lambda (it is empty when m = 0).
inline bool has_lambda(Variant v) {
  return v == Variant::StaticProxCMO || v == Variant::DynamicProxCMO ||
         v == Variant::PIPGD || v == Variant::PICMO;
}

/// Controller parameters. Fields a variant does not use are ignored.
struct GainSet {
  double mu = 1.0;
  double kp = 0.0;
  double ki = 0.0;
  double k1 = 0.0;
  double k2 = 0.0;
  double k3 = 0.0;
  /// Prox step of PI-PGD.
  double gamma = 1.0;

  void validate_for(Variant v) const {
    auto finite = [](double x) { return std::isfinite(x); };
    detail::require(mu > 0.0 && finite(mu), "GainSet: mu must be positive");
    if (has_lambda(v))
      detail::require(finite(kp) && finite(ki), "GainSet: kp, ki must be finite");
    if (v == Variant::DynamicProxCMO || v == Variant::DynamicProxCMOUnconstrained)
      detail::require(finite(k1) && finite(k2) && finite(k3),
                      "GainSet: k1, k2, k3 must be finite");
    if (v == Variant::PIPGD)
      detail::require(gamma > 0.0 && finite(gamma),
                      "GainSet: gamma must be positive");
  }
};

/// Sizes of the (x, alpha, lambda) blocks of a packed state vector.
struct StateLayout {
  Eigen::Index n = 0;
  Eigen::Index n_alpha = 0;
  Eigen::Index m = 0;

  Eigen::Index size() const { return n + n_alpha + m; }

  Vec pack(const SystemState &s) const {
    detail::require_size(s.x.size(), n, "pack: x");
    detail::require_size(s.alpha ? s.alpha->size() : 0, n_alpha, "pack: alpha");
    detail::require_size(s.lambda.size(), m, "pack: lambda");
    Vec y(size());
    y.head(n) = s.x;
    if (n_alpha > 0)
      y.segment(n, n_alpha) = *s.alpha;
    y.tail(m) = s.lambda;
    return y;
  }

  SystemState unpack(const Vec &y) const {
    detail::require_size(y.size(), size(), "unpack");
    SystemState s;
    s.x = y.head(n);
    if (n_alpha > 0)
      s.alpha = Vec(y.segment(n, n_alpha));
    s.lambda = y.tail(m);
    return s;
  }
};

inline StateLayout layout_for(Variant v, const CompositeProblem &p) {
  return {p.n, has_alpha(v) ? p.n : 0, has_lambda(v) ? p.m : 0};
}

/// Zero-initialized state for the variant with the given primal point.
inline SystemState initial_state(Variant v, const CompositeProblem &p,
                                 const Vec &x0) {
  detail::require_size(x0.size(), p.n, "initial_state: x0");
  SystemState s;
  s.x = x0;
  if (has_alpha(v))
    s.alpha = Vec::Zero(p.n);
  s.lambda = Vec::Zero(has_lambda(v) ? p.m : 0);
  return s;
}

struct PlantOutput {
  Vec xdot;
  Vec y1;
  Vec y2;
};

/// Open-loop plant driven by (alpha, lambda):
///   x' = -grad f - grad M(x + mu alpha) - J^T lambda,
///   y1 = x - prox(x + mu alpha),  y2 = h(x).
inline PlantOutput plant_rhs(const CompositeProblem &p, const SystemState &s,
                             const GainSet &gains) {
  detail::check_state(p, s, true);
  const double mu = gains.mu;
  const Vec v = s.x + mu * *s.alpha;
  const Vec pr = p.g.eval(v, mu);
  const Vec grad_m = (v - pr) / mu;
  PlantOutput out;
  out.xdot = -p.f_grad(s.x) - grad_m - p.jacobian_transpose_times(s.x, s.lambda);
  out.y1 = s.x - pr;
  out.y2 = p.h(s.x);
  return out;
}

struct StaticRhs {
  Vec xdot;
  Vec lambdadot;
};

/// Static Prox-CMO (alpha = -grad f):
///   x' = -(1/mu) x + (1/mu) prox(x - mu grad f) - J^T lambda,
///   lambda' = kp J x' + ki h.
inline StaticRhs static_proxcmo_rhs(const CompositeProblem &p,
                                    const SystemState &s, const GainSet &gains) {
  detail::check_state(p, s, false);
  const double mu = gains.mu;
  const Vec pr = p.g.eval(s.x - mu * p.f_grad(s.x), mu);
  StaticRhs out;
  if (p.m == 0 || p.affine) {
    out.xdot = -(1.0 / mu) * s.x + (1.0 / mu) * pr -
               p.jacobian_transpose_times(s.x, s.lambda);
    out.lambdadot = gains.kp * p.jacobian_times(s.x, out.xdot) + gains.ki * p.h(s.x);
  } else {
    const Mat J = p.h_jacobian(s.x);
    out.xdot = -(1.0 / mu) * s.x + (1.0 / mu) * pr - J.transpose() * s.lambda;
    out.lambdadot = gains.kp * J * out.xdot + gains.ki * p.h(s.x);
  }
  return out;
}

struct DynamicRhs {
  Vec xdot;
  Vec alphadot;
  Vec lambdadot;
};

/// Dynamic Prox-CMO:
///   x'      = -grad f - grad M(x + mu alpha) - J^T lambda,
///   alpha'  = k1 (grad f + J^T lambda) + k2 alpha + k3 grad M(x + mu alpha),
///   lambda' = kp J x' + ki h.
inline DynamicRhs dynamic_proxcmo_rhs(const CompositeProblem &p,
                                      const SystemState &s, const GainSet &gains) {
  detail::check_state(p, s, true);
  const double mu = gains.mu;
  const Vec &alpha = *s.alpha;
  const Vec v = s.x + mu * alpha;
  const Vec grad_m = (v - p.g.eval(v, mu)) / mu;
  const Vec gf = p.f_grad(s.x);

  std::optional<Mat> J;
  if (p.m > 0 && !p.affine)
    J = p.h_jacobian(s.x);
  const Vec jt_lambda = J ? Vec(J->transpose() * s.lambda)
                          : p.jacobian_transpose_times(s.x, s.lambda);
  const Vec smooth = gf + jt_lambda;

  DynamicRhs out;
  out.xdot = -smooth - grad_m;
  out.alphadot = gains.k1 * smooth + gains.k2 * alpha + gains.k3 * grad_m;
  out.lambdadot = J ? Vec(gains.kp * (*J) * out.xdot + gains.ki * p.h(s.x))
                    : Vec(gains.kp * p.jacobian_times(s.x, out.xdot) +
                          gains.ki * p.h(s.x));
  return out;
}

struct UnconstrainedRhs {
  Vec xdot;
  Vec alphadot;
};

/// Dynamic Prox-CMO without equality constraints (requires m = 0).
inline UnconstrainedRhs dynamic_unconstrained_rhs(const CompositeProblem &p,
                                                  const SystemState &s,
                                                  const GainSet &gains) {
  detail::require(p.m == 0, "dynamic_unconstrained_rhs: problem has constraints");
  detail::check_state(p, s, true);
  const double mu = gains.mu;
  const Vec &alpha = *s.alpha;
  const Vec v = s.x + mu * alpha;
  const Vec grad_m = (v - p.g.eval(v, mu)) / mu;
  const Vec gf = p.f_grad(s.x);
  return {-gf - grad_m, gains.k1 * gf + gains.k2 * alpha + gains.k3 * grad_m};
}

namespace detail {

inline Vec pi_lambda_dot(const CompositeProblem &p, const Vec &x,
                         const Vec &xdot, const GainSet &gains) {
  return gains.kp * p.jacobian_times(x, xdot) + gains.ki * p.h(x);
}

} // namespace detail

/// Baselines. The returned SystemState holds the time derivative of each block.
///   ProxGradFlow: x' = -grad f - grad M(x - mu grad f)
///   NsPDGD:       x' = -grad f - grad M(x + mu alpha),
///                 alpha' = mu grad M(x + mu alpha) - mu alpha
///   PIPGD:        x' = -x + prox_{gamma g}(x - gamma (grad f + J^T lambda)),
///                 lambda' = kp J x' + ki h
///   PICMO:        x' = -grad f - J^T lambda,  lambda' = kp J x' + ki h
///   GradFlow:     x' = -grad f
inline SystemState baseline_rhs(Variant variant, const CompositeProblem &p,
                                const SystemState &s, const GainSet &gains) {
  const double mu = gains.mu;
  SystemState d;
  switch (variant) {
  case Variant::ProxGradFlow: {
    detail::require_size(s.x.size(), p.n, "state x");
    const Vec gf = p.f_grad(s.x);
    const Vec v = s.x - mu * gf;
    d.x = -gf - (v - p.g.eval(v, mu)) / mu;
    d.lambda = Vec::Zero(0);
    return d;
  }
  case Variant::NsPDGD: {
    detail::require_size(s.x.size(), p.n, "state x");
    if (!s.alpha)
      throw DimensionMismatch("state alpha missing");
    detail::require_size(s.alpha->size(), p.n, "state alpha");
    const Vec v = s.x + mu * *s.alpha;
    const Vec grad_m = (v - p.g.eval(v, mu)) / mu;
    d.x = -p.f_grad(s.x) - grad_m;
    d.alpha = Vec(mu * grad_m - mu * *s.alpha);
    d.lambda = Vec::Zero(0);
    return d;
  }
  case Variant::PIPGD: {
    detail::check_state(p, s, false);
    const double gamma = gains.gamma;
    const Vec grad = p.f_grad(s.x) + p.jacobian_transpose_times(s.x, s.lambda);
    d.x = -s.x + p.g.eval(s.x - gamma * grad, gamma);
    d.lambda = detail::pi_lambda_dot(p, s.x, d.x, gains);
    return d;
  }
  case Variant::PICMO: {
    detail::check_state(p, s, false);
    d.x = -p.f_grad(s.x) - p.jacobian_transpose_times(s.x, s.lambda);
    d.lambda = detail::pi_lambda_dot(p, s.x, d.x, gains);
    return d;
  }
  case Variant::GradFlow: {
    detail::require_size(s.x.size(), p.n, "state x");
    d.x = -p.f_grad(s.x);
    d.lambda = Vec::Zero(0);
    return d;
  }
  default:
    throw InvalidArgument("baseline_rhs: '" + std::string(variant_name(variant)) +
                          "' is not a baseline variant");
  }
}

/// Time derivative of any variant, as a SystemState.
inline SystemState state_derivative(Variant variant, const CompositeProblem &p,
                                    const SystemState &s, const GainSet &gains) {
  switch (variant) {
  case Variant::StaticProxCMO: {
    StaticRhs r = static_proxcmo_rhs(p, s, gains);
    return {std::move(r.xdot), std::nullopt, std::move(r.lambdadot)};
  }
  case Variant::DynamicProxCMO: {
    DynamicRhs r = dynamic_proxcmo_rhs(p, s, gains);
    return {std::move(r.xdot), std::move(r.alphadot), std::move(r.lambdadot)};
  }
  case Variant::DynamicProxCMOUnconstrained: {
    UnconstrainedRhs r = dynamic_unconstrained_rhs(p, s, gains);
    return {std::move(r.xdot), std::move(r.alphadot), Vec::Zero(0)};
  }
  default:
    return baseline_rhs(variant, p, s, gains);
  }
}

using VectorField = std::function<Vec(double, const Vec &)>;

/// Packed vector field t, y -> y' for the integrator.
inline VectorField make_vector_field(Variant variant, const CompositeProblem &p,
                                     const GainSet &gains) {
  gains.validate_for(variant);
  if (variant == Variant::DynamicProxCMOUnconstrained)
    detail::require(p.m == 0, "dynamic_unconstrained: problem has constraints");
  const StateLayout layout = layout_for(variant, p);
  return [variant, p, gains, layout](double, const Vec &y) {
    return layout.pack(state_derivative(variant, p, layout.unpack(y), gains));
  };
}

/// |x - prox(x - mu grad f) + mu J^T lambda|, which vanishes exactly at the
/// equilibria of static Prox-CMO (mu |x'|).
inline double static_fixed_point_residual(const CompositeProblem &p,
                                          const SystemState &s, double mu) {
  detail::check_state(p, s, false);
  const Vec pr = p.g.eval(s.x - mu * p.f_grad(s.x), mu);
  return (s.x - pr + mu * p.jacobian_transpose_times(s.x, s.lambda)).norm();
}

/// Stationarity measure each variant drives to zero, used for early stopping.
/// Fixed-point residuals are divided by their prox step (gradient-mapping
/// scale) so one threshold means the same for any mu.
///
/// Static Prox-CMO uses max(fixed-point residual / mu, |h|): its equilibria
/// are KKT points only when mu J^T lambda* does not move the prox argument
/// across a kink of g, so the kkt residual need not vanish there. Dynamic
/// Prox-CMO and PI-PGD use max(kkt stationarity / step, |h|); the
/// unconstrained composite baselines use the kkt stationarity / mu with
/// lambda = 0; PI-CMO and gradient flow ignore g and use |grad f + J^T lambda|
/// (plus |h| for PI-CMO).
inline double variant_residual(Variant variant, const CompositeProblem &p,
                               const GainSet &gains, const SystemState &s) {
  const double feas = p.m > 0 ? p.h(s.x).norm() : 0.0;
  switch (variant) {
  case Variant::StaticProxCMO:
    return std::max(static_fixed_point_residual(p, s, gains.mu) / gains.mu, feas);
  case Variant::DynamicProxCMO:
    return std::max(kkt_residual(p, s, gains.mu).stationarity / gains.mu, feas);
  case Variant::PIPGD:
    return std::max(kkt_residual(p, s, gains.gamma).stationarity / gains.gamma, feas);
  case Variant::DynamicProxCMOUnconstrained:
  case Variant::ProxGradFlow:
  case Variant::NsPDGD: {
    SystemState z{s.x, std::nullopt, Vec::Zero(p.m)};
    return kkt_residual(p, z, gains.mu).stationarity / gains.mu;
  }
  case Variant::PICMO: {
    const double stat =
        (p.f_grad(s.x) + p.jacobian_transpose_times(s.x, s.lambda)).norm();
    return std::max(stat, feas);
  }
  case Variant::GradFlow:
    return p.f_grad(s.x).norm();
  }
  return kInf;
}

} // namespace proxcmo
