/// @file
/// @brief Proximal operators, Moreau envelopes and the Dykstra projection onto
/// an infinity-ball / 2-ball intersection.
///
/// For a closed proper function g and mu > 0,
///
///     prox_{mu g}(v) = argmin_x  g(x) + |x - v|^2 / (2 mu)
///     M_{mu g}(v)    = g(prox_{mu g}(v)) + |prox_{mu g}(v) - v|^2 / (2 mu)
///     grad M_{mu g}(v) = (v - prox_{mu g}(v)) / mu
///
/// Every operator here is a pure function of its inputs.
#pragma once

#include "proxcmo/core.hpp"

#include <algorithm>
#include <functional>
#include <string>
#include <utility>

namespace proxcmo {

/// A nonsmooth term g together with its scaled proximal map.
struct ProxOperator {
  using EvalFn = std::function<Vec(const Vec &, double)>;
  using ValueFn = std::function<double(const Vec &)>;

  std::string name;
  EvalFn eval_fn;
  ValueFn value_fn;
  /// False for the Shidoku rounding; the convergence theory does not cover it.
  bool convex = true;

  /// prox_{mu g}(v).
  Vec eval(const Vec &v, double mu) const {
    detail::require(mu > 0.0, name + ": prox parameter mu must be positive");
    return eval_fn(v, mu);
  }

  /// g(x); +infinity outside the domain of an indicator.
  double g_value(const Vec &x) const { return value_fn(x); }
};

/// Componentwise sign(v_i) * max(|v_i| - mu, 0).
inline Vec soft_threshold(const Vec &v, double mu) {
  detail::require(mu > 0.0, "soft_threshold: mu must be positive");
  return v.unaryExpr([mu](double vi) {
    return detail::sign(vi) * std::max(std::abs(vi) - mu, 0.0);
  });
}

/// Projection onto the Shidoku alphabet {1,2,3,4} with half-open cells
/// (-inf,1.5] -> 1, (1.5,2.5] -> 2, (2.5,3.5] -> 3, (3.5,inf) -> 4.
inline Vec project_shidoku(const Vec &v) {
  return v.unaryExpr([](double vi) {
    if (vi <= 1.5)
      return 1.0;
    if (vi <= 2.5)
      return 2.0;
    if (vi <= 3.5)
      return 3.0;
    return 4.0;
  });
}

/// The set { eta : |eta|_inf <= inf_radius, |eta|_2 <= two_radius }.
struct IntersectionSet {
  double inf_radius;
  double two_radius;

  IntersectionSet(double inf_r, double two_r)
      : inf_radius(inf_r), two_radius(two_r) {
    detail::require(inf_r > 0.0 && two_r > 0.0,
                    "IntersectionSet: radii must be strictly positive");
  }

  bool contains(const Vec &v, double slack = 0.0) const {
    return v.lpNorm<Eigen::Infinity>() <= inf_radius + slack &&
           v.norm() <= two_radius + slack;
  }
};

struct DykstraOptions {
  double tol = 1e-10;
  int max_iter = 10000;
};

namespace detail {

inline Vec clamp_box(const Vec &v, double r) {
  return v.cwiseMax(-r).cwiseMin(r);
}

inline Vec scale_into_ball(const Vec &v, double r) {
  const double nv = v.norm();
  return nv <= r ? v : Vec(v * (r / nv));
}

} // namespace detail

/// Euclidean projection of v onto the intersection set by Dykstra's
/// alternating projections (box first, then ball, with correction terms).
///
/// Stops once the successive-iterate displacement, both correction
/// increments and the box infeasibility all drop below @p opts.tol. The two
/// shortcut cases (one single-set projection already lands in the other set)
/// return that projection directly since it is then the exact answer.
///
/// Throws NonConvergence when max_iter is exhausted.
inline Vec dykstra_project(const Vec &v, const IntersectionSet &set,
                           const DykstraOptions &opts = {}) {
  detail::require(opts.tol > 0.0, "dykstra_project: tol must be positive");
  detail::require(opts.max_iter > 0, "dykstra_project: max_iter must be positive");
  const double gamma = set.inf_radius;
  const double eps = set.two_radius;

  if (set.contains(v))
    return v;
  Vec box = detail::clamp_box(v, gamma);
  if (box.norm() <= eps)
    return box;
  Vec ball = detail::scale_into_ball(v, eps);
  if (ball.lpNorm<Eigen::Infinity>() <= gamma)
    return ball;

  Vec x = v;
  Vec p = Vec::Zero(v.size());
  Vec q = Vec::Zero(v.size());
  double residual = kInf;
  for (int it = 0; it < opts.max_iter; ++it) {
    const Vec y = detail::clamp_box(x + p, gamma);
    const Vec dp = x - y;
    p += dp;
    const Vec x_next = detail::scale_into_ball(y + q, eps);
    const Vec dq = y - x_next;
    q += dq;
    const double infeas =
        std::max(x_next.lpNorm<Eigen::Infinity>() - gamma, 0.0);
    // The iterate can sit still while the corrections keep growing, so the
    // gap between the two projections has to close as well.
    residual = std::max({(x_next - x).norm(), dp.norm(), dq.norm(), infeas});
    x = x_next;
    if (residual < opts.tol)
      return x;
  }
  throw NonConvergence("dykstra_project: no convergence within " +
                           std::to_string(opts.max_iter) + " iterations",
                       residual);
}

/// Inline overload with explicit tolerance and budget.
inline Vec dykstra_project(const Vec &v, const IntersectionSet &set, double tol,
                           int max_iter) {
  return dykstra_project(v, set, DykstraOptions{tol, max_iter});
}

/// Moreau envelope of g at smoothing parameter mu.
class MoreauEnvelope {
public:
  MoreauEnvelope(ProxOperator prox, double mu) : prox_(std::move(prox)), mu_(mu) {
    detail::require(mu > 0.0, "MoreauEnvelope: mu must be positive");
  }

  const ProxOperator &prox() const { return prox_; }
  double mu() const { return mu_; }

  /// g(prox(v)) + |prox(v) - v|^2 / (2 mu). Throws if g is infinite at the
  /// prox output, which means the prox implementation is broken.
  double value(const Vec &v) const {
    const Vec p = prox_.eval(v, mu_);
    const double g = prox_.g_value(p);
    if (!std::isfinite(g))
      throw Error("MoreauEnvelope: g is not finite at prox output of '" +
                  prox_.name + "'");
    return g + (p - v).squaredNorm() / (2.0 * mu_);
  }

  Vec gradient(const Vec &v) const { return (v - prox_.eval(v, mu_)) / mu_; }

private:
  ProxOperator prox_;
  double mu_;
};

inline Vec moreau_grad(const MoreauEnvelope &env, const Vec &v) {
  return env.gradient(v);
}

inline double moreau_value(const MoreauEnvelope &env, const Vec &v) {
  return env.value(v);
}

// ---------------------------------------------------------------------------
// Operator factories
// ---------------------------------------------------------------------------

/// g(x) = weight * |x|_1.
inline ProxOperator l1_norm(double weight = 1.0) {
  detail::require(weight > 0.0, "l1_norm: weight must be positive");
  return ProxOperator{
      "l1",
      [weight](const Vec &v, double mu) { return soft_threshold(v, mu * weight); },
      [weight](const Vec &x) { return weight * x.lpNorm<1>(); }, true};
}

/// g = 0; prox is the identity.
inline ProxOperator zero_function() {
  return ProxOperator{"zero", [](const Vec &v, double) { return v; },
                      [](const Vec &) { return 0.0; }, true};
}

/// Indicator of the box [lo, hi]^n.
inline ProxOperator box_indicator(double lo, double hi) {
  detail::require(lo <= hi, "box_indicator: lo must not exceed hi");
  return ProxOperator{
      "box",
      [lo, hi](const Vec &v, double) { return Vec(v.cwiseMax(lo).cwiseMin(hi)); },
      [lo, hi](const Vec &x) {
        return (x.array() >= lo).all() && (x.array() <= hi).all() ? 0.0 : kInf;
      },
      true};
}

/// Indicator of {1,2,3,4}^n. Nonconvex: the Moreau identities are used
/// heuristically and no convergence theorem applies.
inline ProxOperator shidoku_indicator() {
  return ProxOperator{
      "shidoku",
      [](const Vec &v, double) { return project_shidoku(v); },
      [](const Vec &x) {
        for (Eigen::Index i = 0; i < x.size(); ++i) {
          const double r = std::round(x[i]);
          if (r != x[i] || r < 1.0 || r > 4.0)
            return kInf;
        }
        return 0.0;
      },
      false};
}

/// Indicator of an IntersectionSet, prox evaluated with Dykstra.
inline ProxOperator intersection_indicator(IntersectionSet set,
                                           DykstraOptions opts = {}) {
  return ProxOperator{
      "linf_l2_intersection",
      [set, opts](const Vec &v, double) { return dykstra_project(v, set, opts); },
      [set, opts](const Vec &x) {
        // Dykstra output is feasible only up to its stopping tolerance
        return set.contains(x, 10.0 * opts.tol) ? 0.0 : kInf;
      },
      true};
}

/// Separable sum g(x) = head(x[0:k]) + tail(x[k:]).
inline ProxOperator split_prox(Eigen::Index head_size, ProxOperator head,
                               ProxOperator tail) {
  detail::require(head_size >= 0, "split_prox: head size must be non-negative");
  const std::string name = head.name + "+" + tail.name;
  const bool convex = head.convex && tail.convex;
  return ProxOperator{
      name,
      [head_size, head, tail](const Vec &v, double mu) {
        detail::require(v.size() >= head_size, "split_prox: input too short");
        Vec out(v.size());
        out.head(head_size) = head.eval(v.head(head_size), mu);
        out.tail(v.size() - head_size) = tail.eval(v.tail(v.size() - head_size), mu);
        return out;
      },
      [head_size, head, tail](const Vec &x) {
        return head.g_value(x.head(head_size)) +
               tail.g_value(x.tail(x.size() - head_size));
      },
      convex};
}

} // namespace proxcmo
