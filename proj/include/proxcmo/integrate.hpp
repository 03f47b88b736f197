/// @file
/// @brief Adaptive Dormand-Prince 5(4) and fixed-step RK4 integration with
/// trajectory recording.
#pragma once

#include "proxcmo/core.hpp"

#include <algorithm>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace proxcmo {

/// Integration failure carrying the simulated time at which it happened.
class IntegrationError : public Error {
public:
  enum class Kind { StepUnderflow, NonFinite };

  IntegrationError(Kind kind, double t, const std::string &what)
      : Error(what), kind_(kind), t_(t) {}

  Kind kind() const { return kind_; }
  double time() const { return t_; }

private:
  Kind kind_;
  double t_;
};

inline std::string to_string(IntegrationError::Kind k) {
  return k == IntegrationError::Kind::StepUnderflow ? "StepUnderflow" : "NonFinite";
}

struct IntegratorConfig {
  double abs_tol = 1e-8;
  double rel_tol = 1e-6;
  double t_end = 1.0;
  double max_step = 0.1;
  double min_step = 1e-9;
  /// Stop as soon as the residual callback drops below this at an accepted step.
  std::optional<double> stop_residual;
  /// Record every k-th accepted step (the first and last are always kept).
  int record_stride = 1;

  void validate() const {
    detail::require(abs_tol > 0.0 && rel_tol > 0.0,
                    "IntegratorConfig: tolerances must be positive");
    detail::require(t_end > 0.0, "IntegratorConfig: t_end must be positive");
    detail::require(min_step > 0.0 && min_step <= max_step,
                    "IntegratorConfig: need 0 < min_step <= max_step");
    detail::require(record_stride >= 1, "IntegratorConfig: record_stride >= 1");
    detail::require(!stop_residual || *stop_residual > 0.0,
                    "IntegratorConfig: stop_residual must be positive");
  }
};

/// Recorded samples of one integration. States are stored packed; per-sample
/// metrics are filled by the caller from the stored states.
struct Trajectory {
  std::vector<double> times;
  std::vector<Vec> states;
  std::map<std::string, std::vector<double>> metrics;

  std::size_t accepted_steps = 0;
  std::size_t rejected_steps = 0;
  std::size_t rhs_evaluations = 0;
  /// True when the stop residual fired before t_end.
  bool stopped_early = false;
  /// Residual at the last accepted step, when a residual callback was given.
  std::optional<double> final_residual;

  std::size_t size() const { return times.size(); }
  const Vec &final_state() const { return states.back(); }
  double final_time() const { return times.back(); }

  /// Evaluate @p fn on every stored state and store it as metric @p name.
  template <typename Fn> void add_metric(const std::string &name, Fn &&fn) {
    std::vector<double> values;
    values.reserve(states.size());
    for (const Vec &y : states)
      values.push_back(fn(y));
    metrics[name] = std::move(values);
  }
};

using Rhs = std::function<Vec(double, const Vec &)>;
using ResidualFn = std::function<double(const Vec &)>;

namespace detail {

inline void check_finite(const Vec &y, double t) {
  if (!y.allFinite())
    throw IntegrationError(IntegrationError::Kind::NonFinite, t,
                           "integration produced a non-finite state at t = " +
                               std::to_string(t));
}

// Dormand-Prince 5(4) tableau.
struct DormandPrince {
  static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
  static constexpr double a21 = 1.0 / 5;
  static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187,
                          a53 = 64448.0 / 6561, a54 = -212.0 / 729;
  static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33,
                          a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                          a65 = -5103.0 / 18656;
  static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                          b5 = -2187.0 / 6784, b6 = 11.0 / 84;
  // b - b_hat (fifth minus fourth order weights)
  static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695,
                          e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                          e6 = 22.0 / 525, e7 = -1.0 / 40;
};

} // namespace detail

/// Embedded explicit Runge-Kutta 5(4) (Dormand-Prince, FSAL) with
/// error-per-step control.
///
/// A step is accepted when max_i |err_i| / (abs_tol + rel_tol max(|y_i|,
/// |y_new_i|)) <= 1. The next step is scaled by 0.9 err^(-1/5) clipped to
/// [0.2, 5]. A step that would have to go below min_step raises
/// StepUnderflow; a NaN/Inf state raises NonFinite.
inline Trajectory integrate_adaptive(const Rhs &rhs, const Vec &y0,
                                     const IntegratorConfig &cfg,
                                     const ResidualFn &residual = {}) {
  using DP = detail::DormandPrince;
  cfg.validate();
  detail::check_finite(y0, 0.0);

  Trajectory traj;
  double t = 0.0;
  Vec y = y0;
  traj.times.push_back(t);
  traj.states.push_back(y);

  if (residual && cfg.stop_residual) {
    const double r = residual(y);
    traj.final_residual = r;
    if (r <= *cfg.stop_residual) {
      traj.stopped_early = true;
      return traj;
    }
  }

  Vec k1 = rhs(t, y);
  ++traj.rhs_evaluations;
  detail::check_finite(k1, t);

  // initial step from the scale of the derivative
  const Vec sc0 = (cfg.abs_tol + cfg.rel_tol * y.array().abs()).matrix();
  const double d0 = (y.array() / sc0.array()).matrix().lpNorm<Eigen::Infinity>();
  const double d1 = (k1.array() / sc0.array()).matrix().lpNorm<Eigen::Infinity>();
  double h = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
  h = std::clamp(h, cfg.min_step, cfg.max_step);

  std::size_t since_record = 0;
  const int n = static_cast<int>(y.size());
  Vec k2(n), k3(n), k4(n), k5(n), k6(n), k7(n), y_new(n), err(n);

  while (t < cfg.t_end) {
    bool last = false;
    if (t + h >= cfg.t_end) {
      h = cfg.t_end - t;
      last = true;
    }
    k2 = rhs(t + DP::c2 * h, y + h * (DP::a21 * k1));
    k3 = rhs(t + DP::c3 * h, y + h * (DP::a31 * k1 + DP::a32 * k2));
    k4 = rhs(t + DP::c4 * h, y + h * (DP::a41 * k1 + DP::a42 * k2 + DP::a43 * k3));
    k5 = rhs(t + DP::c5 * h,
             y + h * (DP::a51 * k1 + DP::a52 * k2 + DP::a53 * k3 + DP::a54 * k4));
    k6 = rhs(t + h, y + h * (DP::a61 * k1 + DP::a62 * k2 + DP::a63 * k3 +
                             DP::a64 * k4 + DP::a65 * k5));
    y_new = y + h * (DP::b1 * k1 + DP::b3 * k3 + DP::b4 * k4 + DP::b5 * k5 +
                     DP::b6 * k6);
    k7 = rhs(t + h, y_new);
    traj.rhs_evaluations += 6;

    err = h * (DP::e1 * k1 + DP::e3 * k3 + DP::e4 * k4 + DP::e5 * k5 +
               DP::e6 * k6 + DP::e7 * k7);
    const Eigen::ArrayXd scale =
        cfg.abs_tol + cfg.rel_tol * y.array().abs().max(y_new.array().abs());
    double err_norm = (err.array().abs() / scale).maxCoeff();
    if (!std::isfinite(err_norm))
      err_norm = kInf;

    if (err_norm <= 1.0) {
      detail::check_finite(y_new, t + h);
      t = last ? cfg.t_end : t + h;
      y.swap(y_new);
      k1.swap(k7);
      ++traj.accepted_steps;

      bool stop = false;
      if (residual && cfg.stop_residual) {
        const double r = residual(y);
        traj.final_residual = r;
        stop = r <= *cfg.stop_residual;
      }
      if (++since_record >= static_cast<std::size_t>(cfg.record_stride) ||
          stop || t >= cfg.t_end) {
        traj.times.push_back(t);
        traj.states.push_back(y);
        since_record = 0;
      }
      if (stop) {
        traj.stopped_early = t < cfg.t_end;
        break;
      }
      const double factor =
          err_norm == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(err_norm, -0.2), 0.2, 5.0);
      h = std::min(h * factor, cfg.max_step);
    } else {
      ++traj.rejected_steps;
      const double factor =
          std::isfinite(err_norm) ? std::clamp(0.9 * std::pow(err_norm, -0.2), 0.2, 1.0)
                                  : 0.2;
      h *= factor;
      if (h < cfg.min_step)
        throw IntegrationError(IntegrationError::Kind::StepUnderflow, t,
                               "step size underflow at t = " + std::to_string(t) +
                                   " (likely stiffness)");
    }
  }
  if (traj.times.back() != t) {
    traj.times.push_back(t);
    traj.states.push_back(y);
  }
  return traj;
}

/// Classical fourth-order Runge-Kutta with a fixed step. The final step is
/// shortened to land on t_end. Requires 0 < dt <= t_end.
inline Trajectory integrate_fixed_rk4(const Rhs &rhs, const Vec &y0, double dt,
                                      double t_end, int record_stride = 1) {
  detail::require(dt > 0.0, "integrate_fixed_rk4: dt must be positive");
  detail::require(t_end > 0.0, "integrate_fixed_rk4: t_end must be positive");
  detail::require(dt <= t_end, "integrate_fixed_rk4: dt exceeds t_end");
  detail::require(record_stride >= 1, "integrate_fixed_rk4: record_stride >= 1");
  detail::check_finite(y0, 0.0);

  Trajectory traj;
  Vec y = y0;
  traj.times.push_back(0.0);
  traj.states.push_back(y);
  const auto steps = static_cast<long long>(std::ceil(t_end / dt - 1e-12));
  for (long long i = 0; i < steps; ++i) {
    const double t = static_cast<double>(i) * dt;
    const double h = std::min(dt, t_end - t);
    const Vec k1 = rhs(t, y);
    const Vec k2 = rhs(t + 0.5 * h, y + 0.5 * h * k1);
    const Vec k3 = rhs(t + 0.5 * h, y + 0.5 * h * k2);
    const Vec k4 = rhs(t + h, y + h * k3);
    y += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    traj.rhs_evaluations += 4;
    ++traj.accepted_steps;
    const double t_next = i + 1 == steps ? t_end : t + h;
    detail::check_finite(y, t_next);
    if ((i + 1) % record_stride == 0 || i + 1 == steps) {
      traj.times.push_back(t_next);
      traj.states.push_back(y);
    }
  }
  return traj;
}

} // namespace proxcmo
