/// @file
/// @brief Gain certificates for the static and dynamic Prox-CMO closed loops:
/// feasibility of a gain choice, the guaranteed exponential rate r (the
/// quadratic Lyapunov function V satisfies V' <= -r V), and the Lyapunov
/// weights.
///
/// Certificates never throw on infeasible gains; they report the violated
/// inequalities by name so experiments with uncertified gains still run.
#pragma once

#include "proxcmo/core.hpp"
#include "proxcmo/problem.hpp"

#include <string>
#include <vector>

namespace proxcmo {

enum class Theorem { T1, T3, T4 };

inline std::string to_string(Theorem t) {
  switch (t) {
  case Theorem::T1: return "t1";
  case Theorem::T3: return "t3";
  case Theorem::T4: return "t4";
  }
  return "?";
}

/// Weights of V(s) = (s - s*)^T P (s - s*), P = diag(primal I, I, lambda I).
/// T1 state is (x, lambda) with P = diag(rho I, I): primal = rho, dual = 1.
/// T3 state is (x, alpha) with P = diag((k3/mu) I, I).
/// T4 state is (x, alpha, lambda) with P = diag((k3/mu) I, I, gamma I).
struct LyapunovWeights {
  double primal = 1.0;
  double alpha = 1.0;
  double lambda = 1.0;
};

struct TheoremCertificate {
  Theorem theorem = Theorem::T1;
  bool feasible = false;
  double rate_r = 0.0;
  LyapunovWeights weights;
  std::vector<std::string> violated_conditions;
  /// Assumptions used by the proof that the certificate does not check.
  std::vector<std::string> notes;

  // T1: synthesized proportional gain and rho = ki - kp (L_f + 1/mu).
  double kp = 0.0;
  double rho = 0.0;
  double eps_bound = 0.0;
  // T3/T4.
  double k2_crit = 0.0;
  // T4.
  double gamma = 0.0;
  double k2_bound = 0.0;
  double eps_best = 0.0;
  double delta_best = 0.0;
};

/// Static Prox-CMO. Sets kp = eps ki / (L_f + 1/mu) and
///   r = min(1.5 m_f (1+eps)/(1-eps) - 2 eps/(1-eps) (L_f + 1/mu), kp a1)
/// when eps < 3 m_f / (4 (L_f + 1/mu) - 3 m_f).
inline TheoremCertificate theorem1_certify(double m_f, double L_f, double mu,
                                           double k_i, double epsilon, double a1) {
  TheoremCertificate c;
  c.theorem = Theorem::T1;
  auto& v = c.violated_conditions;
  if (!(m_f > 0.0)) v.emplace_back("m_f>0");
  if (!(L_f >= m_f)) v.emplace_back("L_f>=m_f");
  if (!(mu > 0.0)) v.emplace_back("mu>0");
  if (!(k_i > 0.0)) v.emplace_back("k_i>0");
  if (!(a1 > 0.0)) v.emplace_back("a1>0");
  if (!(epsilon > 0.0)) v.emplace_back("eps>0");
  if (!v.empty())
    return c;

  const double s = L_f + 1.0 / mu;
  c.eps_bound = 3.0 * m_f / (4.0 * s - 3.0 * m_f);
  c.kp = epsilon * k_i / s;
  c.rho = k_i - c.kp * s;
  if (!(epsilon < c.eps_bound)) {
    v.emplace_back("eps<3m_f/(4(L_f+1/mu)-3m_f)");
    return c;
  }
  const double r_primal = 1.5 * m_f * (1.0 + epsilon) / (1.0 - epsilon) -
                          2.0 * epsilon / (1.0 - epsilon) * s;
  c.rate_r = std::min(r_primal, c.kp * a1);
  c.weights = {c.rho, 1.0, 1.0};
  if (mu * L_f > 1.0)
    c.notes.emplace_back("mu<=1/L_f is assumed by the Z-matrix bound of the proof");
  c.feasible = c.rate_r > 0.0 && c.rho > 0.0;
  if (!c.feasible) {
    v.emplace_back("r>0");
    c.rate_r = 0.0;
  }
  return c;
}

/// k2_crit = -k3 - (k1^2 mu / (2 k3)) (L_f^2 / m_f).
inline double k2_critical(double k1, double k3, double mu, double m_f, double L_f) {
  return -k3 - (k1 * k1 * mu / (2.0 * k3)) * (L_f * L_f / m_f);
}

/// Dynamic Prox-CMO without constraints. Feasible iff k1, k3 > 0 and
/// k2 < k2_crit; rate r = min(m_f, -2 (k2 - k2_crit)).
inline TheoremCertificate theorem3_certify(double k1, double k2, double k3,
                                           double mu, double m_f, double L_f) {
  TheoremCertificate c;
  c.theorem = Theorem::T3;
  auto& v = c.violated_conditions;
  if (!(k1 > 0.0)) v.emplace_back("k1>0");
  if (!(k3 > 0.0)) v.emplace_back("k3>0");
  if (!(mu > 0.0)) v.emplace_back("mu>0");
  if (!(m_f > 0.0)) v.emplace_back("m_f>0");
  if (!(L_f >= m_f)) v.emplace_back("L_f>=m_f");
  if (k3 != 0.0 && m_f > 0.0)
    c.k2_crit = k2_critical(k1, k3, mu, m_f, L_f);
  if (!v.empty())
    return c;
  if (!(k2 < c.k2_crit)) {
    v.emplace_back("k2<k2_crit");
    return c;
  }
  c.rate_r = std::min(m_f, -2.0 * (k2 - c.k2_crit));
  c.weights = {k3 / mu, 1.0, 1.0};
  c.feasible = true;
  return c;
}

struct Theorem4Options {
  /// Number of interior grid points used to choose eps in (0, -k2 (L_f + 1/mu)^2).
  int eps_grid = 1000;
  /// Relative tolerance of the coupling check k1 = k3.
  double coupling_tol = 1e-12;
};

/// Dynamic Prox-CMO with affine constraints.
///
/// The proof couples k3/mu = gamma ki and mu gamma ki = k1, so gamma =
/// k1 / (mu ki) and k1 = k3 are required. With those, the certificate checks
///   k2 < min(k2_crit, -2 k1^2/(gamma kp) - 2 kp gamma),
/// scans eps over the open interval (0, -k2 (L_f + 1/mu)^2), and for each eps
/// forms delta = eps - eps^2 / (k2 (L_f + 1/mu)^2); the eps giving the largest
///   r = min(-2 (k2 - k2_crit), kp a1, -k2/2, 2 m_f + k1/k2 - mu delta / k1)
/// with delta < 2 m_f k1/mu + k1^2/(mu k2) is returned.
inline TheoremCertificate theorem4_certify(double k1, double k2, double k3,
                                           double mu, double m_f, double L_f,
                                           double a1, double k_i, double k_p,
                                           const Theorem4Options &opts = {}) {
  TheoremCertificate c;
  c.theorem = Theorem::T4;
  auto& v = c.violated_conditions;
  if (!(k1 > 0.0)) v.emplace_back("k1>0");
  if (!(k3 > 0.0)) v.emplace_back("k3>0");
  if (!(k_i > 0.0)) v.emplace_back("k_i>0");
  if (!(k_p > 0.0)) v.emplace_back("k_p>0");
  if (!(mu > 0.0)) v.emplace_back("mu>0");
  if (!(m_f > 0.0)) v.emplace_back("m_f>0");
  if (!(L_f >= m_f)) v.emplace_back("L_f>=m_f");
  if (!(a1 > 0.0)) v.emplace_back("a1>0");
  if (!v.empty())
    return c;

  c.gamma = k1 / (mu * k_i);
  if (std::abs(k1 - k3) > opts.coupling_tol * std::max(std::abs(k1), std::abs(k3)))
    v.emplace_back("proof coupling k1=k3");
  c.k2_crit = k2_critical(k1, k3, mu, m_f, L_f);
  const double k2_gain = -2.0 * k1 * k1 / (c.gamma * k_p) - 2.0 * k_p * c.gamma;
  c.k2_bound = std::min(c.k2_crit, k2_gain);
  if (!(k2 < c.k2_crit)) v.emplace_back("k2<k2_crit");
  if (!(k2 < k2_gain)) v.emplace_back("k2<-2k1^2/(gamma kp)-2kp gamma");
  if (!v.empty())
    return c;

  const double s2 = (L_f + 1.0 / mu) * (L_f + 1.0 / mu);
  const double eps_max = -k2 * s2;
  const double delta_max = 2.0 * m_f * k1 / mu + k1 * k1 / (mu * k2);
  const double r_fixed = std::min({-2.0 * (k2 - c.k2_crit), k_p * a1, -k2 / 2.0});
  double best = -kInf;
  for (int j = 1; j <= opts.eps_grid; ++j) {
    const double eps = eps_max * static_cast<double>(j) / (opts.eps_grid + 1);
    const double delta = eps - eps * eps / (k2 * s2);
    if (!(delta < delta_max))
      continue;
    const double r = std::min(r_fixed, 2.0 * m_f + k1 / k2 - mu * delta / k1);
    if (r > best) {
      best = r;
      c.eps_best = eps;
      c.delta_best = delta;
    }
  }
  if (!(best > 0.0)) {
    v.emplace_back("delta<2m_f k1/mu+k1^2/(mu k2)");
    return c;
  }
  c.rate_r = best;
  c.weights = {k3 / mu, 1.0, c.gamma};
  c.feasible = true;
  return c;
}

/// V(s) = (s - s*)^T P (s - s*) with the certificate's weights. Blocks that
/// are absent from the states contribute nothing.
inline double lyapunov_value(const TheoremCertificate &cert, const SystemState &s,
                             const SystemState &s_star) {
  if (!cert.feasible)
    throw InvalidArgument("lyapunov_value: certificate is infeasible");
  detail::require_size(s.x.size(), s_star.x.size(), "lyapunov_value: x");
  detail::require_size(s.lambda.size(), s_star.lambda.size(), "lyapunov_value: lambda");
  double v = cert.weights.primal * (s.x - s_star.x).squaredNorm();
  if (cert.theorem != Theorem::T1) {
    if (!s.alpha || !s_star.alpha)
      throw DimensionMismatch("lyapunov_value: alpha block required");
    detail::require_size(s.alpha->size(), s_star.alpha->size(), "lyapunov_value: alpha");
    v += cert.weights.alpha * (*s.alpha - *s_star.alpha).squaredNorm();
  }
  if (cert.theorem != Theorem::T3)
    v += cert.weights.lambda * (s.lambda - s_star.lambda).squaredNorm();
  return v;
}

} // namespace proxcmo
