/// @file
/// @brief Equality-constrained composite problems
///
///     min f(x) + g(x)   s.t.  h(x) = 0,
///
/// the proximal augmented Lagrangian
///
///     L_mu(x, alpha, lambda) = f(x) + M_{mu g}(x + mu alpha)
///                              - (mu/2)|alpha|^2 + lambda^T h(x),
///
/// and the residuals used to measure stationarity.
#pragma once

#include "proxcmo/core.hpp"
#include "proxcmo/prox.hpp"

#include <Eigen/Eigenvalues>

#include <functional>
#include <optional>
#include <utility>

namespace proxcmo {

/// h(x) = C x + b with C of full row rank.
struct AffineConstraint {
  Mat C;
  Vec b;

  AffineConstraint(Mat C_, Vec b_) : C(std::move(C_)), b(std::move(b_)) {
    detail::require_size(b.size(), C.rows(), "AffineConstraint: b");
    if (C.rows() > 0) {
      Eigen::JacobiSVD<Mat> svd(C);
      const double smin = svd.singularValues()(svd.singularValues().size() - 1);
      if (C.rows() > C.cols() || smin <= 1e-10)
        throw InvalidArgument("AffineConstraint: C must have full row rank");
    }
  }

  Vec value(const Vec &x) const { return C * x + b; }
};

/// Extreme eigenvalues of a symmetric positive semidefinite Gram matrix.
struct SpectralBounds {
  double lo;
  double hi;
};

/// Strong convexity and gradient Lipschitz constants of f.
struct SmoothConstants {
  double m_f;
  double L_f;
};

/// a1 I <= C C^T <= a2 I.
struct ConstraintConstants {
  double a1;
  double a2;
};

namespace detail {

inline SpectralBounds symmetric_extremes(const Mat &S) {
  Eigen::SelfAdjointEigenSolver<Mat> es(S, Eigen::EigenvaluesOnly);
  const Vec &ev = es.eigenvalues();
  return {std::max(ev(0), 0.0), ev(ev.size() - 1)};
}

} // namespace detail

/// Extreme eigenvalues of M^T M.
inline SpectralBounds gram_eigen_bounds(const Mat &M) {
  detail::require(M.size() > 0, "gram_eigen_bounds: empty matrix");
  return detail::symmetric_extremes(M.transpose() * M);
}

/// m_f and L_f of f(x) = 0.5 |A x - b|^2.
inline SmoothConstants quadratic_constants(const Mat &A,
                                           bool require_full_rank = false) {
  const SpectralBounds sb = gram_eigen_bounds(A);
  if (require_full_rank && sb.lo <= 1e-10 * std::max(1.0, sb.hi))
    throw InvalidArgument("quadratic_constants: A^T A is rank deficient");
  return {sb.lo, sb.hi};
}

/// a1 and a2 of an affine constraint (extreme eigenvalues of C C^T).
inline ConstraintConstants constraint_constants(const AffineConstraint &h) {
  detail::require(h.C.size() > 0, "constraint_constants: empty constraint");
  const SpectralBounds sb = detail::symmetric_extremes(h.C * h.C.transpose());
  if (sb.lo <= 1e-10)
    throw InvalidArgument("constraint_constants: C C^T is singular");
  return {sb.lo, sb.hi};
}

/// Oracle bundle for f, g and h. Immutable once built.
struct CompositeProblem {
  Eigen::Index n = 0;
  Eigen::Index m = 0;
  std::function<double(const Vec &)> f_value;
  std::function<Vec(const Vec &)> f_grad;
  ProxOperator g = zero_function();
  std::function<Vec(const Vec &)> h_value;
  std::function<Mat(const Vec &)> h_jacobian;

  /// Set when h is affine; enables the constant-Jacobian fast path.
  std::optional<AffineConstraint> affine;
  std::optional<SmoothConstants> f_constants;
  std::optional<ConstraintConstants> h_constants;

  Vec h(const Vec &x) const { return m == 0 ? Vec(Vec::Zero(0)) : h_value(x); }

  Mat jacobian(const Vec &x) const {
    if (m == 0)
      return Mat::Zero(0, n);
    if (affine)
      return affine->C;
    return h_jacobian(x);
  }

  /// J_h(x)^T lambda without forming the Jacobian twice.
  Vec jacobian_transpose_times(const Vec &x, const Vec &lambda) const {
    if (m == 0)
      return Vec::Zero(n);
    if (affine)
      return affine->C.transpose() * lambda;
    return h_jacobian(x).transpose() * lambda;
  }

  Vec jacobian_times(const Vec &x, const Vec &v) const {
    if (m == 0)
      return Vec::Zero(0);
    if (affine)
      return affine->C * v;
    return h_jacobian(x) * v;
  }

  double objective(const Vec &x) const { return f_value(x) + g.g_value(x); }
};

/// f(x) = 0.5 x^T H x + q^T x. Constants are computed from H when it is
/// symmetric positive semidefinite.
inline CompositeProblem quadratic_problem(Mat H, Vec q, ProxOperator g) {
  detail::require(H.rows() == H.cols(), "quadratic_problem: H must be square");
  detail::require_size(q.size(), H.rows(), "quadratic_problem: q");
  CompositeProblem p;
  p.n = H.rows();
  p.g = std::move(g);
  const SpectralBounds sb = detail::symmetric_extremes(0.5 * (H + H.transpose()));
  p.f_constants = SmoothConstants{sb.lo, sb.hi};
  p.f_value = [H, q](const Vec &x) { return 0.5 * x.dot(H * x) + q.dot(x); };
  p.f_grad = [H, q](const Vec &x) { return Vec(H * x + q); };
  return p;
}

/// f(x) = 0.5 |A x - b|^2.
inline CompositeProblem least_squares_problem(const Mat &A, const Vec &b,
                                              ProxOperator g) {
  detail::require_size(b.size(), A.rows(), "least_squares_problem: b");
  CompositeProblem p;
  p.n = A.cols();
  p.g = std::move(g);
  p.f_constants = quadratic_constants(A);
  const Mat AtA = A.transpose() * A;
  const Vec Atb = A.transpose() * b;
  p.f_value = [A, b](const Vec &x) { return 0.5 * (A * x - b).squaredNorm(); };
  p.f_grad = [AtA, Atb](const Vec &x) { return Vec(AtA * x - Atb); };
  return p;
}

/// Attach h(x) = C x + b; fills a1, a2.
inline CompositeProblem with_affine_constraint(CompositeProblem p,
                                               AffineConstraint h) {
  detail::require_size(h.C.cols(), p.n, "with_affine_constraint: C columns");
  p.m = h.C.rows();
  p.h_constants = constraint_constants(h);
  p.h_value = [h](const Vec &x) { return h.value(x); };
  p.h_jacobian = [C = h.C](const Vec &) { return C; };
  p.affine = std::move(h);
  return p;
}

/// Stacked primal/dual state (x, alpha, lambda). lambda is empty when m = 0.
struct SystemState {
  Vec x;
  std::optional<Vec> alpha;
  Vec lambda;

  Eigen::Index size() const {
    return x.size() + (alpha ? alpha->size() : 0) + lambda.size();
  }
};

namespace detail {

inline void check_state(const CompositeProblem &p, const SystemState &s,
                        bool need_alpha) {
  require_size(s.x.size(), p.n, "state x");
  require_size(s.lambda.size(), p.m, "state lambda");
  if (need_alpha) {
    if (!s.alpha)
      throw DimensionMismatch("state alpha missing");
    require_size(s.alpha->size(), p.n, "state alpha");
  }
}

} // namespace detail

/// L_mu(x, alpha, lambda).
inline double aug_lagrangian(const CompositeProblem &p, const SystemState &s,
                             double mu) {
  detail::check_state(p, s, true);
  const MoreauEnvelope env(p.g, mu);
  const Vec &a = *s.alpha;
  double value = p.f_value(s.x) + env.value(s.x + mu * a) - 0.5 * mu * a.squaredNorm();
  if (p.m > 0)
    value += s.lambda.dot(p.h(s.x));
  return value;
}

struct KktResidual {
  double stationarity;
  double feasibility;
  double max() const { return std::max(stationarity, feasibility); }
};

/// Fixed-point stationarity |x - prox_{mu g}(x - mu (grad f + J^T lambda))|
/// and feasibility |h(x)|.
inline KktResidual kkt_residual(const CompositeProblem &p, const SystemState &s,
                                double mu) {
  detail::check_state(p, s, false);
  detail::require(mu > 0.0, "kkt_residual: mu must be positive");
  const Vec grad = p.f_grad(s.x) + p.jacobian_transpose_times(s.x, s.lambda);
  const double stat = (s.x - p.g.eval(s.x - mu * grad, mu)).norm();
  const double feas = p.m > 0 ? p.h(s.x).norm() : 0.0;
  return {stat, feas};
}

/// Norm of the stacked saddle conditions
///   grad f + grad M(x + mu alpha) + J^T lambda,
///   mu grad M(x + mu alpha) - mu alpha,
///   h(x).
inline double saddle_residual(const CompositeProblem &p, const SystemState &s,
                              double mu) {
  detail::check_state(p, s, true);
  const MoreauEnvelope env(p.g, mu);
  const Vec &a = *s.alpha;
  const Vec gm = env.gradient(s.x + mu * a);
  const Vec r1 = p.f_grad(s.x) + gm + p.jacobian_transpose_times(s.x, s.lambda);
  const Vec r2 = mu * (gm - a);
  double sq = r1.squaredNorm() + r2.squaredNorm();
  if (p.m > 0)
    sq += p.h(s.x).squaredNorm();
  return std::sqrt(sq);
}

} // namespace proxcmo
