/// @file
/// @brief Shared vector types, error types and the portable random generator.
#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>

namespace proxcmo {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

constexpr double kInf = std::numeric_limits<double>::infinity();

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// A precondition on an argument was violated (non-positive step, bad size, ...).
class InvalidArgument : public Error {
public:
  using Error::Error;
};

/// Block sizes of two vectors or matrices disagree.
class DimensionMismatch : public Error {
public:
  using Error::Error;
};

/// An iterative inner solver exhausted its budget.
class NonConvergence : public Error {
public:
  NonConvergence(const std::string &what, double residual)
      : Error(what), residual_(residual) {}
  double residual() const { return residual_; }

private:
  double residual_;
};

namespace detail {

inline void require(bool cond, const std::string &msg) {
  if (!cond)
    throw InvalidArgument(msg);
}

inline void require_size(Eigen::Index got, Eigen::Index want,
                         const char *what) {
  if (got != want)
    throw DimensionMismatch(std::string(what) + ": expected size " +
                            std::to_string(want) + ", got " +
                            std::to_string(got));
}

inline double sign(double v) { return (v > 0.0) - (v < 0.0); }

} // namespace detail

/// Seedable generator with a fixed output sequence on every platform.
///
/// The engine is std::mt19937_64, whose output is pinned by the standard.
/// The standard distributions are implementation-defined, so uniform and
/// normal variates are derived here from the raw 64-bit words: uniforms use
/// the top 53 bits, normals use the Box-Muller transform (one value per pair
/// of uniforms, no caching).
class Rng {
public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1).
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double normal(double mean = 0.0, double stddev = 1.0) {
    double u1 = uniform();
    while (u1 <= 0.0)
      u1 = uniform();
    const double u2 = uniform();
    const double z =
        std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    return mean + stddev * z;
  }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    // rejection keeps the draw unbiased
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t r = engine_();
    while (r >= limit)
      r = engine_();
    return r % n;
  }

  Vec normal_vector(Eigen::Index n, double mean = 0.0, double stddev = 1.0) {
    Vec v(n);
    for (Eigen::Index i = 0; i < n; ++i)
      v[i] = normal(mean, stddev);
    return v;
  }

  Vec uniform_vector(Eigen::Index n, double lo, double hi) {
    Vec v(n);
    for (Eigen::Index i = 0; i < n; ++i)
      v[i] = uniform(lo, hi);
    return v;
  }

  Mat normal_matrix(Eigen::Index rows, Eigen::Index cols, double mean = 0.0,
                    double stddev = 1.0) {
    Mat m(rows, cols);
    // row-major fill so the sequence does not depend on Eigen's storage order
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j)
        m(i, j) = normal(mean, stddev);
    return m;
  }

private:
  std::mt19937_64 engine_;
};

} // namespace proxcmo
