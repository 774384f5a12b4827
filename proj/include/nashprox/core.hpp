#pragma once

// Numeric primitives shared by every module: error types, simplex checks,
// log-domain reductions and the divergences used throughout the solver.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace nashprox {

/// A probability vector over the action set.
using Distribution = std::vector<double>;

/// Bad index, malformed vector, or a value outside the simplex.
class ArgumentError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// A divergence or log-ratio hit a zero-probability entry of its base measure.
class SupportError : public std::domain_error {
public:
  using std::domain_error::domain_error;
};

/// Non-finite parameters or overflow inside an update.
class NumericError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// A configuration that cannot be honoured (e.g. zero total regularization).
class ConfigError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// An iterative solve ran out of iterations before meeting its tolerance.
class ConvergenceError : public std::runtime_error {
public:
  ConvergenceError(const std::string& what, double last_residual)
      : std::runtime_error(what), last_residual_(last_residual) {}
  double last_residual() const noexcept { return last_residual_; }

private:
  double last_residual_;
};

/// Dense row-major matrix; just enough for preference tables and MLP weights.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
  std::span<const double> row(std::size_t i) const { return {data.data() + i * cols, cols}; }

  bool operator==(const Matrix&) const = default;
};

inline void check_simplex(std::span<const double> p, double tol = 1e-9, const char* what = "distribution") {
  if (p.empty()) throw ArgumentError(std::string(what) + " is empty");
  double total = 0.0;
  for (double v : p) {
    if (!(v >= 0.0) || !std::isfinite(v))
      throw ArgumentError(std::string(what) + " has a negative or non-finite entry");
    total += v;
  }
  if (std::abs(total - 1.0) > tol) throw ArgumentError(std::string(what) + " does not sum to 1");
}

inline double log_sum_exp(std::span<const double> v) {
  if (v.empty()) return -std::numeric_limits<double>::infinity();
  const double hi = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(hi)) return hi;
  double s = 0.0;
  for (double x : v) s += std::exp(x - hi);
  return hi + std::log(s);
}

/// In-place shift so that exp(v) sums to one.
inline void normalize_log(std::span<double> v) {
  const double z = log_sum_exp(v);
  for (double& x : v) x -= z;
}

inline std::vector<double> log_softmax(std::span<const double> logits) {
  std::vector<double> out(logits.begin(), logits.end());
  normalize_log(out);
  return out;
}

inline Distribution softmax(std::span<const double> logits) {
  Distribution out = log_softmax(logits);
  for (double& x : out) x = std::exp(x);
  return out;
}

inline std::vector<double> log_of(std::span<const double> p) {
  std::vector<double> out(p.size());
  std::transform(p.begin(), p.end(), out.begin(), [](double v) { return std::log(v); });
  return out;
}

inline Distribution exp_of(std::span<const double> v) {
  Distribution out(v.size());
  std::transform(v.begin(), v.end(), out.begin(), [](double x) { return std::exp(x); });
  return out;
}

/// KL(p || q) with q given by its logarithm. 0 * log 0 is taken as 0.
inline double kl_from_log(std::span<const double> p, std::span<const double> log_q) {
  if (p.size() != log_q.size()) throw ArgumentError("kl: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;
    if (!std::isfinite(log_q[i])) throw SupportError("kl: q has zero mass where p > 0");
    s += p[i] * (std::log(p[i]) - log_q[i]);
  }
  return std::max(s, 0.0);
}

inline double kl_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw ArgumentError("kl: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;
    if (q[i] <= 0.0) throw SupportError("kl: q has zero mass where p > 0");
    s += p[i] * (std::log(p[i]) - std::log(q[i]));
  }
  return std::max(s, 0.0);
}

/// inf_c ||v + c 1||_inf, i.e. half the range of v.
inline double span_seminorm(std::span<const double> v) {
  if (v.empty()) throw ArgumentError("span_seminorm: empty vector");
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  return 0.5 * (*hi - *lo);
}

inline double span_of_difference(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.empty()) throw ArgumentError("span: size mismatch");
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    lo = std::min(lo, d);
    hi = std::max(hi, d);
  }
  return 0.5 * (hi - lo);
}

inline double l1_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return s;
}

inline double l2_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

inline double max_abs_difference(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

inline double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace nashprox
