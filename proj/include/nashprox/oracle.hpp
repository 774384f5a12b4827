#pragma once

// Exact values for tabular (per-context) problems.
//
//   V(p; q | x)  = P(q > p | x) + beta KL(p||ref) + beta_t KL(p||anchor)
//   V*(q | x)    = min_p V(p; q | x)
//                = -lambda log sum_y exp((beta log ref_y + beta_t log anchor_y - c_y) / lambda)
//   c_y          = P(q > y | x)
//   exploitability(pi) = V(pi; pi) - V*(pi)

#include <cmath>
#include <limits>
#include <optional>
#include <utility>
#include <vector>

#include "nashprox/core.hpp"
#include "nashprox/game.hpp"
#include "nashprox/policy.hpp"
#include "nashprox/regularized.hpp"

namespace nashprox {

struct ExploitabilityReport {
  double value = 0.0;
  double self_value = 0.0;
  double best_response_value = 0.0;
  std::vector<double> per_context;
};

struct VnwSolution {
  std::vector<Distribution> policy;  // one distribution per context (a single entry when context-free)
  double residual = 0.0;
  std::size_t iterations = 0;

  Policy as_policy() const {
    TabularSoftmaxPolicy p(policy.size(), policy.front().size());
    for (std::size_t r = 0; r < policy.size(); ++r) {
      auto row = p.row(r);
      for (std::size_t y = 0; y < row.size(); ++y) row[y] = std::log(policy[r][y]);
    }
    return Policy(std::move(p));
  }
};

// ---------------------------------------------------------------------------
// Distribution-level kernels

inline double value(const Matrix& p_mat, const LocalRegularizer& reg, std::span<const double> p,
                    std::span<const double> q) {
  return bilinear(p_mat, q, p) + reg.penalty(p);
}

/// Unnormalized log best response: (beta log ref + beta_t log anchor - c) / lambda.
inline std::vector<double> best_response_exponent(const LocalRegularizer& reg, std::span<const double> c) {
  const double lam = reg.lambda();
  if (!(lam > 0.0)) throw ConfigError("best response needs beta + beta_target > 0");
  std::vector<double> e(c.size());
  for (std::size_t y = 0; y < c.size(); ++y) {
    double a = reg.beta * reg.log_ref[y];
    if (reg.beta_target > 0.0) a += reg.beta_target * reg.log_anchor[y];
    e[y] = (a - c[y]) / lam;
  }
  return e;
}

inline double best_response_value(const Matrix& p_mat, const LocalRegularizer& reg, std::span<const double> q) {
  const auto c = payoff_against(p_mat, q);
  return -reg.lambda() * log_sum_exp(best_response_exponent(reg, c));
}

inline Distribution best_response(const Matrix& p_mat, const LocalRegularizer& reg, std::span<const double> q) {
  const auto c = payoff_against(p_mat, q);
  return softmax(best_response_exponent(reg, c));
}

inline ExploitabilityReport exploitability_at(const Matrix& p_mat, const LocalRegularizer& reg,
                                              std::span<const double> pi) {
  ExploitabilityReport r;
  r.self_value = value(p_mat, reg, pi, pi);
  r.best_response_value = best_response_value(p_mat, reg, pi);
  r.value = r.self_value - r.best_response_value;
  return r;
}

// ---------------------------------------------------------------------------
// Game-level operations

inline double value(const PreferenceGame& game, const RegularizedSpec& spec, std::span<const double> p,
                    std::span<const double> q, const Context& x) {
  check_simplex(p, 1e-9, "p");
  check_simplex(q, 1e-9, "q");
  return value(game.preference_matrix(x), local_regularizer(spec, x), p, q);
}

inline double best_response_value(const PreferenceGame& game, const RegularizedSpec& spec, std::span<const double> q,
                                  const Context& x) {
  check_simplex(q, 1e-9, "q");
  return best_response_value(game.preference_matrix(x), local_regularizer(spec, x), q);
}

inline Distribution best_response(const PreferenceGame& game, const RegularizedSpec& spec, std::span<const double> q,
                                  const Context& x) {
  check_simplex(q, 1e-9, "q");
  return best_response(game.preference_matrix(x), local_regularizer(spec, x), q);
}

/// Batch-mean exploitability with exact per-context closed forms.
inline ExploitabilityReport exploitability(const PreferenceGame& game, const RegularizedSpec& spec,
                                           const Policy& policy, const ContextBatch& contexts) {
  const auto xs = game.resolve(contexts);
  ExploitabilityReport total;
  total.per_context.reserve(xs.size());
  for (const auto& x : xs) {
    const auto r = exploitability_at(game.preference_matrix(x), local_regularizer(spec, x), policy.probs(x));
    total.self_value += r.self_value;
    total.best_response_value += r.best_response_value;
    total.per_context.push_back(r.value);
  }
  const double n = static_cast<double>(xs.size());
  total.self_value /= n;
  total.best_response_value /= n;
  total.value = total.self_value - total.best_response_value;
  return total;
}

// ---------------------------------------------------------------------------
// Regularized VNW by exact proximal point

/// Proximal step size that keeps the inner map a contraction (lambda >= 1).
inline double safe_eta(double beta, double eta_requested) {
  if (beta >= 1.0) return eta_requested > 0.0 ? eta_requested : 1.0;
  const double cap = beta / (1.0 - beta);
  return eta_requested > 0.0 ? std::min(eta_requested, cap) : cap;
}

/// Log of normalize(ref^(eta/(1+eta)) * pi_k^(1/(1+eta))).
inline std::vector<double> geometric_anchor_log(std::span<const double> log_ref, std::span<const double> log_pk,
                                                double eta) {
  if (!(eta > 0.0)) throw ConfigError("eta must be positive");
  const double a = eta / (1.0 + eta), b = 1.0 / (1.0 + eta);
  std::vector<double> out(log_ref.size());
  for (std::size_t y = 0; y < out.size(); ++y) out[y] = a * log_ref[y] + b * log_pk[y];
  normalize_log(out);
  return out;
}

/// ||log pi - log BR(pi)||_span for the single-anchor game (beta, ref).
inline double vnw_residual(const Matrix& p_mat, std::span<const double> log_ref, double beta,
                           std::span<const double> log_pi) {
  const Distribution pi = exp_of(log_pi);
  const auto c = payoff_against(p_mat, pi);
  std::vector<double> e(c.size());
  for (std::size_t y = 0; y < c.size(); ++y) e[y] = log_ref[y] - c[y] / beta;
  normalize_log(e);
  return span_of_difference(log_pi, e);
}

namespace detail {

/// Fixed point of q -> normalize(anchor * exp(-c(q)/lambda)), lambda >= 1.
inline std::vector<double> inner_fixed_point(const Matrix& p_mat, std::span<const double> log_anchor, double lambda,
                                             std::vector<double> log_q, double tol, std::size_t max_iter) {
  for (std::size_t it = 0; it < max_iter; ++it) {
    const auto c = payoff_against(p_mat, exp_of(log_q));
    std::vector<double> next(c.size());
    for (std::size_t y = 0; y < c.size(); ++y) next[y] = log_anchor[y] - c[y] / lambda;
    normalize_log(next);
    const double d = span_of_difference(next, log_q);
    // Below a few ulps of the iterate magnitude the defect is rounding noise.
    double mag = 0.0;
    for (double v : next) mag = std::max(mag, std::abs(v));
    log_q = std::move(next);
    if (d <= std::max(tol, 8.0 * std::numeric_limits<double>::epsilon() * (1.0 + mag))) return log_q;
  }
  throw ConvergenceError("inner fixed point did not converge", tol);
}

struct VnwContextResult {
  std::vector<double> log_pi;
  double residual = 0.0;
  std::size_t iterations = 0;
};

inline VnwContextResult solve_vnw_context(const Matrix& p_mat, std::span<const double> log_ref, double beta,
                                          double eta, double tol, std::size_t max_outer,
                                          std::optional<std::vector<double>> start) {
  VnwContextResult r;
  r.log_pi = start ? std::move(*start) : std::vector<double>(log_ref.begin(), log_ref.end());
  normalize_log(r.log_pi);
  const double lambda = beta * (1.0 + 1.0 / eta);
  // An inner defect d moves the outer residual by about d (1 + eta) / eta.
  const double inner_tol = tol * eta / (10.0 * (1.0 + eta));
  r.residual = vnw_residual(p_mat, log_ref, beta, r.log_pi);
  while (r.residual > tol) {
    if (r.iterations >= max_outer)
      throw ConvergenceError("solve_vnw: outer iteration budget exhausted", r.residual);
    const auto anchor = geometric_anchor_log(log_ref, r.log_pi, eta);
    r.log_pi = inner_fixed_point(p_mat, anchor, lambda, r.log_pi, inner_tol, 10000);
    ++r.iterations;
    r.residual = vnw_residual(p_mat, log_ref, beta, r.log_pi);
  }
  return r;
}

}  // namespace detail

/// Regularized VNW of the single-anchor game (spec.beta, spec.reference) at every
/// context of the batch. eta <= 0 selects the largest contraction-safe step;
/// larger requests are capped to it.
inline VnwSolution solve_vnw(const PreferenceGame& game, const RegularizedSpec& spec, double eta, double tol,
                             std::size_t max_outer, const ContextBatch& contexts = {},
                             const std::optional<Policy>& start = std::nullopt) {
  if (spec.beta_target != 0.0) throw ConfigError("solve_vnw takes a beta-only spec");
  const double eta_used = safe_eta(spec.beta, eta);
  const auto xs = game.resolve(contexts);
  VnwSolution sol;
  for (const auto& x : xs) {
    const auto log_ref = local_regularizer(spec, x).log_ref;
    std::optional<std::vector<double>> warm;
    if (start) warm = start->log_probs(x);
    auto r = detail::solve_vnw_context(game.preference_matrix(x), log_ref, spec.beta, eta_used, tol, max_outer,
                                       std::move(warm));
    sol.policy.push_back(exp_of(r.log_pi));
    sol.residual = std::max(sol.residual, r.residual);
    sol.iterations = std::max(sol.iterations, r.iterations);
  }
  return sol;
}

/// KL(pi* || pi_k) along exact proximal-point iterates
/// pi_{k+1} = VNW of the lambda-regularized game anchored at the geometric mixture of (ref, pi_k).
/// Entry k of the result is (k, KL). Context-free games only.
inline std::vector<std::pair<std::size_t, double>> pp_contraction_certificate(
    const PreferenceGame& game, const RegularizedSpec& spec, double eta, std::size_t steps,
    const std::optional<Distribution>& start = std::nullopt, double inner_tol = 1e-11) {
  if (!game.context_free()) throw ArgumentError("contraction certificate needs a context-free game");
  if (!(eta > 0.0)) throw ConfigError("eta must be positive");
  const Context x{};
  const Matrix p_mat = game.preference_matrix(x);
  const auto log_ref = local_regularizer(spec, x).log_ref;
  const double beta = spec.beta;
  const double lambda = beta * (1.0 + 1.0 / eta);

  const auto star = detail::solve_vnw_context(p_mat, log_ref, beta, safe_eta(beta, 0.0), inner_tol, 1000000, {});
  const Distribution pi_star = exp_of(star.log_pi);

  std::vector<double> log_pk = start ? log_of(*start) : std::vector<double>(log_ref.begin(), log_ref.end());
  normalize_log(log_pk);
  std::vector<std::pair<std::size_t, double>> out;
  out.emplace_back(0, kl_from_log(pi_star, log_pk));
  for (std::size_t k = 1; k <= steps; ++k) {
    const auto anchor = geometric_anchor_log(log_ref, log_pk, eta);
    // The subproblem is a VNW problem at strength lambda with reference = anchor.
    log_pk = detail::solve_vnw_context(p_mat, anchor, lambda, safe_eta(lambda, 0.0), inner_tol, 1000000, log_pk)
                 .log_pi;
    out.emplace_back(k, kl_from_log(pi_star, log_pk));
  }
  return out;
}

}  // namespace nashprox
