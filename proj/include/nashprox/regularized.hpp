#pragma once

// KL-regularized preferences. A spec carries the reference policy and, when a
// proximal term is active, the anchor it pulls toward:
//
//   P_beta(p > q | x) = P(p > q | x) - beta KL(p||ref) + beta KL(q||ref)
//                                    - beta_t KL(p||anchor) + beta_t KL(q||anchor)
//
// The two penalties combine into one of strength lambda = beta + beta_t toward
// the normalized geometric mixture ref^(beta/lambda) * anchor^(beta_t/lambda).

#include <cmath>
#include <optional>
#include <vector>

#include "nashprox/core.hpp"
#include "nashprox/game.hpp"
#include "nashprox/policy.hpp"

namespace nashprox {

struct RegularizedSpec {
  double beta = 0.0;
  double beta_target = 0.0;
  Policy reference;
  std::optional<Policy> anchor;

  RegularizedSpec(double b, Policy ref, double bt = 0.0, std::optional<Policy> anc = std::nullopt)
      : beta(b), beta_target(bt), reference(std::move(ref)), anchor(std::move(anc)) {
    validate();
  }

  double lambda() const { return beta + beta_target; }

  void validate() const {
    if (!(beta > 0.0) || !std::isfinite(beta)) throw ConfigError("beta must be positive");
    if (!(beta_target >= 0.0) || !std::isfinite(beta_target)) throw ConfigError("beta_target must be nonnegative");
    if ((beta_target > 0.0) != anchor.has_value())
      throw ConfigError("an anchor is required exactly when beta_target > 0");
    if (anchor && anchor->num_actions() != reference.num_actions())
      throw ConfigError("anchor and reference disagree on the action count");
  }
};

/// Log reference, log anchor and strengths resolved at one context.
struct LocalRegularizer {
  double beta = 0.0;
  double beta_target = 0.0;
  std::vector<double> log_ref;
  std::vector<double> log_anchor;  // empty when beta_target == 0

  double lambda() const { return beta + beta_target; }

  /// beta KL(p||ref) + beta_t KL(p||anchor).
  double penalty(std::span<const double> p) const {
    double s = beta * kl_from_log(p, log_ref);
    if (beta_target > 0.0) s += beta_target * kl_from_log(p, log_anchor);
    return s;
  }

  /// Log of the normalized geometric mixture the combined penalty pulls toward.
  std::vector<double> log_effective_anchor() const {
    const double lam = lambda();
    if (!(lam > 0.0)) throw ConfigError("total regularization must be positive");
    std::vector<double> out(log_ref.size());
    for (std::size_t y = 0; y < out.size(); ++y) {
      out[y] = (beta / lam) * log_ref[y];
      if (beta_target > 0.0) out[y] += (beta_target / lam) * log_anchor[y];
    }
    normalize_log(out);
    return out;
  }
};

inline void check_full_support(std::span<const double> log_p, const char* what) {
  for (double v : log_p)
    if (!std::isfinite(v)) throw SupportError(std::string(what) + " has zero probability at an evaluated action");
}

inline LocalRegularizer local_regularizer(const RegularizedSpec& spec, const Context& x) {
  LocalRegularizer r;
  r.beta = spec.beta;
  r.beta_target = spec.beta_target;
  r.log_ref = spec.reference.log_probs(x);
  check_full_support(r.log_ref, "reference");
  if (spec.beta_target > 0.0) {
    r.log_anchor = spec.anchor->log_probs(x);
    check_full_support(r.log_anchor, "anchor");
  }
  return r;
}

/// Regularizer built directly from distributions.
inline LocalRegularizer local_regularizer(double beta, std::span<const double> ref, double beta_target = 0.0,
                                          std::span<const double> anchor = {}) {
  LocalRegularizer r;
  r.beta = beta;
  r.beta_target = beta_target;
  r.log_ref = log_of(ref);
  check_full_support(r.log_ref, "reference");
  if (beta_target > 0.0) {
    if (anchor.size() != ref.size()) throw ArgumentError("anchor has the wrong size");
    r.log_anchor = log_of(anchor);
    check_full_support(r.log_anchor, "anchor");
  }
  return r;
}

/// Batch mean of P_beta(p_policy > q_policy | x).
inline double regularized_preference(const PreferenceGame& game, const RegularizedSpec& spec, const Policy& p_policy,
                                     const Policy& q_policy, const ContextBatch& contexts) {
  const auto xs = game.resolve(contexts);
  double total = 0.0;
  for (const auto& x : xs) {
    const LocalRegularizer reg = local_regularizer(spec, x);
    const Distribution p = p_policy.probs(x), q = q_policy.probs(x);
    const double pref = bilinear(game.preference_matrix(x), p, q);
    total += pref - reg.penalty(p) + reg.penalty(q);
  }
  return total / static_cast<double>(xs.size());
}

}  // namespace nashprox
