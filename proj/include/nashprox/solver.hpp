#pragma once

// Training loops: self-play policy gradient (SPG), the proximal-point outer loop
// around it (PP-SPG), and Nash Prox with an EMA target.

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "nashprox/core.hpp"
#include "nashprox/estimator.hpp"
#include "nashprox/game.hpp"
#include "nashprox/oracle.hpp"
#include "nashprox/policy.hpp"
#include "nashprox/regularized.hpp"
#include "nashprox/rng.hpp"

namespace nashprox {

// ---------------------------------------------------------------------------
// Schedules

enum class LrKind { constant, inv_sqrt, theory };

struct LrRule {
  LrKind kind = LrKind::constant;
  double base = 0.1;
  double kappa_cond = 1.0;  // theory only
  double m_pl = 1.0;        // theory only

  /// Rate at zero-based step t; inv_sqrt counts steps from one.
  double at(std::size_t t) const {
    switch (kind) {
      case LrKind::constant: return base;
      case LrKind::inv_sqrt: return base / std::sqrt(static_cast<double>(t + 1));
      case LrKind::theory: return schedules(kappa_cond, m_pl, t).gamma;
    }
    return base;
  }
};

enum class BatchKind { fixed, theory };

struct BatchRule {
  BatchKind kind = BatchKind::fixed;
  std::size_t size = 1;
  double kappa_cond = 1.0;
  double m_pl = 1.0;

  std::size_t at(std::size_t t) const {
    if (kind == BatchKind::theory) return schedules(kappa_cond, m_pl, t).batch;
    return size;
  }
};

/// Constant kappa, or kappa_t = 1/(c t + 1) when c > 0.
struct KappaRule {
  double kappa = 1.0;
  double anneal_c = 0.0;

  double at(std::size_t t) const {
    const double k = anneal_c > 0.0 ? 1.0 / (anneal_c * static_cast<double>(t) + 1.0) : kappa;
    if (!(k >= 0.0 && k <= 1.0)) throw ConfigError("kappa must lie in [0, 1]");
    return k;
  }
};

// ---------------------------------------------------------------------------
// Optimizers

enum class OptimizerKind { sgd, adam };

struct Optimizer {
  OptimizerKind kind = OptimizerKind::sgd;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::vector<double> m, v;
  std::size_t t = 0;

  void step(std::vector<double>& params, std::span<const double> grad, double lr) {
    if (kind == OptimizerKind::sgd) {
      for (std::size_t i = 0; i < params.size(); ++i) params[i] -= lr * grad[i];
      return;
    }
    if (m.size() != params.size()) {
      m.assign(params.size(), 0.0);
      v.assign(params.size(), 0.0);
      t = 0;
    }
    ++t;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < params.size(); ++i) {
      m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
      v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
      params[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
    }
  }
};

struct StepMetrics {
  std::size_t step = 0;
  double grad_norm = 0.0;
  double clipped_fraction = 0.0;
  double kappa = std::numeric_limits<double>::quiet_NaN();
  double lr = 0.0;
  std::size_t batch_size = 0;
};

inline void check_finite_params(const Policy& policy, const char* where) {
  if (!all_finite(policy.params())) throw NumericError(std::string(where) + ": parameters became non-finite");
}

/// Training contexts for one step: none for context-free games, else b fresh draws.
inline std::vector<Context> step_contexts(const PreferenceGame& game, std::size_t b, Rng& rng) {
  std::vector<Context> xs;
  if (game.context_free()) return xs;
  xs.reserve(b);
  for (std::size_t i = 0; i < b; ++i) xs.push_back(game.sample_context(rng, i));
  return xs;
}

// ---------------------------------------------------------------------------
// SPG

struct SpgOptions {
  LrRule lr;
  BatchRule batch;
  double clip = kNoClip;
  std::optional<ImprovementConfig> improvement;
  bool exact_gradient = false;
  bool exact_feedback = false;
  OptimizerKind optimizer = OptimizerKind::sgd;
  /// Multiplier on the gradient estimate. 4 matches a Nash Prox loss scaled by lambda,
  /// whose per-sample gradient is 4x the pairwise estimate.
  double estimator_scale = 1.0;
};

struct SpgState {
  std::size_t step = 0;
  Policy policy;
  SpgOptions options;
  Optimizer optimizer;

  SpgState(Policy p, SpgOptions o) : policy(std::move(p)), options(std::move(o)) {
    optimizer.kind = options.optimizer;
  }
};

/// One step theta <- T(theta - gamma g) with the current policy as its own competitor.
inline StepMetrics spg_step(SpgState& state, const PreferenceGame& game, const RegularizedSpec& spec, Rng& rng) {
  const auto& o = state.options;
  StepMetrics mt;
  mt.step = state.step;
  mt.lr = o.lr.at(state.step);
  mt.batch_size = o.batch.at(state.step);
  if (mt.batch_size == 0) throw ConfigError("batch size must be positive");

  const auto xs = step_contexts(game, mt.batch_size, rng);
  std::vector<double> g;
  if (o.exact_gradient) {
    ContextBatch cb{xs, 0};
    g = exact_gradient(game, spec, state.policy, cb);
  } else {
    const auto pairs = sample_pairs(game, state.policy, xs, mt.batch_size, o.exact_feedback, rng);
    auto est = pairwise_reinforce(spec, state.policy, pairs, o.clip);
    mt.clipped_fraction = est.clipped_fraction;
    g = std::move(est.vector);
  }
  if (o.estimator_scale != 1.0)
    for (double& v : g) v *= o.estimator_scale;
  mt.grad_norm = l2_norm(g);
  state.optimizer.step(state.policy.params(), g, mt.lr);
  if (o.improvement && state.policy.is_tabular())
    state.policy.tabular() = improve(state.policy.tabular(), *o.improvement);
  check_finite_params(state.policy, "spg_step");
  ++state.step;
  return mt;
}

// ---------------------------------------------------------------------------
// Online IPO

struct OnlineIpoOptions {
  LrRule lr;
  BatchRule batch;
  double loss_scale = 1.0;
  bool centered = true;  // (p - 1/2)/beta target; false uses p/(2 beta)
  bool exact_feedback = false;
  OptimizerKind optimizer = OptimizerKind::sgd;
};

struct OnlineIpoState {
  std::size_t step = 0;
  Policy policy;
  OnlineIpoOptions options;
  Optimizer optimizer;

  OnlineIpoState(Policy p, OnlineIpoOptions o) : policy(std::move(p)), options(std::move(o)) {
    optimizer.kind = options.optimizer;
  }
};

/// One step on the squared IPO loss over fresh on-policy pairs. spec must be beta-only.
inline StepMetrics online_ipo_step(OnlineIpoState& state, const PreferenceGame& game, const RegularizedSpec& spec,
                                   Rng& rng) {
  if (spec.beta_target != 0.0) throw ConfigError("online IPO takes a beta-only spec");
  const auto& o = state.options;
  StepMetrics mt;
  mt.step = state.step;
  mt.lr = o.lr.at(state.step);
  mt.batch_size = o.batch.at(state.step);
  if (mt.batch_size == 0) throw ConfigError("batch size must be positive");
  const auto xs = step_contexts(game, mt.batch_size, rng);
  const auto pairs = sample_pairs(game, state.policy, xs, mt.batch_size, o.exact_feedback, rng);
  auto g = o.centered ? nash_prox_loss_gradient(spec, state.policy, pairs) : online_ipo_gradient(spec, state.policy, pairs);
  for (double& v : g) v *= o.loss_scale;
  mt.grad_norm = l2_norm(g);
  state.optimizer.step(state.policy.params(), g, mt.lr);
  check_finite_params(state.policy, "online_ipo_step");
  ++state.step;
  return mt;
}

// ---------------------------------------------------------------------------
// Proximal point

/// normalize(ref^(eta/(1+eta)) * pi_k^(1/(1+eta))) at x.
inline Distribution geometric_anchor(const Policy& pi_ref, const Policy& pi_k, double eta, const Context& x) {
  const auto lr = pi_ref.log_probs(x), lk = pi_k.log_probs(x);
  check_full_support(lr, "reference");
  check_full_support(lk, "anchor");
  return exp_of(geometric_anchor_log(lr, lk, eta));
}

struct OuterMetrics {
  std::size_t k = 0;
  std::size_t inner_steps = 0;
  double kl_to_vnw = std::numeric_limits<double>::quiet_NaN();
  double exploitability = std::numeric_limits<double>::quiet_NaN();
};

struct PpSpgOptions {
  SpgOptions inner;
  std::vector<std::size_t> inner_lengths;  // T_k; a single entry applies to every k
  bool exact_inner = false;                // replace the inner loop by the exact subgame solution
  std::optional<VnwSolution> vnw;          // enables kl_to_vnw
  ContextBatch eval_contexts;
  /// Called after every inner step with (k, t, inner spec).
  std::function<void(std::size_t, std::size_t, const RegularizedSpec&)> on_inner_step;
};

struct PpSpgResult {
  Policy policy;
  std::vector<OuterMetrics> outer;
  std::optional<std::string> abort_reason;
};

/// K outer steps of PP-SPG starting at pi_0 = pi_ref. spec carries beta and the reference.
inline PpSpgResult pp_spg_run(const PreferenceGame& game, const RegularizedSpec& spec, double eta, std::size_t outer_k,
                              const PpSpgOptions& opts, Rng& rng) {
  if (spec.beta_target != 0.0) throw ConfigError("pp_spg_run takes a beta-only spec");
  if (!(eta > 0.0)) throw ConfigError("eta must be positive");
  PpSpgResult res{spec.reference, {}, std::nullopt};
  const double beta_t = spec.beta / eta;

  auto record = [&](std::size_t k, std::size_t steps) {
    OuterMetrics om;
    om.k = k;
    om.inner_steps = steps;
    om.exploitability = exploitability(game, spec, res.policy, opts.eval_contexts).value;
    if (opts.vnw) {
      const auto xs = game.resolve(opts.eval_contexts);
      double s = 0.0;
      for (std::size_t i = 0; i < xs.size(); ++i) {
        const auto& star = opts.vnw->policy[opts.vnw->policy.size() == 1 ? 0 : xs[i].index];
        s += kl_from_log(star, res.policy.log_probs(xs[i]));
      }
      om.kl_to_vnw = s / static_cast<double>(xs.size());
    }
    res.outer.push_back(om);
  };

  record(0, 0);
  for (std::size_t k = 0; k < outer_k; ++k) {
    const Policy anchor = res.policy;
    const RegularizedSpec spec_k(spec.beta, spec.reference, beta_t, anchor);
    std::size_t steps = 0;
    try {
      if (opts.exact_inner) {
        if (!game.context_free() || !res.policy.is_tabular())
          throw ConfigError("exact inner solves need a context-free tabular problem");
        const Context x{};
        const LocalRegularizer reg = local_regularizer(spec_k, x);
        const double lam = reg.lambda();
        auto log_pi = detail::solve_vnw_context(game.preference_matrix(x), reg.log_effective_anchor(), lam,
                                                safe_eta(lam, 0.0), 1e-12, 1000000, res.policy.log_probs(x))
                          .log_pi;
        auto row = res.policy.tabular().row(0);
        std::copy(log_pi.begin(), log_pi.end(), row.begin());
      } else {
        const std::size_t t_k = opts.inner_lengths.empty()
                                    ? 0
                                    : opts.inner_lengths[std::min(k, opts.inner_lengths.size() - 1)];
        SpgState st(res.policy, opts.inner);
        for (std::size_t t = 0; t < t_k; ++t) {
          spg_step(st, game, spec_k, rng);
          ++steps;
          if (opts.on_inner_step) opts.on_inner_step(k, t, spec_k);
        }
        res.policy = st.policy;
      }
    } catch (const NumericError& e) {
      res.abort_reason = e.what();
      return res;
    }
    record(k + 1, steps);
  }
  return res;
}

// ---------------------------------------------------------------------------
// Nash Prox

struct NashProxOptions {
  double beta_target = 0.0;
  LrRule lr;
  BatchRule batch;
  KappaRule kappa;
  double loss_scale = 1.0;  // multiplies the loss before stepping
  bool exact_gradient = false;
  bool exact_feedback = false;
  OptimizerKind optimizer = OptimizerKind::sgd;
};

struct NashProxState {
  std::size_t step = 0;
  Policy policy;
  Policy target;
  NashProxOptions options;
  Optimizer optimizer;

  NashProxState(Policy p, NashProxOptions o) : policy(p), target(std::move(p)), options(std::move(o)) {
    optimizer.kind = options.optimizer;
  }
};

/// theta <- theta - alpha grad L_prox(theta; target), then target <- (1-kappa) target + kappa theta.
/// spec supplies beta and the reference; the anchor is the current target.
/// The loss gradient is formed as (4/lambda) times the unclipped pairwise estimate,
/// which equals the per-sample loss gradient.
inline StepMetrics nash_prox_step(NashProxState& state, const PreferenceGame& game, const RegularizedSpec& spec,
                                  Rng& rng) {
  const auto& o = state.options;
  StepMetrics mt;
  mt.step = state.step;
  mt.lr = o.lr.at(state.step);
  mt.kappa = o.kappa.at(state.step);
  mt.batch_size = o.batch.at(state.step);
  if (mt.batch_size == 0) throw ConfigError("batch size must be positive");

  std::optional<Policy> anchor;
  if (o.beta_target > 0.0) anchor = state.target;
  const RegularizedSpec spec_t(spec.beta, spec.reference, o.beta_target, std::move(anchor));
  const double scale = o.loss_scale * 4.0 / spec_t.lambda();

  const auto xs = step_contexts(game, mt.batch_size, rng);
  std::vector<double> g;
  if (o.exact_gradient) {
    g = exact_gradient(game, spec_t, state.policy, ContextBatch{xs, 0});
  } else {
    const auto pairs = sample_pairs(game, state.policy, xs, mt.batch_size, o.exact_feedback, rng);
    g = pairwise_reinforce(spec_t, state.policy, pairs, kNoClip).vector;
  }
  for (double& v : g) v *= scale;
  mt.grad_norm = l2_norm(g);
  state.optimizer.step(state.policy.params(), g, mt.lr);
  check_finite_params(state.policy, "nash_prox_step");

  auto& tp = state.target.params();
  const auto& op = state.policy.params();
  for (std::size_t i = 0; i < tp.size(); ++i) tp[i] = (1.0 - mt.kappa) * tp[i] + mt.kappa * op[i];
  ++state.step;
  return mt;
}

}  // namespace nashprox
