#pragma once

// Gradient estimators for the self-play objective
//   J(theta; mu) = V(pi_theta; mu),  differentiated in theta with mu frozen at pi_theta.
//
// Single-sample pairwise estimator:
//   G = 1/2 (score(y) - score(y')) clip(A, M)
//   A = 1/2 - p + beta   [l_ref(y) - l_ref(y')]
//               + beta_t [l_anc(y) - l_anc(y')],    l_a(y) = log(pi(y)/a(y))
// With y, y' ~ pi and E[p] = P(y > y'), E[G] is exactly the gradient of J when M is
// not active. The factor 1/2 belongs to the estimator; dropping it doubles E[G].

#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "nashprox/core.hpp"
#include "nashprox/game.hpp"
#include "nashprox/oracle.hpp"
#include "nashprox/policy.hpp"
#include "nashprox/regularized.hpp"

namespace nashprox {

struct PairSample {
  Context x;
  std::size_t y = 0;
  std::size_t y_prime = 0;
  double p = 0.5;
};

struct GradientEstimate {
  std::vector<double> vector;
  std::size_t batch_size = 0;
  double clip_threshold = std::numeric_limits<double>::infinity();
  double clipped_fraction = 0.0;
};

inline constexpr double kNoClip = 1e9;

inline double clip_advantage(double a, double m) {
  if (!(m > 0.0)) throw ArgumentError("clip threshold must be positive");
  return std::max(-m, std::min(a, m));
}

/// Advantage from precomputed policy log-probabilities at s.x.
inline double advantage(const LocalRegularizer& reg, std::span<const double> log_pi, const PairSample& s) {
  double a = 0.5 - s.p;
  a += reg.beta * ((log_pi[s.y] - reg.log_ref[s.y]) - (log_pi[s.y_prime] - reg.log_ref[s.y_prime]));
  if (reg.beta_target > 0.0)
    a += reg.beta_target *
         ((log_pi[s.y] - reg.log_anchor[s.y]) - (log_pi[s.y_prime] - reg.log_anchor[s.y_prime]));
  return a;
}

/// Advantage with the anchor taken from spec (its proximal target).
inline double advantage(const RegularizedSpec& spec, const Policy& policy, const PairSample& s) {
  const std::size_t n = policy.num_actions();
  if (s.y >= n || s.y_prime >= n) throw ArgumentError("action index out of range");
  return advantage(local_regularizer(spec, s.x), policy.log_probs(s.x), s);
}

/// Mini-batch mean of G over the samples.
inline GradientEstimate pairwise_reinforce(const RegularizedSpec& spec, const Policy& policy,
                                           std::span<const PairSample> batch, double m = kNoClip) {
  if (batch.empty()) throw ArgumentError("pairwise_reinforce: empty batch");
  if (!(m > 0.0)) throw ArgumentError("clip threshold must be positive");
  const std::size_t n = policy.num_actions();
  GradientEstimate g;
  g.vector.assign(policy.num_params(), 0.0);
  g.batch_size = batch.size();
  g.clip_threshold = m;
  std::size_t clipped = 0;
  std::vector<double> dlogits(n, 0.0);
  for (const auto& s : batch) {
    if (s.y >= n || s.y_prime >= n) throw ArgumentError("action index out of range");
    if (s.y == s.y_prime) continue;
    const auto f = policy.forward(s.x);
    const double a = advantage(local_regularizer(spec, s.x), f.log_probs, s);
    const double ca = clip_advantage(a, m);
    if (std::abs(a) >= m) ++clipped;
    // score(y) - score(y') = J^T (e_y - e_y'): the softmax mean terms cancel.
    std::fill(dlogits.begin(), dlogits.end(), 0.0);
    dlogits[s.y] = 1.0;
    dlogits[s.y_prime] = -1.0;
    policy.backward(f, dlogits, g.vector, 0.5 * ca);
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (double& v : g.vector) v *= inv;
  g.clipped_fraction = static_cast<double>(clipped) * inv;
  if (!all_finite(g.vector)) throw NumericError("pairwise_reinforce produced a non-finite gradient");
  return g;
}

/// Gradient of J(theta; pi_theta) with the competitor frozen, averaged over contexts.
/// Per context the logit gradient is H(pi) g with H = diag(pi) - pi pi^T and
/// g_y = c_y + beta log(pi_y/ref_y) + beta_t log(pi_y/anchor_y).
inline std::vector<double> exact_gradient(const PreferenceGame& game, const RegularizedSpec& spec,
                                          const Policy& policy, const ContextBatch& contexts) {
  const auto xs = game.resolve(contexts);
  std::vector<double> grad(policy.num_params(), 0.0);
  const double inv = 1.0 / static_cast<double>(xs.size());
  for (const auto& x : xs) {
    const auto f = policy.forward(x);
    const Distribution pi = exp_of(f.log_probs);
    const LocalRegularizer reg = local_regularizer(spec, x);
    auto g = payoff_against(game.preference_matrix(x), pi);
    for (std::size_t y = 0; y < g.size(); ++y) {
      g[y] += reg.beta * (f.log_probs[y] - reg.log_ref[y]);
      if (reg.beta_target > 0.0) g[y] += reg.beta_target * (f.log_probs[y] - reg.log_anchor[y]);
    }
    double mean = 0.0;
    for (std::size_t y = 0; y < g.size(); ++y) mean += pi[y] * g[y];
    std::vector<double> dlogits(g.size());
    for (std::size_t y = 0; y < g.size(); ++y) dlogits[y] = pi[y] * (g[y] - mean);
    policy.backward(f, dlogits, grad, inv);
  }
  return grad;
}

/// J(theta; mu) = batch mean of V(pi_theta; mu | x).
inline double j_objective(const PreferenceGame& game, const RegularizedSpec& spec, const Policy& policy,
                          const Policy& competitor, const ContextBatch& contexts) {
  const auto xs = game.resolve(contexts);
  double s = 0.0;
  for (const auto& x : xs)
    s += value(game.preference_matrix(x), local_regularizer(spec, x), policy.probs(x), competitor.probs(x));
  return s / static_cast<double>(xs.size());
}

// ---------------------------------------------------------------------------
// Loss forms

/// Nash Prox loss on fixed samples: mean of (l(y) - l(y') - (p - 1/2)/lambda)^2 with
/// l(y) = (beta/lambda) log(pi/ref) + (beta_t/lambda) log(pi/anchor), anchor = spec's target.
inline double nash_prox_loss(const RegularizedSpec& spec, const Policy& policy, std::span<const PairSample> batch) {
  if (batch.empty()) throw ArgumentError("nash_prox_loss: empty batch");
  const double lam = spec.lambda();
  double total = 0.0;
  for (const auto& s : batch) {
    const auto reg = local_regularizer(spec, s.x);
    const auto lp = policy.log_probs(s.x);
    auto ell = [&](std::size_t y) {
      double v = (spec.beta / lam) * (lp[y] - reg.log_ref[y]);
      if (spec.beta_target > 0.0) v += (spec.beta_target / lam) * (lp[y] - reg.log_anchor[y]);
      return v;
    };
    const double r = ell(s.y) - ell(s.y_prime) - (s.p - 0.5) / lam;
    total += r * r;
  }
  return total / static_cast<double>(batch.size());
}

/// Gradient of nash_prox_loss with the samples held fixed, built from explicit score vectors.
inline std::vector<double> nash_prox_loss_gradient(const RegularizedSpec& spec, const Policy& policy,
                                                   std::span<const PairSample> batch) {
  if (batch.empty()) throw ArgumentError("nash_prox_loss_gradient: empty batch");
  const double lam = spec.lambda();
  if (!(lam > 0.0)) throw ConfigError("nash prox loss needs beta + beta_target > 0");
  std::vector<double> grad(policy.num_params(), 0.0);
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (const auto& s : batch) {
    const auto reg = local_regularizer(spec, s.x);
    const auto lp = policy.log_probs(s.x);
    const double wr = spec.beta / lam, wt = spec.beta_target / lam;
    auto ell = [&](std::size_t y) {
      double v = wr * (lp[y] - reg.log_ref[y]);
      if (spec.beta_target > 0.0) v += wt * (lp[y] - reg.log_anchor[y]);
      return v;
    };
    const double r = ell(s.y) - ell(s.y_prime) - (s.p - 0.5) / lam;
    // grad l(y) = (wr + wt) score(y) = score(y)
    const auto sy = policy.score(s.x, s.y);
    const auto syp = policy.score(s.x, s.y_prime);
    for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += inv * 2.0 * r * (wr + wt) * (sy[i] - syp[i]);
  }
  return grad;
}

/// Uncentered Online IPO loss: mean of (log[pi(y) ref(y') / (pi(y') ref(y))] - p/(2 beta))^2.
inline double online_ipo_loss(const RegularizedSpec& spec, const Policy& policy, std::span<const PairSample> batch) {
  if (batch.empty()) throw ArgumentError("online_ipo_loss: empty batch");
  double total = 0.0;
  for (const auto& s : batch) {
    const auto reg = local_regularizer(spec, s.x);
    const auto lp = policy.log_probs(s.x);
    const double h = (lp[s.y] - reg.log_ref[s.y]) - (lp[s.y_prime] - reg.log_ref[s.y_prime]);
    const double r = h - s.p / (2.0 * spec.beta);
    total += r * r;
  }
  return total / static_cast<double>(batch.size());
}

inline std::vector<double> online_ipo_gradient(const RegularizedSpec& spec, const Policy& policy,
                                               std::span<const PairSample> batch) {
  if (batch.empty()) throw ArgumentError("online_ipo_gradient: empty batch");
  std::vector<double> grad(policy.num_params(), 0.0);
  const double inv = 1.0 / static_cast<double>(batch.size());
  const std::size_t n = policy.num_actions();
  std::vector<double> dlogits(n);
  for (const auto& s : batch) {
    if (s.y == s.y_prime) continue;
    const auto reg = local_regularizer(spec, s.x);
    const auto f = policy.forward(s.x);
    const auto& lp = f.log_probs;
    const double h = (lp[s.y] - reg.log_ref[s.y]) - (lp[s.y_prime] - reg.log_ref[s.y_prime]);
    const double r = h - s.p / (2.0 * spec.beta);
    std::fill(dlogits.begin(), dlogits.end(), 0.0);
    dlogits[s.y] = 1.0;
    dlogits[s.y_prime] = -1.0;
    policy.backward(f, dlogits, grad, inv * 2.0 * r);
  }
  return grad;
}

// ---------------------------------------------------------------------------
// Step-size and batch schedules for the stochastic regime

struct Schedule {
  double gamma = 0.0;
  std::size_t batch = 0;
};

/// gamma_t = (4t + 32 kappa - 2) / (m (t + 8 kappa)^2),  B_t = ceil((t + 8 kappa) / m).
inline Schedule schedules(double kappa_cond, double m_pl, std::size_t t) {
  if (!(kappa_cond >= 1.0)) throw ConfigError("condition number must be >= 1");
  if (!(m_pl > 0.0)) throw ConfigError("PL constant must be positive");
  const double td = static_cast<double>(t);
  const double s = td + 8.0 * kappa_cond;
  Schedule out;
  out.gamma = (4.0 * td + 32.0 * kappa_cond - 2.0) / (m_pl * s * s);
  out.batch = static_cast<std::size_t>(std::ceil(s / m_pl));
  return out;
}

/// Clip threshold giving gradient bias at most eps_grad for the softmax estimator.
inline double theory_clip(double lambda, double anchor_min, double eps_grad) {
  return 0.5 + 2.0 * lambda * std::log(2.0 * std::sqrt(2.0) * lambda * (1.0 + anchor_min) / (anchor_min * eps_grad));
}

// ---------------------------------------------------------------------------
// Sampling

/// B pairs at the given contexts (cycled when fewer than B), y, y' ~ policy, and
/// p ~ Bernoulli(P(y > y')) or p = P(y > y') in exact-feedback mode.
inline std::vector<PairSample> sample_pairs(const PreferenceGame& game, const Policy& policy,
                                            std::span<const Context> contexts, std::size_t b, bool exact_feedback,
                                            Rng& rng) {
  std::vector<PairSample> out;
  out.reserve(b);
  for (std::size_t j = 0; j < b; ++j) {
    PairSample s;
    s.x = contexts.empty() ? Context{} : contexts[j % contexts.size()];
    const Distribution pi = policy.probs(s.x);
    s.y = rng.categorical(pi);
    s.y_prime = rng.categorical(pi);
    const double pr = game.preference(s.x, s.y, s.y_prime);
    s.p = exact_feedback ? pr : (rng.bernoulli(pr) ? 1.0 : 0.0);
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace nashprox
