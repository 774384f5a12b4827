#pragma once

// Property suites with fixed seeds. Each check reports what it measured and the
// tolerance it was held to.
//
//   gradients    exact gradients vs finite differences; loss/estimator identity
//   estimators   enumerated estimator means vs exact gradients
//   oracle       closed-form best response vs lattice search; improvement operator;
//                reference regularity at solved equilibria
//   contraction  proximal-point contraction; deterministic SPG contraction
//   all          every suite above

#include <chrono>
#include <cmath>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "nashprox/core.hpp"
#include "nashprox/estimator.hpp"
#include "nashprox/game.hpp"
#include "nashprox/oracle.hpp"
#include "nashprox/policy.hpp"
#include "nashprox/regularized.hpp"
#include "nashprox/rng.hpp"
#include "nashprox/solver.hpp"
#include "nashprox/verify.hpp"

namespace nashprox {

struct CheckResult {
  std::string name;
  double measured = 0.0;
  double tolerance = 0.0;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

namespace checks_detail {

inline Distribution random_distribution(std::size_t n, Rng& rng, double scale = 1.0) {
  std::vector<double> z(n);
  for (double& v : z) v = scale * rng.normal();
  return softmax(z);
}

inline Policy random_tabular(std::size_t n, Rng& rng, double scale = 1.5) {
  std::vector<double> z(n);
  for (double& v : z) v = scale * rng.normal();
  return Policy(TabularSoftmaxPolicy::from_logits(z));
}

inline Policy tabular_of(const Distribution& d) { return Policy(TabularSoftmaxPolicy::from_probs(d)); }

/// A random problem instance: game, spec (optionally two-anchor), policy and contexts.
struct Instance {
  PreferenceGame game;
  RegularizedSpec spec;
  Policy policy;
  ContextBatch contexts;
};

inline Instance random_tabular_instance(Rng& rng, std::size_t n, bool two_anchor) {
  PreferenceGame game(random_matrix_game(n, rng));
  const double beta = std::exp(rng.uniform(std::log(0.01), std::log(2.0)));
  const Policy ref = tabular_of(random_distribution(n, rng));
  std::optional<Policy> anchor;
  double bt = 0.0;
  if (two_anchor) {
    bt = std::exp(rng.uniform(std::log(0.01), std::log(2.0)));
    anchor = tabular_of(random_distribution(n, rng));
  }
  RegularizedSpec spec(beta, ref, bt, anchor);
  return Instance{std::move(game), std::move(spec), random_tabular(n, rng), {}};
}

inline Instance random_mlp_instance(Rng& rng, std::size_t n, bool two_anchor) {
  PreferenceGame game(random_low_rank_game(n, 2, rng));
  const double beta = std::exp(rng.uniform(std::log(0.01), std::log(2.0)));
  const Policy ref = tabular_of(random_distribution(n, rng));
  std::optional<Policy> anchor;
  double bt = 0.0;
  if (two_anchor) {
    bt = std::exp(rng.uniform(std::log(0.01), std::log(2.0)));
    anchor = Policy(MlpPolicy::glorot({4, 6, 6, n}, rng));
  }
  RegularizedSpec spec(beta, ref, bt, anchor);
  Policy policy(MlpPolicy::glorot({4, 6, 6, n}, rng));
  ContextBatch xs;
  for (std::size_t i = 0; i < 3; ++i) xs.contexts.push_back(game.sample_context(rng, i));
  return Instance{std::move(game), std::move(spec), std::move(policy), std::move(xs)};
}

template <class F>
CheckResult timed(F&& f) {
  const auto t0 = std::chrono::steady_clock::now();
  CheckResult r = f();
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

}  // namespace checks_detail

// ---------------------------------------------------------------------------
// gradients

/// Exact gradient vs central differences (step 1e-5) over 12 tabular and 12 MLP configurations.
inline CheckResult check_gradient_fd() {
  using namespace checks_detail;
  return timed([] {
    Rng rng = rng_split(101, "check-gradients");
    double worst = 0.0;
    std::size_t cases = 0;
    for (std::size_t i = 0; i < 24; ++i) {
      const bool mlp = i >= 12;
      const std::size_t n = 3 + i % 4;
      Instance in = mlp ? random_mlp_instance(rng, n, i % 2 == 1) : random_tabular_instance(rng, n, i % 2 == 1);
      const auto g = exact_gradient(in.game, in.spec, in.policy, in.contexts);
      const auto fd = verify::fd_objective_gradient(in.game, in.spec, in.policy, in.contexts, 1e-5);
      worst = std::max(worst, verify::relative_error(g, fd));
      ++cases;
    }
    return CheckResult{"gradient vs finite differences (" + std::to_string(cases) + " configurations)", worst, 1e-5,
                       worst <= 1e-5, "relative l2 error, worst case"};
  });
}

/// nash_prox_loss_gradient against (4/lambda) * unclipped pairwise estimator on single samples.
inline CheckResult check_loss_identity() {
  using namespace checks_detail;
  return timed([] {
    Rng rng = rng_split(102, "check-identity");
    double worst = 0.0;
    for (std::size_t i = 0; i < 100; ++i) {
      const bool mlp = i % 4 == 3;
      const std::size_t n = 2 + i % 5;
      Instance in = mlp ? random_mlp_instance(rng, std::max<std::size_t>(n, 3), i % 2 == 0)
                        : random_tabular_instance(rng, n, i % 2 == 0);
      const std::size_t m = in.policy.num_actions();
      PairSample s;
      s.x = in.contexts.contexts.empty() ? Context{} : in.contexts.contexts.front();
      s.y = rng.index(m);
      s.y_prime = rng.index(m);
      s.p = i % 3 == 0 ? rng.uniform() : (rng.bernoulli(0.5) ? 1.0 : 0.0);
      const std::span<const PairSample> one(&s, 1);
      const auto a = nash_prox_loss_gradient(in.spec, in.policy, one);
      auto b = pairwise_reinforce(in.spec, in.policy, one, kNoClip).vector;
      const double k = 4.0 / in.spec.lambda();
      for (double& v : b) v *= k;
      worst = std::max(worst, max_abs_difference(a, b));
    }
    return CheckResult{"loss gradient = (4/lambda) pairwise estimator (100 samples)", worst, 1e-12, worst <= 1e-12,
                       "max abs deviation"};
  });
}

/// The loss gradient also matches finite differences of the loss itself.
inline CheckResult check_loss_gradient_fd() {
  using namespace checks_detail;
  return timed([] {
    Rng rng = rng_split(103, "check-loss-fd");
    double worst = 0.0;
    for (std::size_t i = 0; i < 20; ++i) {
      Instance in = i % 2 ? random_mlp_instance(rng, 4, true) : random_tabular_instance(rng, 4, true);
      std::vector<PairSample> batch;
      for (std::size_t j = 0; j < 4; ++j) {
        PairSample s;
        s.x = in.contexts.contexts.empty() ? Context{} : in.contexts.contexts[j % in.contexts.contexts.size()];
        s.y = rng.index(4);
        s.y_prime = rng.index(4);
        s.p = rng.uniform();
        batch.push_back(s);
      }
      const auto g = nash_prox_loss_gradient(in.spec, in.policy, batch);
      Policy probe = in.policy;
      // The anchor stays fixed: it lives inside the spec, not in the probed policy.
      const auto fd = verify::finite_difference(
          [&](const std::vector<double>& p) {
            probe.params() = p;
            return nash_prox_loss(in.spec, probe, batch);
          },
          in.policy.params());
      worst = std::max(worst, verify::relative_error(g, fd));
    }
    return CheckResult{"loss gradient vs finite differences (20 batches)", worst, 1e-5, worst <= 1e-5,
                       "relative l2 error, worst case"};
  });
}

// ---------------------------------------------------------------------------
// estimators

/// Exhaustive expectation of the unclipped estimator equals the exact gradient.
inline CheckResult check_estimator_unbiased() {
  using namespace checks_detail;
  return timed([] {
    Rng rng = rng_split(201, "check-unbiased");
    double worst = 0.0;
    for (std::size_t i = 0; i < 10; ++i) {
      const std::size_t n = 2 + i % 4;
      Instance in = random_tabular_instance(rng, n, i % 2 == 1);
      const auto g = exact_gradient(in.game, in.spec, in.policy, {});
      const auto e = verify::enumerated_estimator_mean(in.game, in.spec, in.policy, Context{});
      worst = std::max(worst, max_abs_difference(g, e));
    }
    return CheckResult{"enumerated estimator mean = exact gradient (10 triples, Y <= 5)", worst, 1e-10,
                       worst <= 1e-10, "max abs deviation"};
  });
}

/// The same identity for the MLP policy at a fixed context.
inline CheckResult check_estimator_unbiased_mlp() {
  using namespace checks_detail;
  return timed([] {
    Rng rng = rng_split(202, "check-unbiased-mlp");
    double worst = 0.0;
    for (std::size_t i = 0; i < 5; ++i) {
      Instance in = random_mlp_instance(rng, 3 + i % 3, i % 2 == 0);
      const Context x = in.contexts.contexts.front();
      const auto g = exact_gradient(in.game, in.spec, in.policy, ContextBatch{{x}, 0});
      const auto e = verify::enumerated_estimator_mean(in.game, in.spec, in.policy, x);
      worst = std::max(worst, max_abs_difference(g, e));
    }
    return CheckResult{"enumerated estimator mean = exact gradient, MLP (5 cases)", worst, 1e-10, worst <= 1e-10,
                       "max abs deviation"};
  });
}

/// Uncentered Online IPO: E[grad] = (2/beta) * exact gradient at regularization 2 beta.
inline CheckResult check_ipo_expectation() {
  using namespace checks_detail;
  return timed([] {
    Rng rng = rng_split(203, "check-ipo");
    double worst = 0.0;
    for (std::size_t i = 0; i < 10; ++i) {
      Instance in = random_tabular_instance(rng, 2 + i % 4, false);
      const double beta = in.spec.beta;
      const RegularizedSpec doubled(2.0 * beta, in.spec.reference);
      auto g = exact_gradient(in.game, doubled, in.policy, {});
      for (double& v : g) v *= 2.0 / beta;
      const auto e = verify::enumerated_ipo_mean(in.game, in.spec, in.policy, Context{});
      worst = std::max(worst, verify::relative_error(g, e));
    }
    return CheckResult{"uncentered IPO mean = (2/beta) gradient at 2 beta (10 cases)", worst, 1e-10, worst <= 1e-10,
                       "relative l2 error"};
  });
}

// ---------------------------------------------------------------------------
// oracle

/// Closed-form best-response value vs lattice minimization over the simplex.
inline CheckResult check_best_response_bruteforce() {
  using namespace checks_detail;
  return timed([] {
    Rng rng = rng_split(301, "check-br");
    double worst = 0.0;
    for (std::size_t i = 0; i < 10; ++i) {
      const std::size_t n = 3 + i % 2;
      const Matrix p_mat = random_matrix_game(n, rng).matrix();
      const double beta = std::exp(rng.uniform(std::log(0.05), std::log(1.0)));
      const Distribution ref = random_distribution(n, rng);
      const double bt = i % 2 ? std::exp(rng.uniform(std::log(0.05), std::log(1.0))) : 0.0;
      const Distribution anc = random_distribution(n, rng);
      const Distribution q = random_distribution(n, rng);
      const LocalRegularizer reg = local_regularizer(beta, ref, bt, anc);
      const double closed = best_response_value(p_mat, reg, q);
      const auto grid = verify::simplex_grid_minimize(
          n, [&](std::span<const double> p) { return verify::direct_value(p_mat, p, q, beta, ref, bt, anc); });
      worst = std::max(worst, std::abs(grid.value - closed));
    }
    return CheckResult{"closed-form best response vs lattice search (10 games, Y in {3,4})", worst, 1e-5,
                       worst <= 1e-5, "max abs value gap"};
  });
}

/// Improvement floor holds exactly and exploitability does not increase.
inline CheckResult check_improvement() {
  using namespace checks_detail;
  return timed([] {
    Rng rng = rng_split(302, "check-improve");
    double worst_increase = -std::numeric_limits<double>::infinity();
    std::size_t floor_violations = 0;
    std::size_t floored = 0;
    for (std::size_t i = 0; i < 100; ++i) {
      const std::size_t n = 3 + i % 6;
      PreferenceGame game(random_matrix_game(n, rng));
      const double lambda = rng.uniform(1.0, 5.0);
      const Distribution ref = random_distribution(n, rng, 0.5);
      const Distribution nu = i % 2 ? ref : random_distribution(n, rng, 0.5);
      const double t = tau0(nu, ref, lambda) * rng.uniform(0.2, 1.0);
      const RegularizedSpec spec(lambda, tabular_of(ref));
      std::vector<double> z(n);
      for (double& v : z) v = 3.0 * rng.normal();
      const auto before = TabularSoftmaxPolicy::from_logits(z);
      const auto after = improve(before, ImprovementConfig{nu, t});
      const Distribution pa = softmax(after.row(0));
      for (std::size_t y = 0; y < n; ++y) {
        if (pa[y] < t * nu[y]) ++floor_violations;
      }
      if (after.params() != before.params()) ++floored;
      const double e0 = exploitability(game, spec, Policy(before), {}).value;
      const double e1 = exploitability(game, spec, Policy(after), {}).value;
      worst_increase = std::max(worst_increase, e1 - e0);
    }
    const bool ok = floor_violations == 0 && worst_increase <= 1e-9;
    return CheckResult{"improvement operator (100 policies, tau <= tau0, lambda >= 1)", worst_increase, 1e-9, ok,
                       "max exploitability increase; floor violations " + std::to_string(floor_violations) +
                           "; policies changed " + std::to_string(floored)};
  });
}

/// KL(pi*||ref) <= 1/(2 beta), subopt(ref) <= 1/2 and span(log ref - log pi*) <= 1/(2 beta).
inline CheckResult check_reference_regularity() {
  using namespace checks_detail;
  return timed([] {
    Rng rng = rng_split(303, "check-regularity");
    struct Case {
      PreferenceGame game;
      Distribution ref;
      double beta;
    };
    std::vector<Case> cases;
    const Distribution rps_ref{11.0 / 18.0, 1.0 / 3.0, 1.0 / 18.0};
    for (double b : {0.01, 0.1, 1.0}) cases.push_back({PreferenceGame(rock_paper_scissors()), rps_ref, b});
    for (std::size_t i = 0; i < 9; ++i) {
      const std::size_t n = std::vector<std::size_t>{3, 5, 10}[i % 3];
      PreferenceGame g(random_matrix_game(n, rng));
      cases.push_back({std::move(g), random_distribution(n, rng), std::exp(rng.uniform(std::log(0.02), std::log(2.0)))});
    }
    double worst = -std::numeric_limits<double>::infinity();
    for (const auto& c : cases) {
      const RegularizedSpec spec(c.beta, tabular_of(c.ref));
      const auto sol = solve_vnw(c.game, spec, 0.0, 1e-10, 1000000);
      const Distribution& star = sol.policy.front();
      const double bound = 1.0 / (2.0 * c.beta);
      const double kl = kl_divergence(star, c.ref);
      const double sub = exploitability(c.game, spec, spec.reference, {}).value;
      const double sp = span_of_difference(log_of(c.ref), log_of(star));
      // Report the largest excess over the bound (negative means slack).
      worst = std::max({worst, kl - bound, sub - 0.5, sp - bound});
    }
    return CheckResult{"reference regularity at " + std::to_string(cases.size()) + " solved equilibria", worst, 0.0,
                       worst <= 0.0, "largest excess over the bounds"};
  });
}

// ---------------------------------------------------------------------------
// contraction

/// Exact proximal point on RPS (beta = 0.01, eta = 1): KL ratio <= (1 + eta/2)^-1 + 1e-3 until KL < 1e-9.
inline CheckResult check_pp_contraction() {
  using namespace checks_detail;
  return timed([] {
    const Distribution ref{11.0 / 18.0, 1.0 / 3.0, 1.0 / 18.0};
    const RegularizedSpec spec(0.01, tabular_of(ref));
    const double eta = 1.0;
    const double bound = 1.0 / (1.0 + eta / 2.0) + 1e-3;
    const auto cert = pp_contraction_certificate(PreferenceGame(rock_paper_scissors()), spec, eta, 60);
    double worst = 0.0;
    bool reached = false;
    for (std::size_t k = 1; k < cert.size(); ++k) {
      if (cert[k - 1].second < 1e-9) {
        reached = true;
        break;
      }
      worst = std::max(worst, cert[k].second / cert[k - 1].second);
    }
    reached = reached || cert.back().second < 1e-9;
    return CheckResult{"proximal-point KL contraction on RPS", worst, bound, reached && worst <= bound,
                       reached ? "worst per-step ratio before KL < 1e-9" : "KL did not fall below 1e-9"};
  });
}

/// pp_spg_run with exact inner solves follows the same contraction.
inline CheckResult check_pp_spg_exact_inner() {
  using namespace checks_detail;
  return timed([] {
    const Distribution ref{11.0 / 18.0, 1.0 / 3.0, 1.0 / 18.0};
    const PreferenceGame game(rock_paper_scissors());
    const RegularizedSpec spec(0.01, tabular_of(ref));
    PpSpgOptions o;
    o.exact_inner = true;
    o.vnw = solve_vnw(game, spec, 0.0, 1e-12, 1000000);
    Rng rng = rng_split(401, "check-pp-run");
    const auto res = pp_spg_run(game, spec, 1.0, 8, o, rng);
    const double bound = 1.0 / 1.5 + 1e-3;
    double worst = 0.0;
    for (std::size_t k = 1; k < res.outer.size(); ++k) {
      if (res.outer[k - 1].kl_to_vnw < 1e-9) break;
      worst = std::max(worst, res.outer[k].kl_to_vnw / res.outer[k - 1].kl_to_vnw);
    }
    return CheckResult{"PP-SPG with exact inner solves", worst, bound, worst <= bound && !res.abort_reason,
                       "worst per-step KL ratio"};
  });
}

/// Deterministic SPG on a 10-action game, beta = 4, uniform reference, tau0 floor, gamma = 1/(2L):
/// subopt_{t+1} <= (1 - gamma m / 2) subopt_t + 1e-12 for 200 steps.
inline CheckResult check_deterministic_spg() {
  using namespace checks_detail;
  return timed([] {
    const std::size_t n = 10;
    const double beta = 4.0;
    Rng game_rng = rng_split(7, "game");
    const PreferenceGame game(random_matrix_game(n, game_rng));
    const Distribution u(n, 1.0 / static_cast<double>(n));
    const RegularizedSpec spec(beta, tabular_of(u));
    const auto k = softmax_constants(u, u, beta);
    SpgOptions o;
    o.lr.kind = LrKind::constant;
    o.lr.base = 1.0 / (2.0 * k.smoothness);
    o.exact_gradient = true;
    o.improvement = ImprovementConfig{u, tau0(u, u, beta)};
    Rng init_rng = rng_split(7, "init");
    std::vector<double> z(n);
    for (double& v : z) v = 3.0 * init_rng.normal();
    SpgState st(Policy(improve(TabularSoftmaxPolicy::from_logits(z), *o.improvement)), o);
    const double factor = 1.0 - o.lr.base * k.pl / 2.0;
    double prev = exploitability(game, spec, st.policy, {}).value;
    const double first = prev;
    double worst = -std::numeric_limits<double>::infinity();
    std::size_t increases = 0;
    for (std::size_t t = 0; t < 200; ++t) {
      spg_step(st, game, spec, init_rng);
      const double e = exploitability(game, spec, st.policy, {}).value;
      worst = std::max(worst, e - (factor * prev + 1e-12));
      if (e > prev) ++increases;
      prev = e;
    }
    return CheckResult{"deterministic SPG contraction (200 steps)", worst, 0.0, worst <= 0.0 && increases == 0,
                       "largest excess over the contraction bound; subopt " + std::to_string(first) + " -> " +
                           std::to_string(prev)};
  });
}

// ---------------------------------------------------------------------------

inline const std::vector<std::string>& suite_names() {
  static const std::vector<std::string> s = {"gradients", "estimators", "oracle", "contraction", "all"};
  return s;
}

inline std::vector<CheckResult> run_checks(const std::string& suite) {
  std::vector<CheckResult> out;
  const bool all = suite == "all";
  bool known = all;
  if (all || suite == "gradients") {
    known = true;
    out.push_back(check_gradient_fd());
    out.push_back(check_loss_identity());
    out.push_back(check_loss_gradient_fd());
  }
  if (all || suite == "estimators") {
    known = true;
    out.push_back(check_estimator_unbiased());
    out.push_back(check_estimator_unbiased_mlp());
    out.push_back(check_ipo_expectation());
  }
  if (all || suite == "oracle") {
    known = true;
    out.push_back(check_best_response_bruteforce());
    out.push_back(check_improvement());
    out.push_back(check_reference_regularity());
  }
  if (all || suite == "contraction") {
    known = true;
    out.push_back(check_pp_contraction());
    out.push_back(check_pp_spg_exact_inner());
    out.push_back(check_deterministic_spg());
  }
  if (!known) throw ArgumentError("unknown check suite: " + suite);
  return out;
}

inline void print_checks(std::ostream& os, const std::vector<CheckResult>& results) {
  for (const auto& r : results) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "measured %.3e tolerance %.3e (%.2f s)", r.measured, r.tolerance, r.seconds);
    os << (r.passed ? "PASS " : "FAIL ") << r.name << ": " << buf;
    if (!r.detail.empty()) os << " [" << r.detail << "]";
    os << '\n';
  }
}

}  // namespace nashprox
