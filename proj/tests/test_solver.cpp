#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "nashprox/checks.hpp"
#include "nashprox/solver.hpp"

using namespace nashprox;
using checks_detail::random_distribution;
using checks_detail::tabular_of;

namespace {
const Distribution kRpsRef{11.0 / 18, 1.0 / 3, 1.0 / 18};

struct Equilibrium {
  PreferenceGame game;
  RegularizedSpec spec;
  Policy star;
};

Equilibrium rps_equilibrium(double beta) {
  PreferenceGame g(rock_paper_scissors());
  RegularizedSpec spec(beta, tabular_of(kRpsRef));
  Policy star = solve_vnw(g, spec, 0.0, 1e-11, 1000000).as_policy();
  return {std::move(g), std::move(spec), std::move(star)};
}
}  // namespace

TEST(Stationarity, SpgStaysAtEquilibrium) {
  const auto eq = rps_equilibrium(0.1);
  SpgOptions o;
  o.lr.base = 0.5;
  o.exact_gradient = true;
  SpgState st(eq.star, o);
  Rng rng(1);
  for (int t = 0; t < 100; ++t) {
    spg_step(st, eq.game, eq.spec, rng);
    EXPECT_LE(exploitability(eq.game, eq.spec, st.policy, {}).value, 1e-8);
  }
  EXPECT_LE(span_of_difference(st.policy.log_probs({}), eq.star.log_probs({})), 1e-8);
}

TEST(Stationarity, NashProxStaysAtEquilibrium) {
  const auto eq = rps_equilibrium(0.1);
  NashProxOptions o;
  o.beta_target = 0.5;
  o.lr.base = 0.05;
  o.kappa.kappa = 0.1;
  o.exact_gradient = true;
  NashProxState st(eq.star, o);
  Rng rng(2);
  for (int t = 0; t < 100; ++t) {
    nash_prox_step(st, eq.game, eq.spec, rng);
    EXPECT_LE(exploitability(eq.game, eq.spec, st.policy, {}).value, 1e-8);
  }
  EXPECT_LE(span_of_difference(st.policy.log_probs({}), eq.star.log_probs({})), 1e-8);
  EXPECT_LE(span_of_difference(st.target.log_probs({}), eq.star.log_probs({})), 1e-8);
}

TEST(Stationarity, PpSpgExactInnerStaysAtEquilibrium) {
  const auto eq = rps_equilibrium(0.1);
  PpSpgOptions o;
  o.exact_inner = true;
  Rng rng(3);
  const auto r = pp_spg_run(eq.game, eq.spec, 1.0, 200, o, rng);
  EXPECT_LE(span_of_difference(r.policy.log_probs({}), eq.star.log_probs({})), 1e-8);
  EXPECT_LE(r.outer.back().exploitability, 1e-8);
}

TEST(Determinism, SameSeedSameTrajectory) {
  Rng g_rng(4);
  const PreferenceGame g(random_matrix_game(5, g_rng));
  const RegularizedSpec spec(0.2, tabular_of(random_distribution(5, g_rng)));
  NashProxOptions o;
  o.beta_target = 0.3;
  o.lr.base = 0.1;
  o.batch.size = 16;
  o.kappa.kappa = 0.2;
  auto run = [&] {
    NashProxState st(spec.reference, o);
    Rng rng = rng_split(9, "train");
    for (int t = 0; t < 200; ++t) nash_prox_step(st, g, spec, rng);
    return st.policy.params();
  };
  EXPECT_EQ(run(), run());
}

TEST(NashProx, KappaOneCopiesOnlineIntoTarget) {
  const PreferenceGame g(rock_paper_scissors());
  const RegularizedSpec spec(0.1, tabular_of(kRpsRef));
  NashProxOptions o;
  o.beta_target = 0.2;
  o.lr.base = 0.3;
  o.batch.size = 8;
  o.kappa.kappa = 1.0;
  NashProxState st(spec.reference, o);
  Rng rng(5);
  for (int t = 0; t < 20; ++t) {
    nash_prox_step(st, g, spec, rng);
    EXPECT_EQ(st.target.params(), st.policy.params());
  }
}

TEST(NashProx, KappaZeroFreezesTarget) {
  const PreferenceGame g(rock_paper_scissors());
  const RegularizedSpec spec(0.1, tabular_of(kRpsRef));
  NashProxOptions o;
  o.beta_target = 0.2;
  o.lr.base = 0.3;
  o.batch.size = 8;
  o.kappa.kappa = 0.0;
  NashProxState st(spec.reference, o);
  const auto frozen = st.target.params();
  Rng rng(6);
  for (int t = 0; t < 20; ++t) nash_prox_step(st, g, spec, rng);
  EXPECT_EQ(st.target.params(), frozen);
  EXPECT_NE(st.policy.params(), frozen);
}

TEST(NashProx, TargetStaysInsideOnlineEnvelope) {
  Rng g_rng(7);
  const PreferenceGame g(random_matrix_game(4, g_rng));
  const RegularizedSpec spec(0.1, tabular_of(random_distribution(4, g_rng)));
  NashProxOptions o;
  o.beta_target = 0.4;
  o.lr.base = 0.5;
  o.batch.size = 4;
  o.kappa.kappa = 0.3;
  NashProxState st(checks_detail::random_tabular(4, g_rng, 2.0), o);
  std::vector<double> lo = st.policy.params(), hi = lo;
  Rng rng(8);
  for (int t = 0; t < 100; ++t) {
    nash_prox_step(st, g, spec, rng);
    const auto& p = st.policy.params();
    for (std::size_t i = 0; i < p.size(); ++i) {
      lo[i] = std::min(lo[i], p[i]);
      hi[i] = std::max(hi[i], p[i]);
      EXPECT_GE(st.target.params()[i], lo[i] - 1e-12);
      EXPECT_LE(st.target.params()[i], hi[i] + 1e-12);
    }
  }
}

TEST(NashProx, MetricsCarryKappaAndLr) {
  const PreferenceGame g(rock_paper_scissors());
  const RegularizedSpec spec(0.1, tabular_of(kRpsRef));
  NashProxOptions o;
  o.beta_target = 0.2;
  o.lr.kind = LrKind::inv_sqrt;
  o.lr.base = 1.0;
  o.kappa.anneal_c = 0.3;
  NashProxState st(spec.reference, o);
  Rng rng(9);
  for (std::size_t t = 0; t < 11; ++t) {
    const auto m = nash_prox_step(st, g, spec, rng);
    EXPECT_EQ(m.step, t);
    EXPECT_NEAR(m.lr, 1.0 / std::sqrt(static_cast<double>(t + 1)), 1e-15);
    EXPECT_NEAR(m.kappa, 1.0 / (0.3 * static_cast<double>(t) + 1.0), 1e-15);
  }
}

TEST(KappaRule, AnnealedFormula) {
  EXPECT_NEAR((KappaRule{1.0, 0.3}).at(10), 0.25, 1e-15);
  EXPECT_EQ((KappaRule{0.4, 0.0}).at(1000), 0.4);
  EXPECT_THROW((KappaRule{1.5, 0.0}).at(0), ConfigError);
}

TEST(Optimizer, AdamFirstStepMovesByLr) {
  Optimizer opt;
  opt.kind = OptimizerKind::adam;
  std::vector<double> p{1.0, -2.0};
  const std::vector<double> g{0.3, -5.0};
  opt.step(p, g, 0.01);
  EXPECT_NEAR(p[0], 0.99, 1e-9);
  EXPECT_NEAR(p[1], -1.99, 1e-9);
}

TEST(PpSpg, AnchorFrozenWithinOuterStep) {
  const PreferenceGame g(rock_paper_scissors());
  const RegularizedSpec spec(0.1, tabular_of(kRpsRef));
  PpSpgOptions o;
  o.inner.lr.base = 0.2;
  o.inner.batch.size = 8;
  o.inner_lengths = {5};
  std::vector<std::vector<double>> first_anchor(3);
  std::size_t calls = 0;
  o.on_inner_step = [&](std::size_t k, std::size_t, const RegularizedSpec& sk) {
    ++calls;
    ASSERT_TRUE(sk.anchor.has_value());
    EXPECT_NEAR(sk.beta_target, 0.1 / 0.5, 1e-15);
    if (first_anchor[k].empty()) first_anchor[k] = sk.anchor->params();
    EXPECT_EQ(sk.anchor->params(), first_anchor[k]);
  };
  Rng rng(10);
  const auto r = pp_spg_run(g, spec, 0.5, 3, o, rng);
  EXPECT_EQ(calls, 15u);
  EXPECT_EQ(r.outer.size(), 4u);
  EXPECT_EQ(first_anchor[0], spec.reference.params());
  EXPECT_NE(first_anchor[1], first_anchor[0]);
}

TEST(PpSpg, DegenerateRunsReturnReference) {
  const PreferenceGame g(rock_paper_scissors());
  const RegularizedSpec spec(0.1, tabular_of(kRpsRef));
  PpSpgOptions o;
  o.inner_lengths = {10};
  Rng rng(11);
  EXPECT_EQ(pp_spg_run(g, spec, 1.0, 0, o, rng).policy, spec.reference);
  o.inner_lengths = {0};
  EXPECT_EQ(pp_spg_run(g, spec, 1.0, 5, o, rng).policy, spec.reference);
  EXPECT_THROW(pp_spg_run(g, spec, 0.0, 1, o, rng), ConfigError);
}

TEST(PpSpg, TracksKlToEquilibrium) {
  const auto eq = rps_equilibrium(0.01);
  PpSpgOptions o;
  o.exact_inner = true;
  o.vnw = solve_vnw(eq.game, eq.spec, 0.0, 1e-12, 1000000);
  Rng rng(12);
  const auto r = pp_spg_run(eq.game, eq.spec, 1.0, 30, o, rng);
  EXPECT_GT(r.outer.front().kl_to_vnw, 0.1);
  EXPECT_LT(r.outer.back().kl_to_vnw, 1e-9);
}

TEST(GeometricAnchor, ExampleAndLimits) {
  const Policy ref = tabular_of(Distribution{0.5, 0.5});
  const Policy pk = tabular_of(Distribution{0.9, 0.1});
  const auto a = geometric_anchor(ref, pk, 1.0, {});
  EXPECT_NEAR(a[0], 0.75, 1e-15);
  EXPECT_NEAR(a[1], 0.25, 1e-15);
  const auto big = geometric_anchor(ref, pk, 1e12, {});
  EXPECT_NEAR(big[0], 0.5, 1e-9);
  const auto small = geometric_anchor(ref, pk, 1e-12, {});
  EXPECT_NEAR(small[0], 0.9, 1e-9);
  EXPECT_THROW(geometric_anchor(ref, pk, 0.0, {}), ConfigError);
}

TEST(Spg, DeterministicContractionCheck) {
  const auto r = check_deterministic_spg();
  EXPECT_TRUE(r.passed) << r.detail;
}

TEST(Spg, ImprovementKeepsFloor) {
  Rng g_rng(13);
  const PreferenceGame g(random_matrix_game(4, g_rng));
  const Distribution u(4, 0.25);
  const RegularizedSpec spec(1.0, tabular_of(u));
  SpgOptions o;
  o.lr.base = 2.0;
  o.batch.size = 4;
  const double tau = tau0(u, u, 1.0);
  o.improvement = ImprovementConfig{u, tau};
  SpgState st(checks_detail::random_tabular(4, g_rng, 1.0), o);
  Rng rng(14);
  for (int t = 0; t < 100; ++t) {
    spg_step(st, g, spec, rng);
    for (double p : st.policy.probs({})) EXPECT_GE(p, tau * 0.25 - 1e-15);
  }
}

TEST(Spg, NonFiniteStepIsNumericError) {
  const PreferenceGame g(rock_paper_scissors());
  const RegularizedSpec spec(0.1, tabular_of(kRpsRef));
  SpgOptions o;
  o.lr.base = 1e308;
  o.exact_gradient = true;
  o.estimator_scale = 1e308;
  SpgState st(tabular_of(Distribution{0.2, 0.3, 0.5}), o);
  Rng rng(15);
  EXPECT_THROW(spg_step(st, g, spec, rng), NumericError);
}

TEST(OnlineIpo, RejectsTwoAnchorSpec) {
  const PreferenceGame g(rock_paper_scissors());
  const RegularizedSpec spec(0.1, tabular_of(kRpsRef), 0.1, tabular_of(kRpsRef));
  OnlineIpoState st(spec.reference, OnlineIpoOptions{});
  Rng rng(16);
  EXPECT_THROW(online_ipo_step(st, g, spec, rng), ConfigError);
}

TEST(OnlineIpo, BothTargetsReduceExploitabilityOnRps) {
  const PreferenceGame g(rock_paper_scissors());
  const RegularizedSpec spec(0.3, tabular_of(kRpsRef));
  for (bool centered : {true, false}) {
    OnlineIpoOptions o;
    o.lr.kind = LrKind::inv_sqrt;
    o.lr.base = 0.01;
    o.batch.size = 64;
    o.exact_feedback = true;
    o.centered = centered;
    OnlineIpoState st(spec.reference, o);
    Rng rng(17);
    const double e0 = exploitability(g, spec, st.policy, {}).value;
    for (int t = 0; t < 2000; ++t) online_ipo_step(st, g, spec, rng);
    EXPECT_LT(exploitability(g, spec, st.policy, {}).value, 0.5 * e0) << (centered ? "centered" : "uncentered");
  }
}
