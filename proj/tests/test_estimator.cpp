#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "nashprox/checks.hpp"
#include "nashprox/estimator.hpp"
#include "nashprox/verify.hpp"

using namespace nashprox;
using checks_detail::random_distribution;
using checks_detail::tabular_of;

namespace {
const Distribution kRpsRef{11.0 / 18, 1.0 / 3, 1.0 / 18};
const Distribution kUniform3{1.0 / 3, 1.0 / 3, 1.0 / 3};

double max_score_norm(const Policy& p, const Context& x) {
  double m = 0.0;
  for (std::size_t y = 0; y < p.num_actions(); ++y) m = std::max(m, l2_norm(p.score(x, y)));
  return m;
}
}  // namespace

TEST(Advantage, HandExample) {
  const Distribution pi{0.3, 0.3, 0.4}, ref{0.2, 0.5, 0.3};
  const LocalRegularizer reg = local_regularizer(0.1, ref);
  const PairSample s{{}, 0, 1, 0.0};
  EXPECT_NEAR(advantage(reg, log_of(pi), s), 0.5 + 0.1 * (std::log(1.5) - std::log(0.6)), 1e-15);
  const PairSample won{{}, 0, 1, 1.0};
  EXPECT_NEAR(advantage(reg, log_of(pi), won), -0.5 + 0.1 * (std::log(1.5) - std::log(0.6)), 1e-15);
}

TEST(Advantage, TargetTermUsesAnchor) {
  const Distribution pi{0.3, 0.3, 0.4}, ref{0.2, 0.5, 0.3}, anc{0.6, 0.2, 0.2};
  const LocalRegularizer reg = local_regularizer(0.1, ref, 0.4, anc);
  const PairSample s{{}, 0, 1, 0.5};
  const double expect = 0.1 * (std::log(1.5) - std::log(0.6)) + 0.4 * (std::log(0.5) - std::log(1.5));
  EXPECT_NEAR(advantage(reg, log_of(pi), s), expect, 1e-15);
}

TEST(Clip, Examples) {
  EXPECT_EQ(clip_advantage(3.0, 1.0), 1.0);
  EXPECT_EQ(clip_advantage(-3.0, 1.0), -1.0);
  EXPECT_EQ(clip_advantage(0.25, 1.0), 0.25);
  EXPECT_THROW(clip_advantage(0.25, 0.0), ArgumentError);
}

TEST(PairwiseReinforce, IdenticalActionsGiveZero) {
  const RegularizedSpec spec(0.1, tabular_of(kRpsRef));
  const Policy p = tabular_of(Distribution{0.2, 0.3, 0.5});
  const std::vector<PairSample> b{{{}, 1, 1, 1.0}, {{}, 2, 2, 0.0}};
  for (double v : pairwise_reinforce(spec, p, b).vector) EXPECT_EQ(v, 0.0);
}

TEST(PairwiseReinforce, VanishesAsClipShrinks) {
  const RegularizedSpec spec(0.1, tabular_of(kRpsRef));
  const Policy p = tabular_of(Distribution{0.2, 0.3, 0.5});
  const std::vector<PairSample> b{{{}, 0, 1, 1.0}, {{}, 2, 0, 0.0}};
  EXPECT_LE(l2_norm(pairwise_reinforce(spec, p, b, 1e-12).vector), 1e-11);
  EXPECT_THROW(pairwise_reinforce(spec, p, b, 0.0), ArgumentError);
  EXPECT_THROW(pairwise_reinforce(spec, p, std::vector<PairSample>{}), ArgumentError);
}

TEST(PairwiseReinforce, SingleSampleMatchesFormula) {
  const Distribution pi{0.2, 0.3, 0.5};
  const RegularizedSpec spec(0.1, tabular_of(kRpsRef));
  const Policy p = tabular_of(pi);
  const PairSample s{{}, 2, 0, 1.0};
  const double a = advantage(local_regularizer(0.1, kRpsRef), log_of(pi), s);
  const auto g = pairwise_reinforce(spec, p, std::vector<PairSample>{s}).vector;
  const auto s2 = p.score({}, 2), s0 = p.score({}, 0);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(g[i], 0.5 * (s2[i] - s0[i]) * a, 1e-15);
}

TEST(PairwiseReinforce, ClippingMovesEachSampleMonotonically) {
  Rng rng = rng_split(21, "clip");
  const PreferenceGame g(random_matrix_game(4, rng));
  const RegularizedSpec spec(2.0, tabular_of(random_distribution(4, rng, 2.0)));
  const Policy p = checks_detail::random_tabular(4, rng, 3.0);
  const auto full = verify::enumerated_estimator_mean(g, spec, p, {});
  double prev = INFINITY;
  for (double m : {0.1, 0.5, 1.0, 2.0, 10.0, 1e6}) {
    for (std::size_t y = 0; y < 4; ++y)
      for (std::size_t yp = 0; yp < 4; ++yp) {
        const std::vector<PairSample> s{{{}, y, yp, 1.0}};
        const auto gm = pairwise_reinforce(spec, p, s, m).vector;
        const auto gu = pairwise_reinforce(spec, p, s).vector;
        const auto gl = pairwise_reinforce(spec, p, s, 0.5 * m).vector;
        std::vector<double> dm(4), dl(4);
        for (std::size_t i = 0; i < 4; ++i) {
          dm[i] = gm[i] - gu[i];
          dl[i] = gl[i] - gu[i];
        }
        EXPECT_LE(l2_norm(dm), l2_norm(dl) + 1e-15);
      }
    std::vector<double> bias(4);
    const auto mean = verify::enumerated_estimator_mean(g, spec, p, {}, m);
    for (std::size_t i = 0; i < 4; ++i) bias[i] = mean[i] - full[i];
    prev = l2_norm(bias);
  }
  EXPECT_LE(prev, 1e-14);
}

TEST(PairwiseReinforce, BoundedByClipTimesScore) {
  Rng rng = rng_split(22, "bound");
  const RegularizedSpec spec(0.5, tabular_of(random_distribution(5, rng)));
  const Policy p = checks_detail::random_tabular(5, rng, 2.0);
  const double smax = max_score_norm(p, {});
  for (double m : {0.1, 1.0, 3.0})
    for (int k = 0; k < 200; ++k) {
      const std::vector<PairSample> s{{{}, rng.index(5), rng.index(5), rng.bernoulli(0.5) ? 1.0 : 0.0}};
      EXPECT_LE(l2_norm(pairwise_reinforce(spec, p, s, m).vector), m * smax + 1e-12);
    }
}

TEST(PairwiseReinforce, SwapWithComplementaryOutcomeIsInvariant) {
  Rng rng = rng_split(23, "swap");
  const RegularizedSpec spec(0.3, tabular_of(random_distribution(4, rng)), 0.2, tabular_of(random_distribution(4, rng)));
  const Policy p = checks_detail::random_tabular(4, rng, 2.0);
  for (int k = 0; k < 50; ++k) {
    const std::size_t y = rng.index(4), yp = rng.index(4);
    const double o = rng.bernoulli(0.5) ? 1.0 : 0.0;
    const auto a = pairwise_reinforce(spec, p, std::vector<PairSample>{{{}, y, yp, o}}).vector;
    const auto b = pairwise_reinforce(spec, p, std::vector<PairSample>{{{}, yp, y, 1.0 - o}}).vector;
    EXPECT_LE(max_abs_difference(a, b), 1e-14);
  }
}

TEST(PairwiseReinforce, UnbiasedForExactGradient) {
  Rng rng = rng_split(24, "unbiased");
  for (int k = 0; k < 10; ++k) {
    const PreferenceGame g(random_matrix_game(4, rng));
    const RegularizedSpec spec(rng.uniform(0.05, 1.0), tabular_of(random_distribution(4, rng)), 0.3,
                               tabular_of(random_distribution(4, rng)));
    const Policy p = checks_detail::random_tabular(4, rng, 2.0);
    EXPECT_LE(max_abs_difference(verify::enumerated_estimator_mean(g, spec, p, {}), exact_gradient(g, spec, p, {})),
              1e-12);
  }
}

TEST(ExactGradient, ZeroAtEquilibrium) {
  Rng rng = rng_split(25, "vnw-grad");
  for (int k = 0; k < 5; ++k) {
    const PreferenceGame g(random_matrix_game(5, rng));
    const RegularizedSpec spec(rng.uniform(0.05, 1.0), tabular_of(random_distribution(5, rng)));
    const auto sol = solve_vnw(g, spec, 0.0, 1e-13, 1000000);
    EXPECT_LE(l2_norm(exact_gradient(g, spec, sol.as_policy(), {})), 1e-11);
  }
}

TEST(ExactGradient, DirectionalDerivatives) {
  Rng rng = rng_split(26, "dir");
  const PreferenceGame g(random_matrix_game(4, rng));
  const RegularizedSpec spec(0.2, tabular_of(random_distribution(4, rng)));
  const Policy p = checks_detail::random_tabular(4, rng, 2.0);
  const auto grad = exact_gradient(g, spec, p, {});
  for (int k = 0; k < 10; ++k) {
    std::vector<double> d(grad.size());
    for (double& v : d) v = rng.normal();
    Policy plus = p, minus = p;
    const double h = 1e-5;
    for (std::size_t i = 0; i < d.size(); ++i) {
      plus.params()[i] += h * d[i];
      minus.params()[i] -= h * d[i];
    }
    const double fd = (j_objective(g, spec, plus, p, {}) - j_objective(g, spec, minus, p, {})) / (2 * h);
    double dot = 0.0;
    for (std::size_t i = 0; i < d.size(); ++i) dot += grad[i] * d[i];
    EXPECT_NEAR(dot, fd, 1e-8);
  }
}

TEST(ExactGradient, UniformRpsWithVanishingBeta) {
  const PreferenceGame g(rock_paper_scissors());
  const RegularizedSpec spec(1e-12, tabular_of(kRpsRef));
  EXPECT_LE(l2_norm(exact_gradient(g, spec, tabular_of(kUniform3), {})), 1e-12);
}

TEST(ExactGradient, MlpMatchesFiniteDifferences) {
  Rng rng = rng_split(27, "mlp");
  const auto inst = checks_detail::random_mlp_instance(rng, 5, true);
  const auto fd = verify::fd_objective_gradient(inst.game, inst.spec, inst.policy, inst.contexts);
  EXPECT_LE(verify::relative_error(exact_gradient(inst.game, inst.spec, inst.policy, inst.contexts), fd), 1e-5);
}

TEST(NashProxLoss, GradientIsFourOverLambdaTimesEstimate) {
  Rng rng = rng_split(28, "identity");
  for (int k = 0; k < 50; ++k) {
    const RegularizedSpec spec(rng.uniform(0.01, 1.0), tabular_of(random_distribution(4, rng)), rng.uniform(0.01, 1.0),
                               tabular_of(random_distribution(4, rng)));
    const Policy p = checks_detail::random_tabular(4, rng, 2.0);
    const std::vector<PairSample> s{{{}, rng.index(4), rng.index(4), rng.uniform()}};
    const auto lg = nash_prox_loss_gradient(spec, p, s);
    auto g = pairwise_reinforce(spec, p, s).vector;
    for (double& v : g) v *= 4.0 / spec.lambda();
    EXPECT_LE(max_abs_difference(lg, g), 1e-12);
  }
}

TEST(NashProxLoss, ZeroWhenPolicyMatchesEveryAnchorAtHalf) {
  const Distribution pi{0.2, 0.3, 0.5};
  const RegularizedSpec spec(0.4, tabular_of(pi), 0.6, tabular_of(pi));
  const Policy p = tabular_of(pi);
  const std::vector<PairSample> b{{{}, 0, 1, 0.5}, {{}, 2, 1, 0.5}};
  EXPECT_NEAR(nash_prox_loss(spec, p, b), 0.0, 1e-28);
  EXPECT_LE(l2_norm(nash_prox_loss_gradient(spec, p, b)), 1e-15);
}

TEST(NashProxLoss, GradientMatchesFiniteDifferences) {
  Rng rng = rng_split(29, "loss-fd");
  const RegularizedSpec spec(0.3, tabular_of(random_distribution(5, rng)), 0.5, tabular_of(random_distribution(5, rng)));
  const Policy p = checks_detail::random_tabular(5, rng, 2.0);
  std::vector<PairSample> b;
  for (int k = 0; k < 8; ++k) b.push_back({{}, rng.index(5), rng.index(5), rng.bernoulli(0.5) ? 1.0 : 0.0});
  Policy probe = p;
  const auto fd = verify::finite_difference(
      [&](const std::vector<double>& th) {
        probe.params() = th;
        return nash_prox_loss(spec, probe, b);
      },
      p.params());
  EXPECT_LE(verify::relative_error(nash_prox_loss_gradient(spec, p, b), fd), 1e-6);
}

TEST(OnlineIpo, GradientMatchesFiniteDifferences) {
  Rng rng = rng_split(30, "ipo-fd");
  const RegularizedSpec spec(0.3, tabular_of(random_distribution(4, rng)));
  const Policy p = checks_detail::random_tabular(4, rng, 2.0);
  std::vector<PairSample> b;
  for (int k = 0; k < 8; ++k) b.push_back({{}, rng.index(4), rng.index(4), rng.bernoulli(0.5) ? 1.0 : 0.0});
  Policy probe = p;
  const auto fd = verify::finite_difference(
      [&](const std::vector<double>& th) {
        probe.params() = th;
        return online_ipo_loss(spec, probe, b);
      },
      p.params());
  EXPECT_LE(verify::relative_error(online_ipo_gradient(spec, p, b), fd), 1e-6);
}

TEST(Schedules, Examples) {
  const auto s = schedules(1.0, 1.0, 0);
  EXPECT_NEAR(s.gamma, 30.0 / 64.0, 1e-15);
  EXPECT_EQ(s.batch, 8u);
  for (double kc : {1.0, 2.0, 10.0})
    for (double m : {0.01, 1.0}) EXPECT_LE(schedules(kc, m, 0).gamma, 1.0 / (2.0 * kc * m) + 1e-15);
  EXPECT_THROW(schedules(0.5, 1.0, 0), ConfigError);
  EXPECT_THROW(schedules(1.0, 0.0, 0), ConfigError);
}

TEST(Schedules, BatchGrowsAndRateDecays) {
  for (std::size_t t = 0; t < 100; ++t) {
    EXPECT_LE(schedules(3.0, 0.5, t + 1).gamma, schedules(3.0, 0.5, t).gamma);
    EXPECT_GE(schedules(3.0, 0.5, t + 1).batch, schedules(3.0, 0.5, t).batch);
  }
}

TEST(SamplePairs, DeterministicGivenSeed) {
  const PreferenceGame g(rock_paper_scissors());
  const Policy p = tabular_of(Distribution{0.2, 0.3, 0.5});
  Rng a = rng_split(5, "train"), b = rng_split(5, "train");
  const auto sa = sample_pairs(g, p, {}, 64, false, a);
  const auto sb = sample_pairs(g, p, {}, 64, false, b);
  ASSERT_EQ(sa.size(), 64u);
  for (std::size_t i = 0; i < 64; ++i) {
    EXPECT_EQ(sa[i].y, sb[i].y);
    EXPECT_EQ(sa[i].y_prime, sb[i].y_prime);
    EXPECT_EQ(sa[i].p, sb[i].p);
    EXPECT_TRUE(sa[i].p == 0.0 || sa[i].p == 1.0);
  }
}

TEST(SamplePairs, ExactFeedbackUsesProbability) {
  const PreferenceGame g(rock_paper_scissors());
  Rng rng(3);
  for (const auto& s : sample_pairs(g, tabular_of(kUniform3), {}, 32, true, rng))
    EXPECT_EQ(s.p, preference_prob(g, {}, s.y, s.y_prime));
}
