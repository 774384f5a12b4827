#include <gtest/gtest.h>

#include <cmath>
#include <sstream>
#include <vector>

#include "nashprox/checks.hpp"
#include "nashprox/oracle.hpp"
#include "nashprox/policy.hpp"
#include "nashprox/verify.hpp"

using namespace nashprox;
using checks_detail::random_distribution;
using checks_detail::tabular_of;

TEST(Probs, TabularExamples) {
  const Policy zero(TabularSoftmaxPolicy(1, 3));
  for (double p : zero.probs({})) EXPECT_NEAR(p, 1.0 / 3, 1e-15);
  const Distribution ref{11.0 / 18, 1.0 / 3, 1.0 / 18};
  const auto p = Policy(TabularSoftmaxPolicy::from_logits(log_of(ref))).probs({});
  for (std::size_t y = 0; y < 3; ++y) EXPECT_NEAR(p[y], ref[y], 1e-15);
}

TEST(Probs, ZeroMlpIsUniform) {
  const Policy m(MlpPolicy({4, 8, 8, 5}));
  Context x;
  x.theta = {0.3, -1.0, 2.0, 0.1};
  for (double p : m.probs(x)) EXPECT_NEAR(p, 0.2, 1e-15);
}

TEST(Probs, NonFiniteParametersAreNumericErrors) {
  Policy p(TabularSoftmaxPolicy(1, 3));
  p.params()[1] = std::nan("");
  EXPECT_THROW(p.probs({}), NumericError);
}

TEST(Probs, SumToOnePerRow) {
  Rng rng = rng_split(1, "rows");
  TabularSoftmaxPolicy t(4, 6);
  for (double& v : t.params()) v = 5.0 * rng.normal();
  const Policy p(t);
  for (std::size_t r = 0; r < 4; ++r) {
    Context x;
    x.index = r;
    const auto q = p.probs(x);
    double s = 0.0;
    for (double v : q) s += v;
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(Score, TabularUniformExample) {
  const Policy p(TabularSoftmaxPolicy(1, 3));
  const auto s = p.score({}, 0);
  EXPECT_NEAR(s[0], 2.0 / 3, 1e-15);
  EXPECT_NEAR(s[1], -1.0 / 3, 1e-15);
  EXPECT_NEAR(s[2], -1.0 / 3, 1e-15);
}

TEST(Score, ZeroMeanUnderPolicy) {
  Rng rng = rng_split(2, "score");
  const Policy tab = checks_detail::random_tabular(5, rng);
  const Policy mlp(MlpPolicy::glorot({4, 6, 5}, rng));
  Context x;
  x.theta = {0.5, -0.2, 1.1, 0.0};
  for (const Policy* p : {&tab, &mlp}) {
    const Context& cx = p->is_tabular() ? Context{} : x;
    const auto pi = p->probs(cx);
    std::vector<double> mean(p->num_params(), 0.0);
    for (std::size_t y = 0; y < 5; ++y) {
      const auto s = p->score(cx, y);
      for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += pi[y] * s[i];
    }
    for (double v : mean) EXPECT_NEAR(v, 0.0, 1e-10);
  }
}

TEST(Score, MlpMatchesFiniteDifferences) {
  Rng rng = rng_split(3, "mlp-fd");
  for (int k = 0; k < 20; ++k) {
    const Policy m(MlpPolicy::glorot({4, 7, 7, 5}, rng));
    Context x;
    x.theta.resize(4);
    for (double& t : x.theta) t = rng.normal();
    const std::size_t y = rng.index(5);
    const auto s = m.score(x, y);
    Policy probe = m;
    const auto fd = verify::finite_difference(
        [&](const std::vector<double>& p) {
          probe.params() = p;
          return probe.log_probs(x)[y];
        },
        m.params());
    EXPECT_LE(verify::relative_error(s, fd), 1e-5);
  }
}

TEST(Mlp, GlorotRangeAndZeroBiases) {
  Rng rng = rng_split(4, "init");
  const MlpPolicy m = MlpPolicy::glorot({4, 128, 128, 100}, rng);
  EXPECT_EQ(m.num_params(), 4u * 128 + 128 + 128 * 128 + 128 + 128 * 100 + 100);
  const double a0 = std::sqrt(6.0 / (4 + 128));
  for (std::size_t i = 0; i < 4 * 128; ++i) EXPECT_LE(std::abs(m.params()[i]), a0);
  for (std::size_t i = 4 * 128; i < 4 * 128 + 128; ++i) EXPECT_EQ(m.params()[i], 0.0);
}

TEST(SampleAction, DeterministicPolicy) {
  const Policy p(TabularSoftmaxPolicy::from_logits(std::vector<double>{0.0, 1e6, 0.0}));
  Rng rng(1);
  for (int i = 0; i < 1000; ++i) EXPECT_EQ(sample_action(p, {}, rng), 1u);
}

TEST(SampleAction, UniformFrequenciesWithinFourSigma) {
  const Policy p(TabularSoftmaxPolicy(1, 4));
  Rng rng = rng_split(5, "action");
  const int n = 100000;
  std::vector<int> c(4, 0);
  for (int i = 0; i < n; ++i) ++c[sample_action(p, {}, rng)];
  const double sigma = std::sqrt(n * 0.25 * 0.75);
  for (int v : c) EXPECT_LT(std::abs(v - n * 0.25), 4.0 * sigma);
}

TEST(SampleAction, SeededSequenceRepeats) {
  const Policy p = tabular_of(Distribution{0.2, 0.3, 0.5});
  Rng a = rng_split(6, "action"), b = rng_split(6, "action");
  for (int i = 0; i < 500; ++i) EXPECT_EQ(sample_action(p, {}, a), sample_action(p, {}, b));
}

TEST(Improve, UnchangedAtFloorReference) {
  const Distribution nu{0.2, 0.3, 0.5};
  const auto t = TabularSoftmaxPolicy::from_probs(nu);
  EXPECT_EQ(improve(t, ImprovementConfig{nu, 1.0}).params(), t.params());
  EXPECT_EQ(improve(t, ImprovementConfig{nu, 0.4}).params(), t.params());
}

TEST(Improve, HandExample) {
  const Distribution nu{1.0 / 3, 1.0 / 3, 1.0 / 3};
  const auto out = improve(TabularSoftmaxPolicy::from_probs(Distribution{0.05, 0.15, 0.8}), ImprovementConfig{nu, 0.3});
  const auto p = softmax(out.row(0));
  EXPECT_NEAR(p[0], 0.10, 1e-12);
  EXPECT_NEAR(p[1], 0.15, 1e-12);
  EXPECT_NEAR(p[2], 0.75, 1e-12);
  const auto d = improve_distribution(Distribution{0.05, 0.15, 0.8}, nu, 0.3);
  EXPECT_NEAR(d[0], 0.10, 1e-15);
  EXPECT_NEAR(d[2], 0.75, 1e-15);
}

TEST(Improve, FloorExactAndIdempotent) {
  Rng rng = rng_split(7, "improve");
  for (int k = 0; k < 200; ++k) {
    const std::size_t n = 3 + k % 5;
    const Distribution nu = random_distribution(n, rng, 0.5);
    const double tau = tau0(nu, nu, 1.0 + rng.uniform());
    std::vector<double> z(n);
    for (double& v : z) v = 4.0 * rng.normal();
    const auto once = improve(TabularSoftmaxPolicy::from_logits(z), ImprovementConfig{nu, tau});
    const auto p = softmax(once.row(0));
    double s = 0.0;
    for (std::size_t y = 0; y < n; ++y) {
      EXPECT_GE(p[y], tau * nu[y]);
      s += p[y];
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
    const auto twice = improve(once, ImprovementConfig{nu, tau});
    EXPECT_LE(max_abs_difference(softmax(twice.row(0)), p), 1e-12);
  }
}

TEST(Improve, MassTakenOnlyFromMaxRatioAction) {
  const Distribution nu{0.25, 0.25, 0.25, 0.25};
  const Distribution pi{0.01, 0.3, 0.29, 0.4};
  const auto d = improve_distribution(pi, nu, 0.2);
  EXPECT_NEAR(d[0], 0.05, 1e-15);
  EXPECT_EQ(d[1], 0.3);
  EXPECT_EQ(d[2], 0.29);
  EXPECT_NEAR(d[3], 0.36, 1e-15);
}

TEST(Improve, TiesGoToLowestIndex) {
  const Distribution nu{0.25, 0.25, 0.25, 0.25};
  const auto d = improve_distribution(Distribution{0.01, 0.33, 0.33, 0.33}, nu, 0.2);
  EXPECT_NEAR(d[1], 0.29, 1e-15);
  EXPECT_EQ(d[2], 0.33);
}

TEST(Improve, InfeasibleTauIsConfigError) {
  const Distribution nu{0.5, 0.5};
  EXPECT_THROW(improve(TabularSoftmaxPolicy::from_probs(Distribution{0.1, 0.9}), ImprovementConfig{nu, 1.5}), ConfigError);
  EXPECT_THROW(improve_distribution(Distribution{0.1, 0.9}, nu, 0.0), ConfigError);
}

TEST(Improve, DoesNotIncreaseExploitability) {
  Rng rng = rng_split(8, "improve-expl");
  const PreferenceGame g(random_matrix_game(5, rng));
  for (int k = 0; k < 100; ++k) {
    const double lambda = rng.uniform(1.0, 4.0);
    const Distribution ref = random_distribution(5, rng, 0.5);
    const RegularizedSpec spec(lambda, tabular_of(ref));
    const double tau = tau0(ref, ref, lambda);
    std::vector<double> z(5);
    for (double& v : z) v = 3.0 * rng.normal();
    const auto before = TabularSoftmaxPolicy::from_logits(z);
    const auto after = improve(before, ImprovementConfig{ref, tau});
    EXPECT_LE(exploitability(g, spec, Policy(after), {}).value, exploitability(g, spec, Policy(before), {}).value + 1e-9);
  }
}

TEST(Tau0, Examples) {
  const Distribution u{1.0 / 3, 1.0 / 3, 1.0 / 3};
  EXPECT_NEAR(tau0(u, u, 1.0), 0.25, 1e-15);
  EXPECT_NEAR(tau0(u, u, 1e9), 0.25, 1e-15);
  const Distribution skew{0.001, 0.499, 0.5};
  EXPECT_NEAR(tau0(skew, skew, 1e9), 0.001 / 1.001, 1e-12);
  EXPECT_THROW(tau0(Distribution{0.0, 1.0}, Distribution{0.5, 0.5}, 1.0), SupportError);
}

TEST(SoftmaxLipschitz, L1BoundedByL2OfLogits) {
  Rng rng = rng_split(9, "lip");
  for (int k = 0; k < 200; ++k) {
    std::vector<double> a(6), b(6);
    for (auto& v : a) v = 2.0 * rng.normal();
    for (std::size_t i = 0; i < 6; ++i) b[i] = a[i] + 0.5 * rng.normal();
    std::vector<double> d(6);
    for (std::size_t i = 0; i < 6; ++i) d[i] = a[i] - b[i];
    EXPECT_LE(l1_distance(softmax(a), softmax(b)), l2_norm(d) + 1e-15);
  }
}

TEST(Checkpoint, RoundTripsBitIdentically) {
  Rng rng = rng_split(10, "ckpt");
  const Policy mlp(MlpPolicy::glorot({4, 9, 3}, rng));
  TabularSoftmaxPolicy t(2, 3);
  for (double& v : t.params()) v = rng.normal() * 1e-3 + 1.0 / 3.0;
  const Policy tab(t);
  for (const Policy* p : {&mlp, &tab}) {
    std::stringstream ss;
    write_checkpoint(ss, *p);
    EXPECT_EQ(read_checkpoint(ss), *p);
  }
  std::stringstream bad("nashprox-policy 2\n");
  EXPECT_ANY_THROW(read_checkpoint(bad));
}
