// Acceptance run: one PASS/FAIL line per criterion. Exit status 0 only when every line passes.
//
//   acceptance            all ten criteria
//   acceptance 3 9        selected criteria

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include "nashprox/checks.hpp"
#include "nashprox/config.hpp"
#include "nashprox/experiment.hpp"

using namespace nashprox;

namespace {

struct Criterion {
  int id;
  std::string title;
  double budget_s;
  std::function<CheckResult()> run;
};

CheckResult rps_smoke() {
  std::string detail;
  bool ok = true;
  for (const char* name : {"rps-exact-spg", "rps-stochastic-spg", "rps-nashprox", "rps-stochastic-nashprox"}) {
    const auto r = run_experiment(preset(name), false);
    const auto& s = r.seeds.front();
    const double first = s.records.front().exploitability, last = s.records.back().exploitability;
    const bool done = !s.abort_reason && s.records.back().step == preset(name).steps;
    ok = ok && done && last < first;
    char buf[160];
    std::snprintf(buf, sizeof buf, "%s%s %.3e -> %.3e%s", detail.empty() ? "" : "; ", name, first, last,
                  done ? "" : " (incomplete)");
    detail += buf;
  }
  return CheckResult{"RPS presets run to completion and improve", 0.0, 0.0, ok, detail};
}

CheckResult lowrank_smoke() {
  ExperimentConfig c = preset("lowrank-nashprox");
  c.seeds = {1, 2, 3, 4, 5};
  const auto a = run_experiment(c, false);
  const auto b = run_experiment(c, false);
  bool reproducible = a.seeds.size() == b.seeds.size();
  for (std::size_t s = 0; reproducible && s < a.seeds.size(); ++s) {
    const auto& x = a.seeds[s].records;
    const auto& y = b.seeds[s].records;
    reproducible = x.size() == y.size() && a.seeds[s].abort_reason == b.seeds[s].abort_reason;
    for (std::size_t i = 0; reproducible && i < x.size(); ++i) reproducible = x[i].same_metrics(y[i]);
  }
  const auto& first = a.aggregate.front();
  const auto& last = a.aggregate.back();
  const bool complete = !a.aborted() && last.step == c.steps && last.n == c.seeds.size();
  const bool ok = complete && reproducible && last.mean[0] < first.mean[0];
  char buf[200];
  std::snprintf(buf, sizeof buf, "mean exploitability %.4e (step 0) -> %.4e (step %zu) over %zu seeds; %s",
                first.mean[0], last.mean[0], last.step, last.n,
                reproducible ? "bit-identical rerun" : "rerun differs");
  return CheckResult{"low-rank Nash Prox smoke", last.mean[0] - first.mean[0], 0.0, ok, buf};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all = {
      {1, "proximal point contraction", 1.0, check_pp_contraction},
      {2, "deterministic SPG contraction", 5.0, check_deterministic_spg},
      {3, "estimator unbiasedness", 1.0, check_estimator_unbiased},
      {4, "gradient vs finite differences", 5.0, check_gradient_fd},
      {5, "loss / estimator identity", 1.0, check_loss_identity},
      {6, "best response vs brute force", 30.0, check_best_response_bruteforce},
      {7, "improvement operator", 5.0, check_improvement},
      {8, "reference regularity", 1.0, check_reference_regularity},
      {9, "RPS experiment smoke", 30.0, rps_smoke},
      {10, "low-rank experiment smoke", 600.0, lowrank_smoke},
  };
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));

  int failures = 0;
  for (const auto& c : all) {
    if (!wanted.empty() && !wanted.count(c.id)) continue;
    CheckResult r;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      r = c.run();
    } catch (const std::exception& e) {
      r.passed = false;
      r.detail = std::string("exception: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_budget = secs < c.budget_s;
    const bool pass = r.passed && in_budget;
    if (!pass) ++failures;
    char measured[96] = "";
    if (c.id <= 8) std::snprintf(measured, sizeof measured, "measured %.3e, tolerance %.3e; ", r.measured, r.tolerance);
    std::printf("%s criterion %d: %s (%.2f s of %.0f s) %s%s%s\n", pass ? "PASS" : "FAIL", c.id, c.title.c_str(), secs,
                c.budget_s, measured, r.detail.c_str(), in_budget ? "" : " [over runtime budget]");
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
