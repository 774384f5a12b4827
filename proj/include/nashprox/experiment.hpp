#pragma once

// Experiment orchestration: builds the problem for each seed, runs the chosen
// algorithm, evaluates on a frozen context batch and writes CSV output.
//
// Output directory layout:
//   run_header.txt   every config field plus derived constants
//   seed_<N>.csv     one per seed
//   aggregate.csv    mean / stderr across seeds per step
//
// Random streams per seed: "game" (random games), "init" (policy init),
// "eval" (evaluation contexts), "train" (everything sampled during training).

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <filesystem>
#include <functional>
#include <fstream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "nashprox/config.hpp"
#include "nashprox/core.hpp"
#include "nashprox/game.hpp"
#include "nashprox/oracle.hpp"
#include "nashprox/policy.hpp"
#include "nashprox/records.hpp"
#include "nashprox/regularized.hpp"
#include "nashprox/rng.hpp"
#include "nashprox/solver.hpp"

namespace nashprox {

struct Problem {
  PreferenceGame game;
  RegularizedSpec spec;  // beta and reference; the evaluation target
  Policy init;
  ContextBatch eval;
  Distribution reference;
};

inline PreferenceGame build_game(const ExperimentConfig& c, std::uint64_t seed) {
  if (!c.game_file.empty()) return parse_game(read_text_file(c.game_file));
  if (c.game_kind == "rps") return PreferenceGame(rock_paper_scissors());
  if (c.game_kind == "matrix") {
    Matrix p(c.actions, c.actions);
    p.data = c.matrix;
    return PreferenceGame(MatrixPreferenceGame(std::move(p)));
  }
  Rng rng = rng_split(seed, "game");
  if (c.game_kind == "random_matrix") return PreferenceGame(random_matrix_game(c.actions, rng));
  if (c.game_kind == "lowrank") return PreferenceGame(random_low_rank_game(c.actions, c.rank, rng));
  throw ConfigError("unknown game kind: " + c.game_kind);
}

inline Problem build_problem(const ExperimentConfig& c, std::uint64_t seed) {
  PreferenceGame game = build_game(c, seed);
  const std::size_t n = game.num_actions();
  Distribution ref = c.reference.empty() ? Distribution(n, 1.0 / static_cast<double>(n)) : c.reference;
  if (ref.size() != n) throw ConfigError("invalid configuration keys: spec.reference");
  if (c.policy_kind == "mlp" && game.context_free()) throw ConfigError("invalid configuration keys: policy.kind");
  Policy ref_policy(TabularSoftmaxPolicy::from_probs(ref));
  RegularizedSpec spec(c.beta, ref_policy);

  Rng init_rng = rng_split(seed, "init");
  std::optional<Policy> init;
  if (c.policy_kind == "mlp") {
    std::vector<std::size_t> dims{game.context_dim()};
    dims.insert(dims.end(), c.hidden.begin(), c.hidden.end());
    dims.push_back(n);
    if (c.init == "glorot") {
      init = Policy(MlpPolicy::glorot(dims, init_rng));
    } else {
      MlpPolicy m(dims);
      if (c.init == "random")
        for (double& v : m.params()) v = c.init_scale * init_rng.normal();
      init = Policy(std::move(m));
    }
  } else {
    auto logits = log_of(ref);
    if (c.init == "random")
      for (double& v : logits) v += c.init_scale * init_rng.normal();
    init = Policy(TabularSoftmaxPolicy::from_logits(logits));
  }

  ContextBatch eval;
  if (!game.context_free()) eval = sample_context_batch(game, c.eval_contexts, splitmix64(seed ^ fnv1a64("eval")));
  return Problem{std::move(game), std::move(spec), std::move(*init), std::move(eval), std::move(ref)};
}

/// Improvement floor used by a config: nu = reference, tau from the config or tau0.
inline ImprovementConfig improvement_for(const ExperimentConfig& c, const Distribution& ref) {
  const double t = c.tau > 0.0 ? c.tau : tau0(ref, ref, c.beta);
  return ImprovementConfig{ref, t};
}

/// Softmax constants of the beta-only problem with the reference as floor and anchor.
inline SoftmaxConstants derived_constants(const ExperimentConfig& c, const Distribution& ref) {
  return softmax_constants(ref, ref, c.beta);
}

inline LrRule lr_rule_for(const ExperimentConfig& c, const Distribution& ref) {
  LrRule r;
  r.base = c.lr;
  if (c.lr_rule == "constant") {
    r.kind = LrKind::constant;
  } else if (c.lr_rule == "inv_sqrt") {
    r.kind = LrKind::inv_sqrt;
  } else if (c.lr_rule == "smoothness") {
    r.kind = LrKind::constant;
    r.base = 1.0 / (2.0 * derived_constants(c, ref).smoothness);
  } else {
    const auto k = derived_constants(c, ref);
    r.kind = LrKind::theory;
    r.kappa_cond = std::max(1.0, k.smoothness / k.pl);
    r.m_pl = k.pl;
  }
  return r;
}

inline BatchRule batch_rule_for(const ExperimentConfig& c, const Distribution& ref) {
  BatchRule b;
  b.size = c.batch_size;
  if (c.batch_rule == "theory") {
    const auto k = derived_constants(c, ref);
    b.kind = BatchKind::theory;
    b.kappa_cond = std::max(1.0, k.smoothness / k.pl);
    b.m_pl = k.pl;
  }
  return b;
}

inline OptimizerKind optimizer_for(const ExperimentConfig& c) {
  return c.optimizer == "adam" ? OptimizerKind::adam : OptimizerKind::sgd;
}

inline SpgOptions spg_options_for(const ExperimentConfig& c, const Distribution& ref) {
  SpgOptions o;
  o.lr = lr_rule_for(c, ref);
  o.batch = batch_rule_for(c, ref);
  o.clip = c.clip;
  if (c.improvement) o.improvement = improvement_for(c, ref);
  o.exact_gradient = c.exact_gradient;
  o.exact_feedback = c.exact_feedback;
  o.optimizer = optimizer_for(c);
  o.estimator_scale = c.update_scale;
  return o;
}

namespace experiment_detail {

inline double mean_kl_to_ref(const Problem& pb, const Policy& policy) {
  const auto xs = pb.game.resolve(pb.eval);
  const auto log_ref = log_of(pb.reference);
  double s = 0.0;
  for (const auto& x : xs) s += kl_from_log(policy.probs(x), log_ref);
  return s / static_cast<double>(xs.size());
}

}  // namespace experiment_detail

/// One seed of an experiment. Numeric failures end the run with an abort reason.
inline SeedResult run_seed(const ExperimentConfig& c, std::uint64_t seed) {
  const auto start = std::chrono::steady_clock::now();
  SeedResult res;
  res.seed = seed;
  const Problem pb = build_problem(c, seed);
  Rng rng = rng_split(seed, "train");

  auto elapsed = [&] {
    return static_cast<std::int64_t>(
        std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start).count());
  };
  auto record = [&](std::size_t step, const Policy& policy, const StepMetrics& mt) {
    RunRecord r;
    r.step = step;
    r.exploitability = exploitability(pb.game, pb.spec, policy, pb.eval).value;
    r.kl_to_ref = experiment_detail::mean_kl_to_ref(pb, policy);
    r.grad_norm = mt.grad_norm;
    r.clipped_fraction = mt.clipped_fraction;
    r.kappa = mt.kappa;
    r.lr = mt.lr;
    r.batch_size = mt.batch_size;
    r.wall_ms = elapsed();
    res.records.push_back(r);
  };
  auto due = [&](std::size_t s) { return s % c.eval_every == 0 || s == c.steps; };

  // Uniform driver: step() advances one update and returns its metrics.
  std::function<StepMetrics()> step;
  std::function<const Policy&()> current;
  StepMetrics first;

  std::optional<SpgState> spg;
  std::optional<OnlineIpoState> ipo;
  std::optional<NashProxState> np;
  std::optional<RegularizedSpec> spec_k;

  if (c.algorithm == "spg") {
    spg.emplace(pb.init, spg_options_for(c, pb.reference));
    if (spg->options.improvement && spg->policy.is_tabular())
      spg->policy.tabular() = improve(spg->policy.tabular(), *spg->options.improvement);
    step = [&] { return spg_step(*spg, pb.game, pb.spec, rng); };
    current = [&]() -> const Policy& { return spg->policy; };
    first.lr = spg->options.lr.at(0);
    first.batch_size = spg->options.batch.at(0);
  } else if (c.algorithm == "pp_spg") {
    auto o = spg_options_for(c, pb.reference);
    // The improvement floor targets the two-anchor game of each outer step.
    o.improvement.reset();
    spg.emplace(pb.init, o);
    step = [&] {
      if (spg->step % c.inner_steps == 0) {
        const Policy anchor = spg->policy;
        spec_k.emplace(c.beta, pb.spec.reference, c.beta / c.eta, anchor);
      }
      return spg_step(*spg, pb.game, *spec_k, rng);
    };
    current = [&]() -> const Policy& { return spg->policy; };
    first.lr = o.lr.at(0);
    first.batch_size = o.batch.at(0);
  } else if (c.algorithm == "online_ipo") {
    OnlineIpoOptions o;
    o.lr = lr_rule_for(c, pb.reference);
    o.batch = batch_rule_for(c, pb.reference);
    o.loss_scale = c.update_scale;
    o.centered = c.ipo_target == "centered";
    o.exact_feedback = c.exact_feedback;
    o.optimizer = optimizer_for(c);
    ipo.emplace(pb.init, o);
    step = [&] { return online_ipo_step(*ipo, pb.game, pb.spec, rng); };
    current = [&]() -> const Policy& { return ipo->policy; };
    first.lr = o.lr.at(0);
    first.batch_size = o.batch.at(0);
  } else if (c.algorithm == "nash_prox") {
    NashProxOptions o;
    o.beta_target = c.beta_target;
    o.lr = lr_rule_for(c, pb.reference);
    o.batch = batch_rule_for(c, pb.reference);
    o.kappa = KappaRule{c.kappa, c.kappa_anneal};
    o.loss_scale = c.update_scale;
    o.exact_gradient = c.exact_gradient;
    o.exact_feedback = c.exact_feedback;
    o.optimizer = optimizer_for(c);
    np.emplace(pb.init, o);
    step = [&] { return nash_prox_step(*np, pb.game, pb.spec, rng); };
    current = [&]() -> const Policy& { return np->policy; };
    first.lr = o.lr.at(0);
    first.batch_size = o.batch.at(0);
    first.kappa = o.kappa.at(0);
  } else {
    throw ConfigError("invalid configuration keys: schedule.algorithm");
  }

  record(0, current(), first);
  for (std::size_t s = 1; s <= c.steps; ++s) {
    StepMetrics mt;
    try {
      mt = step();
      if (due(s)) record(s, current(), mt);
    } catch (const NumericError& e) {
      res.abort_reason = "step " + std::to_string(s) + ": " + e.what();
      break;
    }
  }
  return res;
}

struct ExperimentResult {
  std::vector<SeedResult> seeds;
  std::vector<AggregateRow> aggregate;
  bool aborted() const {
    for (const auto& s : seeds)
      if (s.abort_reason) return true;
    return false;
  }
};

/// Header text: the emitted config followed by derived constants.
inline std::string run_header(const ExperimentConfig& c) {
  std::string h = emit(c);
  const Problem pb = build_problem(c, c.seeds.front());
  const auto k = derived_constants(c, pb.reference);
  h += "\n[constants]\n";
  h += "actions = " + std::to_string(pb.game.num_actions()) + "\n";
  h += "lambda = " + config_detail::fmt(c.beta + (c.algorithm == "nash_prox" ? c.beta_target : 0.0)) + "\n";
  h += "tau0 = " + config_detail::fmt(tau0(pb.reference, pb.reference, c.beta)) + "\n";
  h += "smoothness = " + config_detail::fmt(k.smoothness) + "\n";
  h += "pl = " + config_detail::fmt(k.pl) + "\n";
  h += "lr_at_0 = " + config_detail::fmt(lr_rule_for(c, pb.reference).at(0)) + "\n";
  return h;
}

/// Runs every seed (concurrently, independent state) and aggregates.
/// Writes output files when write_files is set.
inline ExperimentResult run_experiment(const ExperimentConfig& c, bool write_files = true,
                                       unsigned max_threads = 0) {
  validate(c);
  ExperimentResult out;
  out.seeds.resize(c.seeds.size());
  std::vector<std::exception_ptr> errors(c.seeds.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < c.seeds.size(); i = next++) {
      try {
        out.seeds[i] = run_seed(c, c.seeds[i]);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  unsigned n_threads = max_threads ? max_threads : std::max(1u, std::thread::hardware_concurrency());
  n_threads = static_cast<unsigned>(std::min<std::size_t>(n_threads, c.seeds.size()));
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  out.aggregate = aggregate(out.seeds);

  if (write_files) {
    namespace fs = std::filesystem;
    const fs::path dir(c.output);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw ConfigError("cannot create output directory " + c.output + ": " + ec.message());
    {
      std::ofstream h(dir / "run_header.txt");
      h << run_header(c);
    }
    for (const auto& s : out.seeds) {
      std::ofstream f(dir / ("seed_" + std::to_string(s.seed) + ".csv"));
      if (!f) throw ConfigError("cannot write into " + c.output);
      write_run_csv(f, s);
    }
    std::ofstream a(dir / "aggregate.csv");
    write_aggregate_csv(a, out.aggregate);
  }
  return out;
}

}  // namespace nashprox
