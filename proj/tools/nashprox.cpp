// Command-line front end.
//
//   nashprox run    --config FILE [--seed N] [--out DIR]
//   nashprox oracle --config FILE --out FILE
//   nashprox check  --suite gradients|estimators|oracle|contraction|all
//   nashprox sweep  --config FILE --grid FILE
//   nashprox preset NAME            print a preset config
//
// Exit codes: 0 success, 1 validation error, 2 numeric abort, 3 check failure.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "nashprox/checks.hpp"
#include "nashprox/config.hpp"
#include "nashprox/experiment.hpp"
#include "nashprox/oracle.hpp"

namespace {

using namespace nashprox;

constexpr int kOk = 0;
constexpr int kInvalid = 1;
constexpr int kAbort = 2;
constexpr int kCheckFailed = 3;

ExperimentConfig load(const std::string& path) {
  // A bare preset name is accepted in place of a file.
  if (!std::filesystem::exists(path)) {
    for (const auto& n : preset_names())
      if (n == path) return preset(n);
  }
  return load_config(path);
}

double final_mean_exploitability(const ExperimentResult& r) {
  return r.aggregate.empty() ? std::nan("") : r.aggregate.back().mean.front();
}

int cmd_run(const std::string& config, std::optional<std::uint64_t> seed, const std::string& out) {
  ExperimentConfig c = load(config);
  if (seed) c.seeds = {*seed};
  if (!out.empty()) c.output = out;
  const auto r = run_experiment(c);
  for (const auto& s : r.seeds) {
    const auto& first = s.records.front();
    const auto& last = s.records.back();
    std::printf("seed %llu: exploitability %.6e -> %.6e at step %zu%s\n", static_cast<unsigned long long>(s.seed),
                first.exploitability, last.exploitability, last.step,
                s.abort_reason ? (" (aborted: " + *s.abort_reason + ")").c_str() : "");
  }
  std::printf("wrote %s\n", c.output.c_str());
  return r.aborted() ? kAbort : kOk;
}

int cmd_oracle(const std::string& config, const std::string& out) {
  const ExperimentConfig c = load(config);
  validate(c);
  const Problem pb = build_problem(c, c.seeds.front());
  const auto sol = solve_vnw(pb.game, pb.spec, 0.0, 1e-10, 1000000, pb.eval);
  const auto xs = pb.game.resolve(pb.eval);
  double expl = 0.0;
  std::ofstream f(out);
  if (!f) throw ConfigError("cannot write " + out);
  f << "# regularized equilibrium, beta = " << config_detail::fmt(c.beta) << "\n";
  f << "residual = " << config_detail::fmt(sol.residual) << "\n";
  f << "iterations = " << sol.iterations << "\n";
  f << "eta = " << config_detail::fmt(safe_eta(c.beta, 0.0)) << "\n";
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const auto e = exploitability_at(pb.game.preference_matrix(xs[i]), local_regularizer(pb.spec, xs[i]),
                                     sol.policy[i]);
    expl += e.value;
  }
  f << "exploitability = " << config_detail::fmt(expl / static_cast<double>(xs.size())) << "\n";
  for (std::size_t i = 0; i < xs.size(); ++i) f << "context_" << i << " = " << config_detail::join(sol.policy[i]) << "\n";
  std::printf("residual %.3e after %zu iterations; wrote %s\n", sol.residual, sol.iterations, out.c_str());
  return kOk;
}

int cmd_check(const std::string& suite) {
  const auto results = run_checks(suite);
  print_checks(std::cout, results);
  for (const auto& r : results)
    if (!r.passed) return kCheckFailed;
  return kOk;
}

/// Grid file: one line per key, `section.key = v1 | v2 | ...`. Points are the Cartesian product.
int cmd_sweep(const std::string& config, const std::string& grid_path) {
  const ExperimentConfig base = load(config);
  std::vector<std::pair<std::string, std::vector<std::string>>> axes;
  std::istringstream is(read_text_file(grid_path));
  for (std::string line; std::getline(is, line);) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = config_detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const auto dot = line.find('.');
    if (eq == std::string::npos || dot == std::string::npos || dot > eq)
      throw ConfigError("grid: expected section.key = v1 | v2: " + line);
    std::vector<std::string> values;
    std::stringstream vs(line.substr(eq + 1));
    for (std::string v; std::getline(vs, v, '|');)
      if (!config_detail::trim(v).empty()) values.push_back(config_detail::trim(v));
    if (values.empty()) throw ConfigError("grid: no values for " + line.substr(0, eq));
    axes.emplace_back(config_detail::trim(line.substr(0, eq)), std::move(values));
  }
  if (axes.empty()) throw ConfigError("grid: no axes");

  // Validate every point before running any of them.
  std::vector<std::pair<std::string, ExperimentConfig>> points;
  std::vector<std::size_t> idx(axes.size(), 0);
  while (true) {
    ExperimentConfig c = base;
    std::string label;
    for (std::size_t a = 0; a < axes.size(); ++a) {
      const auto& [key, values] = axes[a];
      const auto dot = key.find('.');
      c = parse_config("[" + key.substr(0, dot) + "]\n" + key.substr(dot + 1) + " = " + values[idx[a]] + "\n", c);
      if (!label.empty()) label += "_";
      label += key.substr(dot + 1) + "=" + values[idx[a]];
    }
    for (char& ch : label)
      if (ch == '/' || ch == ' ' || ch == ',') ch = '-';
    c.output = (std::filesystem::path(base.output) / label).string();
    validate(c);
    points.emplace_back(label, std::move(c));
    std::size_t a = 0;
    while (a < axes.size() && ++idx[a] == axes[a].second.size()) idx[a++] = 0;
    if (a == axes.size()) break;
  }

  std::filesystem::create_directories(base.output);
  std::ofstream summary(std::filesystem::path(base.output) / "sweep.csv");
  summary << "point,final_step,final_exploitability_mean,aborted\n";
  bool any_abort = false;
  for (const auto& [label, c] : points) {
    const auto r = run_experiment(c);
    any_abort = any_abort || r.aborted();
    summary << label << ',' << r.aggregate.back().step << ',' << csv_number(final_mean_exploitability(r)) << ','
            << (r.aborted() ? 1 : 0) << '\n';
    std::printf("%s: final mean exploitability %.6e\n", label.c_str(), final_mean_exploitability(r));
  }
  return any_abort ? kAbort : kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Regularized preference-game solvers"};
  app.require_subcommand(1);

  std::string config, out, suite, grid, preset_name;
  std::optional<std::uint64_t> seed;

  auto* run = app.add_subcommand("run", "run an experiment");
  run->add_option("--config", config, "config file or preset name")->required();
  run->add_option("--seed", seed, "run this seed only");
  run->add_option("--out", out, "output directory");

  auto* oracle = app.add_subcommand("oracle", "solve the regularized equilibrium exactly");
  oracle->add_option("--config", config, "config file or preset name")->required();
  oracle->add_option("--out", out, "output file")->required();

  auto* check = app.add_subcommand("check", "run a property suite");
  check->add_option("--suite", suite, "gradients | estimators | oracle | contraction | all")->required();

  auto* sweep = app.add_subcommand("sweep", "run a config over a grid of overrides");
  sweep->add_option("--config", config, "config file or preset name")->required();
  sweep->add_option("--grid", grid, "grid file")->required();

  auto* pre = app.add_subcommand("preset", "print a preset config");
  pre->add_option("name", preset_name, "preset name")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kInvalid;
  }

  try {
    if (*run) return cmd_run(config, seed, out);
    if (*oracle) return cmd_oracle(config, out);
    if (*check) return cmd_check(suite);
    if (*sweep) return cmd_sweep(config, grid);
    if (*pre) {
      std::cout << emit(preset(preset_name));
      return kOk;
    }
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric abort: %s\n", e.what());
    return kAbort;
  } catch (const ConvergenceError& e) {
    std::fprintf(stderr, "numeric abort: %s\n", e.what());
    return kAbort;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kInvalid;
  }
  return kOk;
}
