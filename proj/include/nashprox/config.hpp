#pragma once

// Experiment configuration: a flat key/value text file with one section per
// concern. Lists are comma separated. Example:
//
//   [game]
//   kind = rps
//   [spec]
//   beta = 0.01
//   reference = 0.6111111111111111, 0.3333333333333333, 0.05555555555555555
//   [schedule]
//   algorithm = spg
//   ...
//
// emit() writes every field, so a run header never hides a default.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "nashprox/core.hpp"
#include "nashprox/game.hpp"

namespace nashprox {

struct ExperimentConfig {
  // [game]
  std::string game_kind = "rps";  // rps | matrix | random_matrix | lowrank
  std::string game_file;          // game definition file; overrides the inline fields
  std::size_t actions = 3;
  std::size_t rank = 2;
  std::vector<double> matrix;     // kind = matrix, row-major

  // [spec]
  double beta = 0.01;
  double beta_target = 0.0;       // nash_prox only
  double eta = 1.0;               // pp_spg only
  std::vector<double> reference;  // empty = uniform

  // [policy]
  std::string policy_kind = "tabular";  // tabular | mlp
  std::vector<std::size_t> hidden{128, 128};
  std::string init = "reference";       // reference | random | glorot
  double init_scale = 1.0;              // std of random tabular logits

  // [schedule]
  std::string algorithm = "spg";  // spg | online_ipo | pp_spg | nash_prox
  std::string optimizer = "sgd";  // sgd | adam
  std::string lr_rule = "constant";  // constant | inv_sqrt | smoothness | theory
  double lr = 0.1;
  std::string batch_rule = "fixed";  // fixed | theory
  std::size_t batch_size = 1;
  double kappa = 1.0;
  double kappa_anneal = 0.0;      // c in kappa_t = 1/(c t + 1); 0 keeps kappa constant
  double clip = 1e9;
  double update_scale = 1.0;
  std::string ipo_target = "centered";  // centered | uncentered (online_ipo only)
  bool exact_gradient = false;
  bool exact_feedback = false;
  bool improvement = false;
  double tau = 0.0;               // 0 selects tau0
  std::size_t inner_steps = 100;  // pp_spg T_k

  // [run]
  std::size_t steps = 1000;
  std::size_t eval_every = 100;
  std::size_t eval_contexts = 512;
  std::vector<std::uint64_t> seeds{1};
  std::string output = "runs/out";

  bool operator==(const ExperimentConfig&) const = default;
};

namespace config_detail {

inline std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  for (std::string item; std::getline(ss, item, ',');) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <class T>
std::string join(const std::vector<T>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ", ";
    if constexpr (std::is_floating_point_v<T>)
      s += fmt(v[i]);
    else
      s += std::to_string(v[i]);
  }
  return s;
}

inline double to_double(const std::string& s) {
  std::size_t pos = 0;
  const double v = std::stod(s, &pos);
  if (pos != s.size()) throw std::invalid_argument(s);
  return v;
}

inline std::uint64_t to_u64(const std::string& s) {
  if (s.empty() || s[0] == '-') throw std::invalid_argument(s);
  std::size_t pos = 0;
  const auto v = std::stoull(s, &pos);
  if (pos != s.size()) throw std::invalid_argument(s);
  return v;
}

inline bool to_bool(const std::string& s) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw std::invalid_argument(s);
}

struct Field {
  std::string section;
  std::string key;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string&)> set;
};

#define NP_STR(sec, name) \
  Field{sec, #name, [](const ExperimentConfig& c) { return c.name; }, \
        [](ExperimentConfig& c, const std::string& v) { c.name = v; }}
#define NP_DBL(sec, name) \
  Field{sec, #name, [](const ExperimentConfig& c) { return fmt(c.name); }, \
        [](ExperimentConfig& c, const std::string& v) { c.name = to_double(v); }}
#define NP_SZ(sec, name) \
  Field{sec, #name, [](const ExperimentConfig& c) { return std::to_string(c.name); }, \
        [](ExperimentConfig& c, const std::string& v) { c.name = static_cast<std::size_t>(to_u64(v)); }}
#define NP_BOOL(sec, name) \
  Field{sec, #name, [](const ExperimentConfig& c) { return std::string(c.name ? "true" : "false"); }, \
        [](ExperimentConfig& c, const std::string& v) { c.name = to_bool(v); }}

inline const std::vector<Field>& fields() {
  static const std::vector<Field> f = {
      Field{"game", "kind", [](const ExperimentConfig& c) { return c.game_kind; },
            [](ExperimentConfig& c, const std::string& v) { c.game_kind = v; }},
      Field{"game", "file", [](const ExperimentConfig& c) { return c.game_file; },
            [](ExperimentConfig& c, const std::string& v) { c.game_file = v; }},
      NP_SZ("game", actions),
      NP_SZ("game", rank),
      Field{"game", "matrix", [](const ExperimentConfig& c) { return join(c.matrix); },
            [](ExperimentConfig& c, const std::string& v) {
              c.matrix.clear();
              for (const auto& s : split_list(v)) c.matrix.push_back(to_double(s));
            }},
      NP_DBL("spec", beta),
      NP_DBL("spec", beta_target),
      NP_DBL("spec", eta),
      Field{"spec", "reference",
            [](const ExperimentConfig& c) { return c.reference.empty() ? std::string("uniform") : join(c.reference); },
            [](ExperimentConfig& c, const std::string& v) {
              c.reference.clear();
              if (v == "uniform") return;
              for (const auto& s : split_list(v)) c.reference.push_back(to_double(s));
            }},
      Field{"policy", "kind", [](const ExperimentConfig& c) { return c.policy_kind; },
            [](ExperimentConfig& c, const std::string& v) { c.policy_kind = v; }},
      Field{"policy", "hidden", [](const ExperimentConfig& c) { return join(c.hidden); },
            [](ExperimentConfig& c, const std::string& v) {
              c.hidden.clear();
              for (const auto& s : split_list(v)) c.hidden.push_back(static_cast<std::size_t>(to_u64(s)));
            }},
      NP_STR("policy", init),
      NP_DBL("policy", init_scale),
      NP_STR("schedule", algorithm),
      NP_STR("schedule", optimizer),
      NP_STR("schedule", lr_rule),
      NP_DBL("schedule", lr),
      NP_STR("schedule", batch_rule),
      NP_SZ("schedule", batch_size),
      NP_DBL("schedule", kappa),
      NP_DBL("schedule", kappa_anneal),
      NP_DBL("schedule", clip),
      NP_DBL("schedule", update_scale),
      NP_STR("schedule", ipo_target),
      NP_BOOL("schedule", exact_gradient),
      NP_BOOL("schedule", exact_feedback),
      NP_BOOL("schedule", improvement),
      NP_DBL("schedule", tau),
      NP_SZ("schedule", inner_steps),
      NP_SZ("run", steps),
      NP_SZ("run", eval_every),
      NP_SZ("run", eval_contexts),
      Field{"run", "seeds", [](const ExperimentConfig& c) { return join(c.seeds); },
            [](ExperimentConfig& c, const std::string& v) {
              c.seeds.clear();
              for (const auto& s : split_list(v)) c.seeds.push_back(to_u64(s));
            }},
      NP_STR("run", output),
  };
  return f;
}

#undef NP_STR
#undef NP_DBL
#undef NP_SZ
#undef NP_BOOL

inline bool one_of(const std::string& v, std::initializer_list<const char*> options) {
  for (const char* o : options)
    if (v == o) return true;
  return false;
}

}  // namespace config_detail

/// Checks value ranges and cross-field consistency; throws ConfigError naming every offending key.
inline void validate(const ExperimentConfig& c) {
  using config_detail::one_of;
  std::vector<std::string> bad;
  if (!one_of(c.game_kind, {"rps", "matrix", "random_matrix", "lowrank"})) bad.push_back("game.kind");
  if (c.actions < 2) bad.push_back("game.actions");
  if (c.game_kind == "lowrank" && c.rank == 0) bad.push_back("game.rank");
  if (c.game_kind == "matrix" && c.game_file.empty() && c.matrix.size() != c.actions * c.actions)
    bad.push_back("game.matrix");
  if (!(c.beta > 0.0)) bad.push_back("spec.beta");
  if (!(c.beta_target >= 0.0)) bad.push_back("spec.beta_target");
  if (!(c.eta > 0.0)) bad.push_back("spec.eta");
  if (!c.reference.empty()) {
    double s = 0.0;
    bool pos = true;
    for (double v : c.reference) {
      s += v;
      pos = pos && v > 0.0;
    }
    if (!pos || std::abs(s - 1.0) > 1e-9) bad.push_back("spec.reference");
  }
  if (!one_of(c.policy_kind, {"tabular", "mlp"})) bad.push_back("policy.kind");
  if (c.policy_kind == "mlp") {
    for (auto h : c.hidden)
      if (h == 0) bad.push_back("policy.hidden");
    if (c.game_kind != "lowrank") bad.push_back("policy.kind");
  } else if (c.game_kind == "lowrank") {
    bad.push_back("policy.kind");
  }
  if (!one_of(c.init, {"reference", "random", "glorot"})) bad.push_back("policy.init");
  if (c.init == "glorot" && c.policy_kind != "mlp") bad.push_back("policy.init");
  if (!(c.init_scale >= 0.0)) bad.push_back("policy.init_scale");
  if (!one_of(c.algorithm, {"spg", "online_ipo", "pp_spg", "nash_prox"})) bad.push_back("schedule.algorithm");
  if (!one_of(c.optimizer, {"sgd", "adam"})) bad.push_back("schedule.optimizer");
  if (!one_of(c.lr_rule, {"constant", "inv_sqrt", "smoothness", "theory"})) bad.push_back("schedule.lr_rule");
  if ((c.lr_rule == "smoothness" || c.lr_rule == "theory") && c.policy_kind != "tabular")
    bad.push_back("schedule.lr_rule");
  if (!(c.lr > 0.0)) bad.push_back("schedule.lr");
  if (!one_of(c.batch_rule, {"fixed", "theory"})) bad.push_back("schedule.batch_rule");
  if (c.batch_rule == "theory" && c.policy_kind != "tabular") bad.push_back("schedule.batch_rule");
  if (c.batch_size == 0) bad.push_back("schedule.batch_size");
  if (!(c.kappa >= 0.0 && c.kappa <= 1.0)) bad.push_back("schedule.kappa");
  if (!(c.kappa_anneal >= 0.0)) bad.push_back("schedule.kappa_anneal");
  if (!(c.clip > 0.0)) bad.push_back("schedule.clip");
  if (!(c.update_scale > 0.0)) bad.push_back("schedule.update_scale");
  if (!one_of(c.ipo_target, {"centered", "uncentered"})) bad.push_back("schedule.ipo_target");
  if (c.improvement && c.policy_kind != "tabular") bad.push_back("schedule.improvement");
  if (!(c.tau >= 0.0 && c.tau <= 1.0)) bad.push_back("schedule.tau");
  if (c.algorithm == "pp_spg" && c.inner_steps == 0) bad.push_back("schedule.inner_steps");
  if (c.exact_gradient && c.algorithm == "online_ipo") bad.push_back("schedule.exact_gradient");
  if (c.eval_every == 0) bad.push_back("run.eval_every");
  if (c.game_kind == "lowrank" && c.eval_contexts == 0) bad.push_back("run.eval_contexts");
  if (!c.reference.empty() && c.game_file.empty() && c.game_kind != "rps" && c.reference.size() != c.actions)
    bad.push_back("spec.reference");
  if (c.game_kind == "rps" && c.actions != 3) bad.push_back("game.actions");
  if (c.seeds.empty()) bad.push_back("run.seeds");
  if (c.output.empty()) bad.push_back("run.output");
  if (!bad.empty()) {
    std::string msg = "invalid configuration keys:";
    for (const auto& k : bad) msg += " " + k;
    throw ConfigError(msg);
  }
}

inline std::string emit(const ExperimentConfig& c) {
  std::string out, section;
  for (const auto& f : config_detail::fields()) {
    if (f.section != section) {
      section = f.section;
      if (!out.empty()) out += '\n';
      out += "[" + section + "]\n";
    }
    out += f.key + " = " + f.get(c) + "\n";
  }
  return out;
}

/// Parses text on top of `base`; unknown keys and malformed values are reported together.
inline ExperimentConfig parse_config(const std::string& text, ExperimentConfig base = {}) {
  std::map<std::string, const config_detail::Field*> index;
  for (const auto& f : config_detail::fields()) index[f.section + "." + f.key] = &f;
  std::vector<std::string> bad;
  std::string section;
  std::istringstream is(text);
  for (std::string line; std::getline(is, line);) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = config_detail::trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("malformed section header: " + line);
      section = config_detail::trim(line.substr(1, line.size() - 2));
      continue;
    }
    // Run headers append computed values; they are output only.
    if (section == "constants") continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("expected key = value: " + line);
    const std::string key = section + "." + config_detail::trim(line.substr(0, eq));
    const std::string val = config_detail::trim(line.substr(eq + 1));
    const auto it = index.find(key);
    if (it == index.end()) {
      bad.push_back(key);
      continue;
    }
    try {
      it->second->set(base, val);
    } catch (const std::exception&) {
      bad.push_back(key);
    }
  }
  if (!bad.empty()) {
    std::string msg = "invalid configuration keys:";
    for (const auto& k : bad) msg += " " + k;
    throw ConfigError(msg);
  }
  return base;
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline ExperimentConfig load_config(const std::string& path) { return parse_config(read_text_file(path)); }

// ---------------------------------------------------------------------------
// Presets

inline std::vector<double> rps_reference() { return {11.0 / 18.0, 1.0 / 3.0, 1.0 / 18.0}; }

inline std::vector<std::string> preset_names() {
  return {"rps-exact-spg",  "rps-stochastic-spg", "rps-nashprox",       "rps-stochastic-nashprox",
          "rps-pp-spg",     "lowrank-nashprox",   "lowrank-online-ipo", "theory-spg"};
}

inline ExperimentConfig preset(const std::string& name) {
  ExperimentConfig c;
  if (name.rfind("rps-", 0) == 0) {
    c.game_kind = "rps";
    c.actions = 3;
    c.beta = 0.01;
    c.reference = rps_reference();
    c.policy_kind = "tabular";
    c.init = "reference";
    c.lr_rule = "inv_sqrt";
    c.steps = 200000;
    c.eval_every = 1000;
    c.eval_contexts = 1;
    c.batch_size = 32;
    c.output = "runs/" + name;
    // Updates are scaled to match an IPO-style loss multiplied by its regularization.
    if (name == "rps-exact-spg" || name == "rps-stochastic-spg") {
      c.algorithm = "spg";
      c.update_scale = 4.0;
      c.exact_gradient = name == "rps-exact-spg";
      c.lr = c.exact_gradient ? 1.0 : 0.2;
      return c;
    }
    if (name == "rps-nashprox" || name == "rps-stochastic-nashprox") {
      c.algorithm = "nash_prox";
      c.beta_target = 10.0 * c.beta;
      c.update_scale = c.beta + c.beta_target;
      c.kappa = 10.0 / static_cast<double>(c.steps);
      c.exact_gradient = name == "rps-nashprox";
      c.lr = c.exact_gradient ? 1.0 : 0.2;
      return c;
    }
    if (name == "rps-pp-spg") {
      c.algorithm = "pp_spg";
      c.eta = 1.0;
      c.exact_gradient = true;
      c.update_scale = 4.0;
      c.lr_rule = "constant";
      c.lr = 0.2;
      c.inner_steps = 1000;
      c.steps = 20000;
      return c;
    }
  }
  if (name == "lowrank-nashprox" || name == "lowrank-online-ipo") {
    c.game_kind = "lowrank";
    c.actions = 100;
    c.rank = 2;
    c.beta = 0.01;
    c.reference.clear();
    c.policy_kind = "mlp";
    c.hidden = {128, 128};
    c.init = "glorot";
    c.optimizer = "adam";
    c.lr_rule = "constant";
    c.lr = 3e-4;
    c.batch_size = 128;
    c.exact_feedback = true;
    c.steps = 2000;
    c.eval_every = 100;
    c.eval_contexts = 512;
    c.seeds.clear();
    for (std::uint64_t s = 1; s <= 25; ++s) c.seeds.push_back(s);
    c.output = "runs/" + name;
    if (name == "lowrank-nashprox") {
      c.algorithm = "nash_prox";
      c.beta_target = 10.0 * c.beta;
      c.kappa_anneal = 0.3;
    } else {
      c.algorithm = "online_ipo";
    }
    return c;
  }
  if (name == "theory-spg") {
    c.game_kind = "random_matrix";
    c.actions = 10;
    c.beta = 4.0;
    c.reference.clear();
    c.policy_kind = "tabular";
    c.init = "random";
    c.init_scale = 3.0;
    c.algorithm = "spg";
    c.lr_rule = "smoothness";
    c.exact_gradient = true;
    c.improvement = true;
    c.tau = 0.0;
    c.steps = 200;
    c.eval_every = 1;
    c.eval_contexts = 1;
    c.output = "runs/" + name;
    return c;
  }
  throw ConfigError("unknown preset: " + name);
}

// ---------------------------------------------------------------------------
// Game definition files
//
//   kind = matrix            kind = lowrank
//   actions = 3              actions = 100
//   matrix = p00, p01, ...   rank = 2
//                            u = row-major Y x r entries
//                            v = row-major Y x r entries

inline PreferenceGame parse_game(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream is(text);
  for (std::string line; std::getline(is, line);) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = config_detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("game file: expected key = value: " + line);
    kv[config_detail::trim(line.substr(0, eq))] = config_detail::trim(line.substr(eq + 1));
  }
  auto need = [&](const char* k) -> const std::string& {
    const auto it = kv.find(k);
    if (it == kv.end()) throw ConfigError(std::string("game file: missing ") + k);
    return it->second;
  };
  auto numbers = [&](const char* k) {
    std::vector<double> out;
    for (const auto& s : config_detail::split_list(need(k))) out.push_back(config_detail::to_double(s));
    return out;
  };
  const std::string kind = need("kind");
  const auto y = static_cast<std::size_t>(config_detail::to_u64(need("actions")));
  if (kind == "matrix") {
    auto m = numbers("matrix");
    if (m.size() != y * y) throw ConfigError("game file: matrix needs actions^2 entries");
    Matrix p(y, y);
    p.data = std::move(m);
    return PreferenceGame(MatrixPreferenceGame(std::move(p)));
  }
  if (kind == "lowrank") {
    const auto r = static_cast<std::size_t>(config_detail::to_u64(need("rank")));
    auto u = numbers("u"), v = numbers("v");
    if (u.size() != y * r || v.size() != y * r) throw ConfigError("game file: u and v need actions*rank entries");
    Matrix um(y, r), vm(y, r);
    um.data = std::move(u);
    vm.data = std::move(v);
    return PreferenceGame(LowRankContextualGame(std::move(um), std::move(vm)));
  }
  throw ConfigError("game file: unknown kind " + kind);
}

inline std::string emit_game(const PreferenceGame& game) {
  std::string out;
  if (const auto* m = game.as_matrix()) {
    out += "kind = matrix\nactions = " + std::to_string(m->num_actions()) + "\n";
    out += "matrix = " + config_detail::join(m->matrix().data) + "\n";
    return out;
  }
  const auto* g = game.as_low_rank();
  out += "kind = lowrank\nactions = " + std::to_string(g->num_actions()) + "\n";
  out += "rank = " + std::to_string(g->rank()) + "\n";
  out += "u = " + config_detail::join(g->u().data) + "\n";
  out += "v = " + config_detail::join(g->v().data) + "\n";
  return out;
}

}  // namespace nashprox
